#include <cfct/augment.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace cfct {

void sample_without_replacement(std::span<const ItemId> pool, std::size_t M, Rng& rng,
                                std::vector<ItemId>& out) {
  const std::size_t n = pool.size();
  const std::size_t m = std::min(M, n);
  out.clear();
  if (m == n) {
    out.assign(pool.begin(), pool.end());
  } else if (2 * m <= n) {
    // Few draws from many: reject repeats against the (short) output list.
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (out.size() < m) {
      const ItemId candidate = pool[pick(rng)];
      if (std::find(out.begin(), out.end(), candidate) == out.end()) out.push_back(candidate);
    }
  } else {
    std::vector<ItemId> shuffled(pool.begin(), pool.end());
    for (std::size_t k = 0; k < m; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, n - 1);
      std::swap(shuffled[k], shuffled[pick(rng)]);
    }
    out.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(m));
  }
}

void interest_center_into(const EmbeddingTable& table, std::span<const ItemId> train_pos,
                          std::size_t M, Rng& rng, InterestCenter& out) {
  if (train_pos.empty()) throw Error("user has no positives");
  if (M == 0) throw UsageError("M must be >= 1");
  sample_without_replacement(train_pos, M, rng, out.source_items);
  const std::size_t m = out.source_items.size();
  const auto& chosen = out.source_items;

  const std::size_t d = table.dim();
  out.vec.assign(d, 0.0);
  for (ItemId i : chosen) {
    auto row = table.item(i);
    for (std::size_t k = 0; k < d; ++k) out.vec[k] += row[k];
  }
  const double inv = 1.0 / static_cast<double>(m);
  for (double& v : out.vec) v *= inv;
}

InterestCenter interest_center(const EmbeddingTable& table, std::span<const ItemId> train_pos,
                               std::size_t M, Rng& rng) {
  InterestCenter center;
  interest_center_into(table, train_pos, M, rng, center);
  return center;
}

namespace {

bool contains(std::span<const ItemId> sorted, ItemId i) {
  return std::binary_search(sorted.begin(), sorted.end(), i);
}

std::size_t available_negatives(std::span<const ItemId> train_pos, std::size_t num_items) {
  return train_pos.size() >= num_items ? 0 : num_items - train_pos.size();
}

// The k-th item (0-based) of the complement of sorted train_pos.
ItemId nth_negative(std::span<const ItemId> train_pos, std::size_t k) {
  std::size_t lo = k, hi = k + train_pos.size();
  // Smallest id x with x - |{p <= x}| == k and x not positive.
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    const auto below = static_cast<std::size_t>(
        std::upper_bound(train_pos.begin(), train_pos.end(), static_cast<ItemId>(mid)) -
        train_pos.begin());
    if (mid + 1 - below > k) hi = mid;
    else lo = mid + 1;
  }
  return static_cast<ItemId>(lo);
}

// is_positive(j) must agree with membership in train_pos.
template <class IsPositive>
ItemId draw_negative(std::span<const ItemId> train_pos, std::size_t num_items, Rng& rng,
                     IsPositive is_positive) {
  const std::size_t available = available_negatives(train_pos, num_items);
  if (available * 4 < num_items) {
    // Dense users: rejection would loop too long, index the complement directly.
    std::uniform_int_distribution<std::size_t> pick(0, available - 1);
    return nth_negative(train_pos, pick(rng));
  }
  std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(num_items - 1));
  while (true) {
    const ItemId j = pick(rng);
    if (!is_positive(j)) return j;
  }
}

template <class IsPositive>
std::array<ItemId, 2> draw_negative_pair(std::span<const ItemId> train_pos,
                                         std::size_t num_items, Rng& rng,
                                         IsPositive is_positive) {
  if (available_negatives(train_pos, num_items) < 2) {
    throw Error("fewer than 2 negative items available");
  }
  const ItemId j = draw_negative(train_pos, num_items, rng, is_positive);
  ItemId jp = draw_negative(train_pos, num_items, rng, is_positive);
  while (jp == j) jp = draw_negative(train_pos, num_items, rng, is_positive);
  return {j, jp};
}

} // namespace

ItemId sample_negative(std::span<const ItemId> train_pos, std::size_t num_items, Rng& rng) {
  if (available_negatives(train_pos, num_items) < 1) throw Error("no negative items available");
  return draw_negative(train_pos, num_items, rng,
                       [&](ItemId j) { return contains(train_pos, j); });
}

std::array<ItemId, 2> sample_negative_pair(std::span<const ItemId> train_pos,
                                           std::size_t num_items, Rng& rng) {
  return draw_negative_pair(train_pos, num_items, rng,
                            [&](ItemId j) { return contains(train_pos, j); });
}

PositiveIndex::PositiveIndex(const std::vector<std::vector<ItemId>>& train_pos,
                             std::size_t num_items)
    : train_pos_(&train_pos), num_items_(num_items), words_((num_items + 63) / 64),
      bits_(train_pos.size() * words_, 0) {
  for (std::size_t u = 0; u < train_pos.size(); ++u) {
    for (ItemId i : train_pos[u]) {
      if (i >= num_items) throw Error("positive item id out of range");
      bits_[u * words_ + (i >> 6)] |= std::uint64_t{1} << (i & 63u);
    }
  }
}

ItemId sample_negative(const PositiveIndex& index, UserId u, Rng& rng) {
  const auto pos = index.positives(u);
  if (available_negatives(pos, index.num_items()) < 1) {
    throw Error("no negative items available");
  }
  return draw_negative(pos, index.num_items(), rng,
                       [&](ItemId j) { return index.contains(u, j); });
}

std::array<ItemId, 2> sample_negative_pair(const PositiveIndex& index, UserId u, Rng& rng) {
  return draw_negative_pair(index.positives(u), index.num_items(), rng,
                            [&](ItemId j) { return index.contains(u, j); });
}

NegativeChoice label_negative(std::array<ItemId, 2> candidates, double score_first,
                              double score_second, double alpha, Rng& rng) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  NegativeChoice choice;
  choice.candidates = candidates;
  choice.took_max = unit(rng) < alpha;
  bool first_is_max;
  if (score_first == score_second) {
    first_is_max = (rng() & 1u) != 0;
  } else {
    first_is_max = score_first > score_second;
  }
  choice.selected = (first_is_max == choice.took_max) ? candidates[0] : candidates[1];
  return choice;
}

std::vector<double> relative_rank(std::span<const double> scores) {
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(scores.size());
  std::vector<double> ranks(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const auto at_or_below = std::upper_bound(sorted.begin(), sorted.end(), scores[j]) -
                             sorted.begin();
    ranks[j] = static_cast<double>(at_or_below) / n;
  }
  return ranks;
}

std::vector<double> lemma2_exact_distribution(std::span<const double> scores, double alpha) {
  const std::size_t n = scores.size();
  if (n < 2) throw UsageError("need at least 2 items");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
  std::vector<double> mass(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (scores[a] == scores[b]) {
        mass[a] += 0.5;
        mass[b] += 0.5;
      } else {
        const std::size_t hi = scores[a] > scores[b] ? a : b;
        const std::size_t lo = hi == a ? b : a;
        mass[hi] += alpha;
        mass[lo] += 1.0 - alpha;
      }
    }
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  for (double& m : mass) m /= pairs;
  return mass;
}

AffineFit fit_affine(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 3) throw Error("affine fit needs >= 3 paired points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx == 0.0) throw Error("affine fit needs non-constant x");
  AffineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double r = y[k] - (fit.intercept + fit.slope * x[k]);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.slope_stderr = std::sqrt(ss_res / static_cast<double>(n - 2) / sxx);
  return fit;
}

Lemma2Report lemma2_monte_carlo(std::span<const double> scores, double alpha,
                                std::uint64_t trials, Rng& rng) {
  if (trials < kMinLemma2Trials) throw UsageError("need at least 10^4 trials");
  const std::size_t n = scores.size();
  if (n < 3) throw UsageError("need at least 3 items for the affine fit");

  Lemma2Report report;
  report.scores.assign(scores.begin(), scores.end());
  report.relative_rank = relative_rank(scores);
  report.counts.assign(n, 0);
  report.trials = trials;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const auto pair = sample_negative_pair({}, n, rng);
    const auto choice = label_negative(pair, scores[pair[0]], scores[pair[1]], alpha, rng);
    ++report.counts[choice.selected];
  }
  report.empirical_freq.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    report.empirical_freq[j] =
        static_cast<double>(report.counts[j]) / static_cast<double>(trials);
  }
  report.fit = fit_affine(report.relative_rank, report.empirical_freq);
  return report;
}

double max_binomial_z(const Lemma2Report& report, std::span<const double> exact) {
  double worst = 0.0;
  const double trials = static_cast<double>(report.trials);
  for (std::size_t j = 0; j < exact.size(); ++j) {
    const double p = exact[j];
    const double f = report.empirical_freq[j];
    if (p <= 0.0 || p >= 1.0) {
      if (f != p) return std::numeric_limits<double>::infinity();
      continue;
    }
    worst = std::max(worst, std::abs(f - p) / std::sqrt(p * (1.0 - p) / trials));
  }
  return worst;
}

void write_lemma2_csv(std::ostream& out, const Lemma2Report& report,
                      std::span<const double> exact) {
  const auto old_precision = out.precision(17);
  out << "item_id,score,relative_rank,exact_prob,empirical_freq\n";
  for (std::size_t j = 0; j < report.scores.size(); ++j) {
    out << j << ',' << report.scores[j] << ',' << report.relative_rank[j] << ','
        << exact[j] << ',' << report.empirical_freq[j] << '\n';
  }
  out.precision(old_precision);
}

} // namespace cfct
