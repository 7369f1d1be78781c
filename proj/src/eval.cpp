#include <cfct/eval.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <thread>

namespace cfct {

namespace {

// Per-item scores for one user under the given similarity. Cosine drops the user norm,
// which is constant per user and does not change the ordering.
void score_all(const EmbeddingTable& table, UserId u, Similarity similarity,
               std::span<const double> item_norms, std::vector<double>& scores) {
  const auto uv = table.user(u);
  scores.resize(table.num_items());
  for (ItemId i = 0; i < table.num_items(); ++i) {
    const double s = dot(uv, table.item(i));
    if (similarity == Similarity::Dot) {
      scores[i] = s;
    } else {
      scores[i] = item_norms[i] > 0.0 ? s / item_norms[i] : 0.0;
    }
  }
}

std::vector<double> item_norms_for(const EmbeddingTable& table, Similarity similarity) {
  std::vector<double> norms;
  if (similarity == Similarity::Cosine) {
    norms.resize(table.num_items());
    for (ItemId i = 0; i < table.num_items(); ++i) norms[i] = norm(table.item(i));
  }
  return norms;
}

std::vector<ItemId> top_k(std::span<const double> scores, std::span<const ItemId> excluded,
                          std::size_t k) {
  std::vector<ItemId> candidates;
  candidates.reserve(scores.size());
  auto ex = excluded.begin();
  for (ItemId i = 0; i < scores.size(); ++i) {
    while (ex != excluded.end() && *ex < i) ++ex;
    if (ex != excluded.end() && *ex == i) continue;
    candidates.push_back(i);
  }
  k = std::min(k, candidates.size());
  auto better = [&](ItemId a, ItemId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), better);
  candidates.resize(k);
  return candidates;
}

// Missing positions past the end of a short list count as misses.
MetricsAtK metrics_impl(std::span<const ItemId> topk, std::span<const ItemId> test_pos,
                        std::size_t K) {
  std::size_t hits = 0;
  double dcg = 0.0;
  const std::size_t depth = std::min(K, topk.size());
  for (std::size_t r = 0; r < depth; ++r) {
    if (std::binary_search(test_pos.begin(), test_pos.end(), topk[r])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(K, test_pos.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);

  MetricsAtK m;
  m.precision = static_cast<double>(hits) / static_cast<double>(K);
  m.recall = static_cast<double>(hits) / static_cast<double>(test_pos.size());
  m.ndcg = dcg / idcg;
  return m;
}

} // namespace

std::vector<ItemId> rank_for_user(const EmbeddingTable& table, const InteractionDataset& data,
                                  UserId u, std::size_t k_max, Similarity similarity) {
  if (u >= data.num_users) throw Error("user id " + std::to_string(u) + " out of range");
  const auto& excluded = data.train_pos[u];
  if (k_max > data.num_items - excluded.size()) {
    throw UsageError("k_max exceeds the number of rankable items");
  }
  std::vector<double> scores;
  score_all(table, u, similarity, item_norms_for(table, similarity), scores);
  return top_k(scores, excluded, k_max);
}

MetricsAtK metrics_at_k(std::span<const ItemId> topk, std::span<const ItemId> test_pos,
                        std::size_t K) {
  if (test_pos.empty()) throw UsageError("metrics need a non-empty test set");
  if (K == 0) throw UsageError("cutoff K must be >= 1");
  if (topk.size() < K) throw UsageError("top-k list shorter than K");
  return metrics_impl(topk, test_pos, K);
}

RankingReport evaluate(const EmbeddingTable& table, const InteractionDataset& data,
                       std::span<const std::size_t> cutoffs, Similarity similarity,
                       std::size_t threads) {
  if (cutoffs.empty()) throw UsageError("no cutoffs given");
  for (auto K : cutoffs) {
    if (K == 0) throw UsageError("cutoff K must be >= 1");
  }
  const std::size_t k_max = *std::max_element(cutoffs.begin(), cutoffs.end());
  const auto norms = item_norms_for(table, similarity);

  // per_user[u * |cutoffs| + c]
  std::vector<MetricsAtK> per_user(data.num_users * cutoffs.size());
  auto work = [&](UserId lo, UserId hi) {
    std::vector<double> scores;
    for (UserId u = lo; u < hi; ++u) {
      if (data.test_pos[u].empty()) continue;
      score_all(table, u, similarity, norms, scores);
      const auto top = top_k(scores, data.train_pos[u], k_max);
      for (std::size_t c = 0; c < cutoffs.size(); ++c) {
        per_user[u * cutoffs.size() + c] = metrics_impl(top, data.test_pos[u], cutoffs[c]);
      }
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<std::size_t>(threads, std::max<std::size_t>(1, data.num_users));
  if (threads <= 1) {
    work(0, static_cast<UserId>(data.num_users));
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (data.num_users + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const auto lo = static_cast<UserId>(std::min(data.num_users, t * per));
      const auto hi = static_cast<UserId>(std::min(data.num_users, (t + 1) * per));
      pool.emplace_back(work, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  RankingReport report;
  for (auto K : cutoffs) {
    report.precision[K] = 0.0;
    report.recall[K] = 0.0;
    report.ndcg[K] = 0.0;
  }
  // Fixed summation order (by user id) keeps the averages independent of scheduling.
  for (UserId u = 0; u < data.num_users; ++u) {
    if (data.test_pos[u].empty()) continue;
    ++report.num_evaluated_users;
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      const auto& m = per_user[u * cutoffs.size() + c];
      report.precision[cutoffs[c]] += m.precision;
      report.recall[cutoffs[c]] += m.recall;
      report.ndcg[cutoffs[c]] += m.ndcg;
    }
  }
  if (report.num_evaluated_users > 0) {
    const double n = static_cast<double>(report.num_evaluated_users);
    for (auto* metric : {&report.precision, &report.recall, &report.ndcg}) {
      for (auto& [_, v] : *metric) v /= n;
    }
  }
  return report;
}

void write_metrics_csv(std::ostream& out, const RankingReport& report) {
  const auto old_precision = out.precision(17);
  out << "metric,K,value\n";
  auto rows = [&](const char* name, const std::map<std::size_t, double>& values) {
    for (const auto& [K, v] : values) out << name << ',' << K << ',' << v << '\n';
  };
  rows("precision", report.precision);
  rows("recall", report.recall);
  rows("ndcg", report.ndcg);
  out.precision(old_precision);
}

std::string metrics_json(const RankingReport& report) {
  nlohmann::ordered_json j;
  j["num_evaluated_users"] = report.num_evaluated_users;
  auto put = [&](const char* name, const std::map<std::size_t, double>& values) {
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    for (const auto& [K, v] : values) m[std::to_string(K)] = v;
    j[name] = m;
  };
  put("precision", report.precision);
  put("recall", report.recall);
  put("ndcg", report.ndcg);
  return j.dump();
}

} // namespace cfct
