#pragma once

#include <cfct/common.hpp>
#include <cfct/encoder.hpp>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace cfct {

// Mean of the embeddings of up to M positives sampled without replacement.
struct InterestCenter {
  std::vector<double> vec;
  std::vector<ItemId> source_items;
};

struct NegativeChoice {
  std::array<ItemId, 2> candidates{};
  ItemId selected = 0;
  bool took_max = false;
};

// min(M, |pool|) distinct entries of pool drawn uniformly without replacement.
void sample_without_replacement(std::span<const ItemId> pool, std::size_t M, Rng& rng,
                                std::vector<ItemId>& out);

// train_pos must be sorted ascending. Samples min(M, |train_pos|) distinct positives.
InterestCenter interest_center(const EmbeddingTable& table, std::span<const ItemId> train_pos,
                               std::size_t M, Rng& rng);

// Same as interest_center but reuses caller storage; used on the training hot path.
void interest_center_into(const EmbeddingTable& table, std::span<const ItemId> train_pos,
                          std::size_t M, Rng& rng, InterestCenter& out);

// Two distinct items drawn uniformly from the complement of the sorted train_pos.
std::array<ItemId, 2> sample_negative_pair(std::span<const ItemId> train_pos,
                                           std::size_t num_items, Rng& rng);

// A single uniform item outside the sorted train_pos.
ItemId sample_negative(std::span<const ItemId> train_pos, std::size_t num_items, Rng& rng);

// One bit per (user, item) marking train positives. Keeps a reference to the lists it was
// built from, which must outlive it.
class PositiveIndex {
public:
  PositiveIndex(const std::vector<std::vector<ItemId>>& train_pos, std::size_t num_items);

  bool contains(UserId u, ItemId i) const {
    return (bits_[u * words_ + (i >> 6)] >> (i & 63u)) & 1u;
  }
  std::span<const ItemId> positives(UserId u) const { return (*train_pos_)[u]; }
  std::size_t num_items() const { return num_items_; }

private:
  const std::vector<std::vector<ItemId>>* train_pos_;
  std::size_t num_items_;
  std::size_t words_;
  std::vector<std::uint64_t> bits_;
};

// Same draws as the span overloads for the same generator state, with O(1) membership tests.
std::array<ItemId, 2> sample_negative_pair(const PositiveIndex& index, UserId u, Rng& rng);
ItemId sample_negative(const PositiveIndex& index, UserId u, Rng& rng);

// With probability alpha keep the higher-scored candidate, otherwise the lower one.
// Exact ties are broken by a fair coin.
NegativeChoice label_negative(std::array<ItemId, 2> candidates, double score_first,
                              double score_second, double alpha, Rng& rng);

// r_j = |{l : s_l <= s_j}| / n.
std::vector<double> relative_rank(std::span<const double> scores);

// Exact probability that each item ends up as the labeled negative when the pair is a
// uniform unordered pair of distinct items. Enumerates all n(n-1)/2 pairs.
std::vector<double> lemma2_exact_distribution(std::span<const double> scores, double alpha);

struct AffineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_stderr = 0.0;

  double slope_t() const { return slope_stderr > 0.0 ? slope / slope_stderr : 0.0; }
};

AffineFit fit_affine(std::span<const double> x, std::span<const double> y);

struct Lemma2Report {
  std::vector<double> scores;
  std::vector<double> relative_rank;
  std::vector<double> empirical_freq;
  std::vector<std::uint64_t> counts;
  std::uint64_t trials = 0;
  AffineFit fit;
};

inline constexpr std::uint64_t kMinLemma2Trials = 10'000;

Lemma2Report lemma2_monte_carlo(std::span<const double> scores, double alpha,
                                std::uint64_t trials, Rng& rng);

// Largest per-item |freq - p| / sqrt(p (1 - p) / trials). An item with p in {0, 1} that
// deviates at all yields +infinity.
double max_binomial_z(const Lemma2Report& report, std::span<const double> exact);

// Columns: item_id,score,relative_rank,exact_prob,empirical_freq
void write_lemma2_csv(std::ostream& out, const Lemma2Report& report,
                      std::span<const double> exact);

} // namespace cfct
