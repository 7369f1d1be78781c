#pragma once

#include <cfct/encoder.hpp>
#include <cfct/ingest.hpp>
#include <cfct/trainer.hpp>

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cfct {

inline const std::vector<std::size_t> kDefaultCutoffs{5, 10, 20};

struct MetricsAtK {
  double precision = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
};

struct RankingReport {
  std::map<std::size_t, double> precision;
  std::map<std::size_t, double> recall;
  std::map<std::size_t, double> ndcg;
  std::size_t num_evaluated_users = 0;
};

// Highest-scoring k_max items for u, train positives excluded, ties by ascending item id.
std::vector<ItemId> rank_for_user(const EmbeddingTable& table, const InteractionDataset& data,
                                  UserId u, std::size_t k_max, Similarity similarity);

// test_pos must be sorted ascending and non-empty; topk must hold at least K items.
MetricsAtK metrics_at_k(std::span<const ItemId> topk, std::span<const ItemId> test_pos,
                        std::size_t K);

// Macro average over users with a non-empty test set. threads = 0 uses all cores; the
// result does not depend on the thread count.
RankingReport evaluate(const EmbeddingTable& table, const InteractionDataset& data,
                       std::span<const std::size_t> cutoffs, Similarity similarity,
                       std::size_t threads = 1);

// metric,K,value
void write_metrics_csv(std::ostream& out, const RankingReport& report);
std::string metrics_json(const RankingReport& report);

} // namespace cfct
