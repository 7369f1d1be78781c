#pragma once

#include <cfct/augment.hpp>
#include <cfct/common.hpp>
#include <cfct/encoder.hpp>
#include <cfct/ingest.hpp>

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cfct {

enum class LossKind { Bpr, InfoNce, Dcl, Hcl, Proposed };

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

// Baselines score with the inner product; the interest-center objective with cosine.
enum class Similarity { Dot, Cosine };

Similarity similarity_for(LossKind kind);

struct HyperParams {
  std::size_t dim = 64;
  std::size_t M = 4;
  double alpha = 1.0;
  double tau = 0.2;
  std::size_t num_negatives = 8;
  double beta = 1.0;
  double tau_plus = 0.1;
  std::size_t dcl_extra_positives = 1;
  double lr = 0.05;
  double l2 = 1e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 1;
  std::uint64_t seed = 42;
  LossKind loss = LossKind::Proposed;

  // Throws UsageError naming the offending field.
  void validate() const;
};

struct AugmentedTriple {
  UserId user = 0;
  InterestCenter center;
  NegativeChoice neg_choice;
};

// Per-step scratch buffers, reused across steps to keep the hot loop allocation free.
// A step writes one gradient row per distinct touched embedding row before applying them.
struct StepWorkspace {
  std::vector<std::uint64_t> row_keys;  // high word 0 = user row, 1 = item row; low word = id
  std::vector<double> row_grads;        // row_keys.size() x dim, row-major
  std::vector<double> scores;
  std::vector<double> extra_scores;
  std::vector<ItemId> negs;
  std::vector<ItemId> extras;
  std::vector<double> scratch;
  AugmentedTriple triple;
};

// Row keys used in StepWorkspace::row_keys.
inline constexpr std::uint64_t kItemRowTag = std::uint64_t{1} << 32;
inline std::uint64_t user_row_key(UserId u) { return u; }
inline std::uint64_t item_row_key(ItemId i) { return kItemRowTag | i; }

// Draws the augmented instance for user u: fresh interest center and labeled negative.
// Candidates are compared by cosine / tau, the similarity the objective trains.
void sample_augmented_triple(const EmbeddingTable& table, const InteractionDataset& data,
                             UserId u, const HyperParams& hp, Rng& rng, AugmentedTriple& out);

// Analytic gradients of one instance, written to ws.row_keys / ws.row_grads without touching
// the table. Weight decay is not included. Returns the loss.
double proposed_gradients(const EmbeddingTable& table, const AugmentedTriple& triple,
                          const HyperParams& hp, StepWorkspace& ws);
double baseline_gradients(const EmbeddingTable& table, UserId u, ItemId i,
                          std::span<const ItemId> negs, const HyperParams& hp,
                          StepWorkspace& ws, std::span<const ItemId> extra_pos = {});

// v <- v - lr * (g + l2 * v) for every row in ws.
void apply_gradients(EmbeddingTable& table, const StepWorkspace& ws, const HyperParams& hp);

// One SGD step (with weight decay on the touched rows) on the interest-center objective.
// Returns the loss before the update.
double train_step_proposed(EmbeddingTable& table, const AugmentedTriple& triple,
                           const HyperParams& hp, StepWorkspace& ws);
double train_step_proposed(EmbeddingTable& table, const AugmentedTriple& triple,
                           const HyperParams& hp);

// One SGD step on a dot-product baseline loss. extra_pos feeds the positive expectation of
// DCL/HCL; when empty the anchoring positive i is used.
double train_step_baseline(EmbeddingTable& table, UserId u, ItemId i,
                           std::span<const ItemId> negs, const HyperParams& hp,
                           StepWorkspace& ws, std::span<const ItemId> extra_pos = {});
double train_step_baseline(EmbeddingTable& table, UserId u, ItemId i,
                           std::span<const ItemId> negs, const HyperParams& hp,
                           std::span<const ItemId> extra_pos = {});

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::string checkpoint_path;
};

struct TrainOptions {
  bool parallel = false;
  std::size_t threads = 0;  // 0: hardware concurrency
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainResult {
  EmbeddingTable table;
  TrainReport report;
};

// Each epoch visits every training interaction once in a shuffled order and takes one step
// anchored on it. Sequential mode is bit-deterministic given hp.seed.
TrainResult run_training(const InteractionDataset& data, const HyperParams& hp,
                         const TrainOptions& options = {});

// {"epoch":..,"mean_loss":..,"seconds":..} per line.
void write_train_jsonl(std::ostream& out, const TrainReport& report);

} // namespace cfct
