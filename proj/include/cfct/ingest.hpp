#pragma once

#include <cfct/common.hpp>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cfct {

enum class InputFormat {
  Tsv4,  // user<TAB>item<TAB>rating<TAB>timestamp (MovieLens u.data)
  Csv3,  // user,item,rating with an optional header row
};

InputFormat parse_input_format(const std::string& name);
std::string to_string(InputFormat format);

struct RawInteraction {
  std::string user_token;
  std::string item_token;
  std::optional<double> weight;
};

// Bijection between external tokens and dense ids assigned in first-appearance order.
class IdMap {
public:
  std::uint32_t intern(const std::string& token);
  std::uint32_t encode(const std::string& token) const;
  const std::string& decode(std::uint32_t id) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  std::size_t size() const noexcept { return tokens_.size(); }

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// Implicit-feedback interactions split into per-user train and test sets.
// Every list is sorted ascending and duplicate free; train and test are disjoint.
// Immutable after construction.
struct InteractionDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<std::vector<ItemId>> train_pos;
  std::vector<std::vector<ItemId>> test_pos;
  IdMap users;
  IdMap items;

  std::size_t num_train_interactions() const;
  std::size_t num_test_interactions() const;
  bool is_train_positive(UserId u, ItemId i) const;
};

// Ratings of any value count as positive feedback. Blank lines are skipped.
std::vector<RawInteraction> parse_interactions(std::istream& in, InputFormat format);
std::vector<RawInteraction> load_interactions(const std::string& path, InputFormat format);

// Per-user random split: floor(test_fraction * n_u) test items per user, the rest train.
// Deterministic given seed.
InteractionDataset build_dataset(std::span<const RawInteraction> raw, double test_fraction,
                                 std::uint64_t seed);

// Carves a validation split out of a dataset's train sets with the same per-user rule.
// The returned dataset keeps the id maps; its test sets are the held-out train items.
InteractionDataset holdout_from_train(const InteractionDataset& data, double fraction,
                                      std::uint64_t seed);

std::string split_manifest_json(const InteractionDataset& data, double test_fraction,
                                std::uint64_t seed);

} // namespace cfct
