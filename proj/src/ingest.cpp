#include <cfct/ingest.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <string_view>
#include <unordered_set>

namespace cfct {

InputFormat parse_input_format(const std::string& name) {
  if (name == "tsv-4col" || name == "tsv") return InputFormat::Tsv4;
  if (name == "csv-3col" || name == "csv") return InputFormat::Csv3;
  throw UsageError("unknown input format '" + name + "' (expected tsv-4col or csv-3col)");
}

std::string to_string(InputFormat format) {
  return format == InputFormat::Tsv4 ? "tsv-4col" : "csv-3col";
}

std::uint32_t IdMap::intern(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, static_cast<std::uint32_t>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::uint32_t IdMap::encode(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw Error("unknown token '" + token + "'");
  return it->second;
}

const std::string& IdMap::decode(std::uint32_t id) const {
  if (id >= tokens_.size()) throw Error("id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::size_t InteractionDataset::num_train_interactions() const {
  std::size_t n = 0;
  for (const auto& items : train_pos) n += items.size();
  return n;
}

std::size_t InteractionDataset::num_test_interactions() const {
  std::size_t n = 0;
  for (const auto& items : test_pos) n += items.size();
  return n;
}

bool InteractionDataset::is_train_positive(UserId u, ItemId i) const {
  const auto& items = train_pos.at(u);
  return std::binary_search(items.begin(), items.end(), i);
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

} // namespace

std::vector<RawInteraction> parse_interactions(std::istream& in, InputFormat format) {
  const char sep = format == InputFormat::Tsv4 ? '\t' : ',';
  const std::size_t expected = format == InputFormat::Tsv4 ? 4 : 3;

  std::vector<RawInteraction> out;
  std::string line;
  std::size_t line_no = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;

    auto fields = split(view, sep);
    for (auto& f : fields) f = trim(f);
    if (fields.size() != expected) {
      throw ParseError(line_no, "expected " + std::to_string(expected) + " fields, got " +
                                    std::to_string(fields.size()));
    }

    const bool first = !seen_content;
    seen_content = true;

    std::optional<double> weight;
    if (!fields[2].empty()) {
      weight = parse_number(fields[2]);
      if (!weight) {
        if (format == InputFormat::Csv3 && first) continue;  // header row
        throw ParseError(line_no, "rating '" + std::string(fields[2]) + "' is not numeric");
      }
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError(line_no, "empty user or item token");
    }
    if (format == InputFormat::Tsv4 && !parse_number(fields[3])) {
      throw ParseError(line_no, "timestamp '" + std::string(fields[3]) + "' is not numeric");
    }
    out.push_back({std::string(fields[0]), std::string(fields[1]), weight});
  }
  return out;
}

std::vector<RawInteraction> load_interactions(const std::string& path, InputFormat format) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open dataset file: " + path);
  return parse_interactions(in, format);
}

namespace {

// floor(fraction * n) with a guard against products like 0.29 * 100 = 28.999...
std::size_t test_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

void split_user(std::vector<ItemId> items, double fraction, Rng& rng,
                std::vector<ItemId>& train, std::vector<ItemId>& test) {
  std::shuffle(items.begin(), items.end(), rng);
  std::size_t n_test = test_count(fraction, items.size());
  if (n_test >= items.size()) n_test = 0;
  test.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_test));
  train.assign(items.begin() + static_cast<std::ptrdiff_t>(n_test), items.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
}

void check_fraction(double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw UsageError("test fraction must lie in (0, 1), got " + std::to_string(fraction));
  }
}

} // namespace

InteractionDataset build_dataset(std::span<const RawInteraction> raw, double test_fraction,
                                 std::uint64_t seed) {
  check_fraction(test_fraction);
  if (raw.empty()) throw UsageError("empty dataset");

  InteractionDataset data;
  std::vector<std::vector<ItemId>> per_user;
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(raw.size());
  for (const auto& r : raw) {
    if (r.user_token.empty() || r.item_token.empty()) throw UsageError("empty token");
    const UserId u = data.users.intern(r.user_token);
    const ItemId i = data.items.intern(r.item_token);
    if (u >= per_user.size()) per_user.resize(u + 1);
    if (seen.insert((static_cast<std::uint64_t>(u) << 32) | i).second) per_user[u].push_back(i);
  }
  data.num_users = data.users.size();
  data.num_items = data.items.size();
  data.train_pos.resize(data.num_users);
  data.test_pos.resize(data.num_users);

  Rng rng(seed);
  for (UserId u = 0; u < data.num_users; ++u) {
    split_user(std::move(per_user[u]), test_fraction, rng, data.train_pos[u], data.test_pos[u]);
  }
  return data;
}

InteractionDataset holdout_from_train(const InteractionDataset& data, double fraction,
                                      std::uint64_t seed) {
  check_fraction(fraction);
  InteractionDataset out;
  out.num_users = data.num_users;
  out.num_items = data.num_items;
  out.users = data.users;
  out.items = data.items;
  out.train_pos.resize(data.num_users);
  out.test_pos.resize(data.num_users);
  Rng rng(seed);
  for (UserId u = 0; u < data.num_users; ++u) {
    split_user(data.train_pos[u], fraction, rng, out.train_pos[u], out.test_pos[u]);
  }
  return out;
}

std::string split_manifest_json(const InteractionDataset& data, double test_fraction,
                                std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["test_fraction"] = test_fraction;
  j["num_users"] = data.num_users;
  j["num_items"] = data.num_items;
  return j.dump();
}

} // namespace cfct
