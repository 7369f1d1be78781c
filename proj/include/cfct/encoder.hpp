#pragma once

#include <cfct/common.hpp>

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cfct {

// Matrix-factorization encoder: one dense row per user and per item.
class EmbeddingTable {
public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t num_users, std::size_t num_items, std::size_t dim);

  std::size_t num_users() const noexcept { return num_users_; }
  std::size_t num_items() const noexcept { return num_items_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<double> user(UserId u) {
    check_user(u);
    return {users_.data() + static_cast<std::size_t>(u) * dim_, dim_};
  }
  std::span<const double> user(UserId u) const {
    check_user(u);
    return {users_.data() + static_cast<std::size_t>(u) * dim_, dim_};
  }
  std::span<double> item(ItemId i) {
    check_item(i);
    return {items_.data() + static_cast<std::size_t>(i) * dim_, dim_};
  }
  std::span<const double> item(ItemId i) const {
    check_item(i);
    return {items_.data() + static_cast<std::size_t>(i) * dim_, dim_};
  }

  std::span<const double> user_data() const noexcept { return users_; }
  std::span<const double> item_data() const noexcept { return items_; }

  bool all_finite() const;

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

private:
  void check_user(UserId u) const {
    if (u >= num_users_) [[unlikely]] throw_out_of_range("user", u);
  }
  void check_item(ItemId i) const {
    if (i >= num_items_) [[unlikely]] throw_out_of_range("item", i);
  }
  [[noreturn]] static void throw_out_of_range(const char* kind, std::uint32_t id);

  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> users_;
  std::vector<double> items_;
};

inline constexpr double kInitStddev = 0.1;

// Entries i.i.d. N(0, 0.1^2).
EmbeddingTable init_embeddings(std::size_t num_users, std::size_t num_items, std::size_t dim,
                               std::uint64_t seed);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

double score_dot(const EmbeddingTable& table, UserId u, ItemId i);

// cos(user_vec, target_vec) / tau. Throws on a zero-norm argument ("degenerate embedding").
double score_cos_tau(std::span<const double> user_vec, std::span<const double> target_vec,
                     double tau);

// Gradient of cos(a, b) with respect to a, accumulated as out += scale * d cos / d a.
void add_cos_grad(std::span<const double> a, std::span<const double> b, double scale,
                  std::span<double> out);

// Checkpoint layout (little endian):
//   "CFCT" | u32 version | u32 num_users | u32 num_items | u32 dim |
//   user rows f32 row-major | item rows f32 row-major
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const EmbeddingTable& table);
EmbeddingTable read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const EmbeddingTable& table);
EmbeddingTable load_checkpoint(const std::string& path);

} // namespace cfct
