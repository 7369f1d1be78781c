#include <cfct/encoder.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace cfct {

EmbeddingTable::EmbeddingTable(std::size_t num_users, std::size_t num_items, std::size_t dim)
    : num_users_(num_users), num_items_(num_items), dim_(dim),
      users_(num_users * dim, 0.0), items_(num_items * dim, 0.0) {
  if (dim == 0) throw UsageError("embedding dimension must be >= 1");
}

void EmbeddingTable::throw_out_of_range(const char* kind, std::uint32_t id) {
  throw Error(std::string(kind) + " id " + std::to_string(id) + " out of range");
}

bool EmbeddingTable::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(users_.begin(), users_.end(), finite) &&
         std::all_of(items_.begin(), items_.end(), finite);
}

EmbeddingTable init_embeddings(std::size_t num_users, std::size_t num_items, std::size_t dim,
                               std::uint64_t seed) {
  if (num_users == 0 || num_items == 0) throw UsageError("embedding table needs >= 1 row");
  EmbeddingTable table(num_users, num_items, dim);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStddev);
  for (UserId u = 0; u < num_users; ++u)
    for (double& v : table.user(u)) v = normal(rng);
  for (ItemId i = 0; i < num_items; ++i)
    for (double& v : table.item(i)) v = normal(rng);
  return table;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double score_dot(const EmbeddingTable& table, UserId u, ItemId i) {
  return dot(table.user(u), table.item(i));
}

double score_cos_tau(std::span<const double> user_vec, std::span<const double> target_vec,
                     double tau) {
  if (!(tau > 0.0)) throw UsageError("temperature must be positive");
  if (user_vec.size() != target_vec.size()) throw Error("dimension mismatch");
  const double nu = norm(user_vec);
  const double nt = norm(target_vec);
  if (nu == 0.0 || nt == 0.0) throw Error("degenerate embedding");
  const double c = std::clamp(dot(user_vec, target_vec) / (nu * nt), -1.0, 1.0);
  return c / tau;
}

void add_cos_grad(std::span<const double> a, std::span<const double> b, double scale,
                  std::span<double> out) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw Error("degenerate embedding");
  const double c = dot(a, b) / (na * nb);
  // d cos / d a = b / (|a||b|) - cos * a / |a|^2
  const double kb = scale / (na * nb);
  const double ka = scale * c / (na * na);
  for (std::size_t k = 0; k < a.size(); ++k) out[k] += kb * b[k] - ka * a[k];
}

namespace {

constexpr char kMagic[4] = {'C', 'F', 'C', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff),
                         static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw UsageError("truncated checkpoint");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

std::uint32_t checked_u32(std::size_t v) {
  if (v > 0xffffffffu) throw Error("table too large for checkpoint format");
  return static_cast<std::uint32_t>(v);
}

void put_rows(std::ostream& out, std::span<const double> values) {
  for (double v : values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void get_rows(std::istream& in, std::span<double> values) {
  for (double& v : values) v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
}

} // namespace

void write_checkpoint(std::ostream& out, const EmbeddingTable& table) {
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, checked_u32(table.num_users()));
  put_u32(out, checked_u32(table.num_items()));
  put_u32(out, checked_u32(table.dim()));
  put_rows(out, table.user_data());
  put_rows(out, table.item_data());
  if (!out) throw Error("failed writing checkpoint");
}

EmbeddingTable read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw UsageError("not a checkpoint (bad magic)");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw UsageError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t users = get_u32(in);
  const std::uint32_t items = get_u32(in);
  const std::uint32_t dim = get_u32(in);
  EmbeddingTable table(users, items, dim);
  for (UserId u = 0; u < users; ++u) get_rows(in, table.user(u));
  for (ItemId i = 0; i < items; ++i) get_rows(in, table.item(i));
  return table;
}

void save_checkpoint(const std::string& path, const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path);
  write_checkpoint(out, table);
}

EmbeddingTable load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint: " + path);
  return read_checkpoint(in);
}

} // namespace cfct
