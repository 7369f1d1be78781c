#include <cfct/trainer.hpp>

#include <cfct/losses.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <thread>
#include <unordered_map>

namespace cfct {

LossKind parse_loss_kind(const std::string& name) {
  if (name == "bpr") return LossKind::Bpr;
  if (name == "infonce") return LossKind::InfoNce;
  if (name == "dcl") return LossKind::Dcl;
  if (name == "hcl") return LossKind::Hcl;
  if (name == "proposed") return LossKind::Proposed;
  throw UsageError("unknown loss '" + name + "' (expected bpr|infonce|dcl|hcl|proposed)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
  case LossKind::Bpr: return "bpr";
  case LossKind::InfoNce: return "infonce";
  case LossKind::Dcl: return "dcl";
  case LossKind::Hcl: return "hcl";
  case LossKind::Proposed: return "proposed";
  }
  return "?";
}

Similarity similarity_for(LossKind kind) {
  return kind == LossKind::Proposed ? Similarity::Cosine : Similarity::Dot;
}

void HyperParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("invalid hyperparameter: ") + what);
  };
  require(dim >= 1, "dim must be >= 1");
  require(M >= 1, "M must be >= 1");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  require(tau > 0.0, "tau must be > 0");
  require(num_negatives >= 1, "num_negatives must be >= 1");
  require(beta >= 0.0, "beta must be >= 0");
  require(tau_plus >= 0.0 && tau_plus < 1.0, "tau_plus must lie in [0, 1)");
  require(dcl_extra_positives >= 1, "dcl_extra_positives must be >= 1");
  require(lr > 0.0, "lr must be > 0");
  require(l2 >= 0.0, "l2 must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
}

namespace {

std::span<double> table_row(EmbeddingTable& table, std::uint64_t key) {
  const auto id = static_cast<std::uint32_t>(key & 0xffffffffu);
  return (key & kItemRowTag) ? table.item(id) : table.user(id);
}

void begin_rows(StepWorkspace& ws) {
  ws.row_keys.clear();
  ws.row_grads.clear();
}

// Gradient buffer for the row, created zeroed on first touch.
std::span<double> grad_row(StepWorkspace& ws, std::uint64_t key, std::size_t dim) {
  for (std::size_t r = 0; r < ws.row_keys.size(); ++r) {
    if (ws.row_keys[r] == key) return {ws.row_grads.data() + r * dim, dim};
  }
  ws.row_keys.push_back(key);
  ws.row_grads.resize(ws.row_grads.size() + dim, 0.0);
  return {ws.row_grads.data() + (ws.row_keys.size() - 1) * dim, dim};
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += a * x[k];
}

// v <- v - lr * (g + l2 * v)
void sgd_update(std::span<double> v, std::span<const double> g, double lr, double l2) {
  for (std::size_t k = 0; k < v.size(); ++k) v[k] -= lr * (g[k] + l2 * v[k]);
}

// Norms and cosines of the user against the center and the labeled negative.
struct ProposedParts {
  double norm_u = 0.0;
  double norm_c = 0.0;
  double norm_q = 0.0;
  double cos_c = 0.0;
  double cos_q = 0.0;
};

ProposedParts make_parts(double uu, double cc, double qq, double uc, double uq) {
  if (uu == 0.0 || cc == 0.0 || qq == 0.0) throw Error("degenerate embedding");
  ProposedParts p;
  p.norm_u = std::sqrt(uu);
  p.norm_c = std::sqrt(cc);
  p.norm_q = std::sqrt(qq);
  p.cos_c = uc / (p.norm_u * p.norm_c);
  p.cos_q = uq / (p.norm_u * p.norm_q);
  return p;
}

ProposedParts proposed_parts(std::span<const double> u, std::span<const double> c,
                             std::span<const double> q) {
  double uu = 0.0, cc = 0.0, qq = 0.0, uc = 0.0, uq = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    uu += u[k] * u[k];
    cc += c[k] * c[k];
    qq += q[k] * q[k];
    uc += u[k] * c[k];
    uq += u[k] * q[k];
  }
  return make_parts(uu, cc, qq, uc, uq);
}

// Coefficients of the three gradient vectors, each a combination of two embeddings:
//   g_u = cu_c * c + cu_q * q - cu_u * u
//   g_c = cc_u * u - cc_c * c      (whole center; each source item gets 1/M_eff of it)
//   g_q = cq_u * u - cq_q * q
struct ProposedCoeffs {
  double cu_c, cu_q, cu_u, cc_u, cc_c, cq_u, cq_q;
  double loss;
};

ProposedCoeffs proposed_coeffs(const ProposedParts& p, double tau) {
  const auto l = pairwise_logistic(p.cos_c / tau, p.cos_q / tau);
  const double a = -l.grad / tau;  // d loss / d cos(u, c)
  const double b = l.grad / tau;   // d loss / d cos(u, q)
  const double uu = p.norm_u * p.norm_u;
  ProposedCoeffs k;
  k.cu_c = a / (p.norm_u * p.norm_c);
  k.cu_q = b / (p.norm_u * p.norm_q);
  k.cu_u = (a * p.cos_c + b * p.cos_q) / uu;
  k.cc_u = a / (p.norm_u * p.norm_c);
  k.cc_c = a * p.cos_c / (p.norm_c * p.norm_c);
  k.cq_u = b / (p.norm_u * p.norm_q);
  k.cq_q = b * p.cos_q / (p.norm_q * p.norm_q);
  k.loss = l.value;
  return k;
}

constexpr std::size_t kLanes = 4;

// Dot products a[q] . b[q], each summed in kLanes interleaved partial sums.
template <std::size_t Q>
std::array<double, Q> dots(const std::array<const double*, Q>& a,
                           const std::array<const double*, Q>& b, std::size_t d) {
  double acc[Q][kLanes] = {};
  std::size_t k = 0;
  for (; k + kLanes <= d; k += kLanes) {
    for (std::size_t q = 0; q < Q; ++q) {
      for (std::size_t l = 0; l < kLanes; ++l) acc[q][l] += a[q][k + l] * b[q][k + l];
    }
  }
  std::array<double, Q> out{};
  for (std::size_t q = 0; q < Q; ++q) {
    out[q] = (acc[q][0] + acc[q][1]) + (acc[q][2] + acc[q][3]);
    for (std::size_t r = k; r < d; ++r) out[q] += a[q][r] * b[q][r];
  }
  return out;
}

// acc += row
void add_row(double* __restrict acc, const double* __restrict row, std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) acc[k] += row[k];
}

// row <- keep * row - step
void shrink_row(double* __restrict row, const double* __restrict step, double keep,
                std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) row[k] = keep * row[k] - step[k];
}

// Gradient and SGD update fused into one pass over (u, c, q) plus one pass per source item.
// c is any positive multiple of the center; each source row receives share times the
// gradient taken with respect to c.
double proposed_update(EmbeddingTable& table, UserId user, std::span<const double> c,
                       double share, std::span<const ItemId> sources, ItemId neg,
                       const ProposedParts& parts, const HyperParams& hp, StepWorkspace& ws) {
  const std::size_t d = table.dim();
  const auto k = proposed_coeffs(parts, hp.tau);
  const double lr = hp.lr;
  const double keep = 1.0 - lr * hp.l2;
  share *= lr;
  const double u_u = keep + lr * k.cu_u, u_c = lr * k.cu_c, u_q = lr * k.cu_q;
  const double q_q = keep + lr * k.cq_q, q_u = lr * k.cq_u;
  const double c_u = share * k.cc_u, c_c = share * k.cc_c;
  double* __restrict u = table.user(user).data();
  double* __restrict q = table.item(neg).data();
  const double* __restrict cv = c.data();
  ws.scratch.resize(d);
  double* __restrict step = ws.scratch.data();
  for (std::size_t j = 0; j < d; ++j) {
    const double uj = u[j], cj = cv[j], qj = q[j];
    step[j] = c_u * uj - c_c * cj;
    u[j] = u_u * uj - u_c * cj - u_q * qj;
    q[j] = q_q * qj - q_u * uj;
  }
  for (ItemId i : sources) shrink_row(table.item(i).data(), step, keep, d);
  return k.loss;
}

// BPR gradient and SGD update fused into one pass.
double bpr_update(EmbeddingTable& table, UserId user, ItemId pos, ItemId neg,
                  const HyperParams& hp) {
  double* __restrict u = table.user(user).data();
  double* __restrict i = table.item(pos).data();
  double* __restrict j = table.item(neg).data();
  const std::size_t d = table.dim();
  const auto x = dots<2>({u, u}, {i, j}, d);
  const auto l = pairwise_logistic(x[0], x[1]);
  const double keep = 1.0 - hp.lr * hp.l2;
  const double gp = -hp.lr * l.grad;
  const double gn = hp.lr * l.grad;
  for (std::size_t k = 0; k < d; ++k) {
    const double uk = u[k], ik = i[k], jk = j[k];
    u[k] = keep * uk - gp * ik - gn * jk;
    i[k] = keep * ik - gp * uk;
    j[k] = keep * jk - gn * uk;
  }
  return l.value;
}

void check_triple(const EmbeddingTable& table, const AugmentedTriple& triple) {
  if (triple.center.vec.size() != table.dim()) throw Error("interest center dimension mismatch");
  if (triple.center.source_items.empty()) throw Error("interest center has no source items");
}

} // namespace

void sample_augmented_triple(const EmbeddingTable& table, const InteractionDataset& data,
                             UserId u, const HyperParams& hp, Rng& rng, AugmentedTriple& out) {
  const auto& pos = data.train_pos.at(u);
  out.user = u;
  interest_center_into(table, pos, hp.M, rng, out.center);
  const auto pair = sample_negative_pair(pos, data.num_items, rng);
  const auto uv = table.user(u);
  const double s0 = score_cos_tau(uv, table.item(pair[0]), hp.tau);
  const double s1 = score_cos_tau(uv, table.item(pair[1]), hp.tau);
  out.neg_choice = label_negative(pair, s0, s1, hp.alpha, rng);
}

double proposed_gradients(const EmbeddingTable& table, const AugmentedTriple& triple,
                          const HyperParams& hp, StepWorkspace& ws) {
  check_triple(table, triple);
  const std::size_t d = table.dim();
  const auto u = table.user(triple.user);
  const std::span<const double> c = triple.center.vec;
  const auto q = table.item(triple.neg_choice.selected);
  const auto k = proposed_coeffs(proposed_parts(u, c, q), hp.tau);
  const double share = 1.0 / static_cast<double>(triple.center.source_items.size());

  begin_rows(ws);
  {
    auto gu = grad_row(ws, user_row_key(triple.user), d);
    for (std::size_t j = 0; j < d; ++j) gu[j] = k.cu_c * c[j] + k.cu_q * q[j] - k.cu_u * u[j];
  }
  for (ItemId i : triple.center.source_items) {
    auto gi = grad_row(ws, item_row_key(i), d);
    for (std::size_t j = 0; j < d; ++j) gi[j] += share * (k.cc_u * u[j] - k.cc_c * c[j]);
  }
  {
    auto gq = grad_row(ws, item_row_key(triple.neg_choice.selected), d);
    for (std::size_t j = 0; j < d; ++j) gq[j] += k.cq_u * u[j] - k.cq_q * q[j];
  }
  return k.loss;
}

double baseline_gradients(const EmbeddingTable& table, UserId user, ItemId pos,
                          std::span<const ItemId> negs, const HyperParams& hp,
                          StepWorkspace& ws, std::span<const ItemId> extra_pos) {
  if (hp.loss == LossKind::Proposed) {
    throw UsageError("baseline step called with loss=proposed");
  }
  if (negs.empty()) throw UsageError("baseline step needs negatives");
  if (hp.loss == LossKind::Bpr && negs.size() != 1) {
    throw UsageError("bpr takes exactly 1 negative");
  }

  const std::size_t d = table.dim();
  const auto u = table.user(user);
  const double x_pos = dot(u, table.item(pos));
  ws.scores.resize(negs.size());
  for (std::size_t n = 0; n < negs.size(); ++n) ws.scores[n] = dot(u, table.item(negs[n]));

  const bool debiased = hp.loss == LossKind::Dcl || hp.loss == LossKind::Hcl;
  if (debiased) {
    if (extra_pos.empty()) {
      ws.extra_scores.assign(1, x_pos);
    } else {
      ws.extra_scores.resize(extra_pos.size());
      for (std::size_t k = 0; k < extra_pos.size(); ++k) {
        ws.extra_scores[k] = dot(u, table.item(extra_pos[k]));
      }
    }
  }

  LossValue loss;
  switch (hp.loss) {
  case LossKind::Bpr: loss = loss_bpr(x_pos, ws.scores[0]); break;
  case LossKind::InfoNce: loss = loss_infonce(x_pos, ws.scores); break;
  case LossKind::Dcl:
    loss = loss_dcl(x_pos, ws.scores, ws.extra_scores, hp.tau_plus, hp.tau);
    break;
  case LossKind::Hcl:
    loss = loss_hcl(x_pos, ws.scores, ws.extra_scores, hp.beta, hp.tau_plus, hp.tau);
    break;
  case LossKind::Proposed: break;
  }

  // With no explicit extra positives the anchoring positive doubles as one.
  double g_pos = loss.grad_pos;
  if (debiased && extra_pos.empty()) g_pos += loss.grad_extra_pos[0];
  const bool explicit_extras = debiased && !extra_pos.empty();

  begin_rows(ws);
  {
    auto gu = grad_row(ws, user_row_key(user), d);
    axpy(g_pos, table.item(pos), gu);
    for (std::size_t n = 0; n < negs.size(); ++n) axpy(loss.grad_negs[n], table.item(negs[n]), gu);
    if (explicit_extras) {
      for (std::size_t k = 0; k < extra_pos.size(); ++k) {
        axpy(loss.grad_extra_pos[k], table.item(extra_pos[k]), gu);
      }
    }
  }
  axpy(g_pos, u, grad_row(ws, item_row_key(pos), d));
  for (std::size_t n = 0; n < negs.size(); ++n) {
    axpy(loss.grad_negs[n], u, grad_row(ws, item_row_key(negs[n]), d));
  }
  if (explicit_extras) {
    for (std::size_t k = 0; k < extra_pos.size(); ++k) {
      axpy(loss.grad_extra_pos[k], u, grad_row(ws, item_row_key(extra_pos[k]), d));
    }
  }
  return loss.value;
}

void apply_gradients(EmbeddingTable& table, const StepWorkspace& ws, const HyperParams& hp) {
  const std::size_t d = table.dim();
  for (std::size_t r = 0; r < ws.row_keys.size(); ++r) {
    sgd_update(table_row(table, ws.row_keys[r]), {ws.row_grads.data() + r * d, d}, hp.lr,
               hp.l2);
  }
}

double train_step_proposed(EmbeddingTable& table, const AugmentedTriple& triple,
                           const HyperParams& hp, StepWorkspace& ws) {
  check_triple(table, triple);
  const auto parts = proposed_parts(table.user(triple.user), triple.center.vec,
                                    table.item(triple.neg_choice.selected));
  const double share = 1.0 / static_cast<double>(triple.center.source_items.size());
  return proposed_update(table, triple.user, triple.center.vec, share,
                         triple.center.source_items, triple.neg_choice.selected, parts, hp, ws);
}

double train_step_proposed(EmbeddingTable& table, const AugmentedTriple& triple,
                           const HyperParams& hp) {
  StepWorkspace ws;
  return train_step_proposed(table, triple, hp, ws);
}

double train_step_baseline(EmbeddingTable& table, UserId u, ItemId i,
                           std::span<const ItemId> negs, const HyperParams& hp,
                           StepWorkspace& ws, std::span<const ItemId> extra_pos) {
  if (hp.loss == LossKind::Bpr && negs.size() == 1) {
    table.user(u);  // range checks
    table.item(i);
    return bpr_update(table, u, i, negs[0], hp);
  }
  const double loss = baseline_gradients(table, u, i, negs, hp, ws, extra_pos);
  apply_gradients(table, ws, hp);
  return loss;
}

double train_step_baseline(EmbeddingTable& table, UserId u, ItemId i,
                           std::span<const ItemId> negs, const HyperParams& hp,
                           std::span<const ItemId> extra_pos) {
  StepWorkspace ws;
  return train_step_baseline(table, u, i, negs, hp, ws, extra_pos);
}

namespace {

struct Interaction {
  UserId user;
  ItemId item;
};

// Sums per-instance gradients of a mini-batch and applies their mean once per row.
class BatchAccumulator {
public:
  explicit BatchAccumulator(std::size_t dim) : dim_(dim) {}

  void add(const StepWorkspace& ws) {
    for (std::size_t r = 0; r < ws.row_keys.size(); ++r) {
      auto& g = grads_[ws.row_keys[r]];
      if (g.empty()) g.assign(dim_, 0.0);
      axpy(1.0, {ws.row_grads.data() + r * dim_, dim_}, g);
    }
    ++count_;
  }

  void flush(EmbeddingTable& table, const HyperParams& hp) {
    if (count_ == 0) return;
    // Key order, so the result does not depend on hash-map iteration order.
    std::vector<std::uint64_t> keys;
    keys.reserve(grads_.size());
    for (const auto& [key, _] : grads_) keys.push_back(key);
    std::sort(keys.begin(), keys.end());
    const double inv = 1.0 / static_cast<double>(count_);
    for (auto key : keys) {
      auto& g = grads_[key];
      for (double& v : g) v *= inv;
      sgd_update(table_row(table, key), g, hp.lr, hp.l2);
    }
    grads_.clear();
    count_ = 0;
  }

private:
  std::size_t dim_;
  std::size_t count_ = 0;
  std::unordered_map<std::uint64_t, std::vector<double>> grads_;
};

// Samples the instance anchored on x. For the proposed loss this consumes the generator in
// the same order as sample_augmented_triple.
void draw_instance(const EmbeddingTable& table, const InteractionDataset& data,
                   const PositiveIndex& index, const HyperParams& hp, Interaction x, Rng& rng,
                   StepWorkspace& ws) {
  const auto& pos = data.train_pos[x.user];
  if (hp.loss == LossKind::Proposed) {
    sample_augmented_triple(table, data, x.user, hp, rng, ws.triple);
    return;
  }
  const std::size_t n_neg = hp.loss == LossKind::Bpr ? 1 : hp.num_negatives;
  ws.negs.resize(n_neg);
  for (auto& j : ws.negs) j = sample_negative(index, x.user, rng);
  ws.extras.clear();
  const bool debiased = hp.loss == LossKind::Dcl || hp.loss == LossKind::Hcl;
  if (debiased && hp.dcl_extra_positives > 1) {
    sample_without_replacement(pos, hp.dcl_extra_positives, rng, ws.extras);
  }
}

// Proposed instance sampled and applied with one read pass (candidate scores, center and
// its dot products) and one update pass.
double fused_proposed_step(EmbeddingTable& table, const InteractionDataset& data,
                           const PositiveIndex& index, const HyperParams& hp, UserId user,
                           Rng& rng, StepWorkspace& ws) {
  const auto& pos = data.train_pos[user];
  auto& sources = ws.triple.center.source_items;
  if (pos.empty()) throw Error("user has no positives");
  sample_without_replacement(pos, hp.M, rng, sources);
  const auto pair = sample_negative_pair(index, user, rng);

  const std::size_t d = table.dim();
  const double* u = table.user(user).data();
  const double* j0 = table.item(pair[0]).data();
  const double* j1 = table.item(pair[1]).data();
  // Cosine is scale invariant, so the unnormalized sum stands in for the center.
  auto& c = ws.triple.center.vec;
  const double* first_row = table.item(sources[0]).data();
  c.assign(first_row, first_row + d);
  for (std::size_t s = 1; s < sources.size(); ++s) add_row(c.data(), table.item(sources[s]).data(), d);
  const double* cv = c.data();
  const auto x = dots<7>({u, u, j0, u, j1, cv, u}, {u, j0, j0, j1, j1, cv, cv}, d);
  const double uu = x[0], u0 = x[1], n0 = x[2], u1 = x[3], n1 = x[4], cc = x[5], uc = x[6];
  if (uu == 0.0 || n0 == 0.0 || n1 == 0.0) throw Error("degenerate embedding");
  const double nu = std::sqrt(uu);
  const double s0 = u0 / (nu * std::sqrt(n0)) / hp.tau;
  const double s1 = u1 / (nu * std::sqrt(n1)) / hp.tau;
  const auto choice = label_negative(pair, s0, s1, hp.alpha, rng);
  const bool first = choice.selected == pair[0];
  const auto parts = make_parts(uu, cc, first ? n0 : n1, uc, first ? u0 : u1);
  return proposed_update(table, user, c, 1.0, sources, choice.selected, parts, hp, ws);
}

double run_shard(EmbeddingTable& table, const InteractionDataset& data,
                 const PositiveIndex& index, const HyperParams& hp,
                 std::span<const Interaction> shard, Rng& rng) {
  StepWorkspace ws;
  double total = 0.0;
  if (hp.batch_size == 1) {
    for (const auto& x : shard) {
      if (hp.loss == LossKind::Proposed) {
        total += fused_proposed_step(table, data, index, hp, x.user, rng, ws);
      } else {
        draw_instance(table, data, index, hp, x, rng, ws);
        total += train_step_baseline(table, x.user, x.item, ws.negs, hp, ws, ws.extras);
      }
    }
    return total;
  }
  BatchAccumulator batch(table.dim());
  std::size_t in_batch = 0;
  for (const auto& x : shard) {
    draw_instance(table, data, index, hp, x, rng, ws);
    total += hp.loss == LossKind::Proposed
                 ? proposed_gradients(table, ws.triple, hp, ws)
                 : baseline_gradients(table, x.user, x.item, ws.negs, hp, ws, ws.extras);
    batch.add(ws);
    if (++in_batch == hp.batch_size) {
      batch.flush(table, hp);
      in_batch = 0;
    }
  }
  batch.flush(table, hp);
  return total;
}

} // namespace

TrainResult run_training(const InteractionDataset& data, const HyperParams& hp,
                         const TrainOptions& options) {
  hp.validate();
  TrainResult result{init_embeddings(data.num_users, data.num_items, hp.dim, hp.seed), {}};
  if (hp.epochs == 0) return result;

  std::vector<Interaction> order;
  order.reserve(data.num_train_interactions());
  for (UserId u = 0; u < data.num_users; ++u) {
    for (ItemId i : data.train_pos[u]) order.push_back({u, i});
  }
  if (order.empty()) throw UsageError("dataset has no training interactions");

  const PositiveIndex index(data.train_pos, data.num_items);
  std::seed_seq seq{hp.seed, std::uint64_t{0x5eed}};
  Rng rng(seq);

  std::size_t threads = options.threads;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, order.size());

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);

    double total = 0.0;
    if (!options.parallel || threads <= 1) {
      total = run_shard(result.table, data, index, hp, order, rng);
    } else {
      // Hogwild: shards update the shared table without locks.
      std::vector<double> partial(threads, 0.0);
      std::vector<std::exception_ptr> errors(threads);
      std::vector<std::thread> workers;
      const std::size_t per = (order.size() + threads - 1) / threads;
      for (std::size_t w = 0; w < threads; ++w) {
        const std::size_t lo = std::min(order.size(), w * per);
        const std::size_t hi = std::min(order.size(), lo + per);
        workers.emplace_back([&, w, lo, hi] {
          try {
            std::seed_seq wseq{hp.seed, static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(w)};
            Rng wrng(wseq);
            partial[w] = run_shard(result.table, data, index, hp,
                                   std::span<const Interaction>(order).subspan(lo, hi - lo), wrng);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& t : workers) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
      total = std::accumulate(partial.begin(), partial.end(), 0.0);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = total / static_cast<double>(order.size());
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(stats.mean_loss)) {
      throw Error("non-finite loss in epoch " + std::to_string(epoch));
    }
    result.report.epochs.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);
  }
  return result;
}

void write_train_jsonl(std::ostream& out, const TrainReport& report) {
  for (const auto& e : report.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["mean_loss"] = e.mean_loss;
    j["seconds"] = e.seconds;
    out << j.dump() << '\n';
  }
}

} // namespace cfct
