#include <cfct/losses.hpp>

#include <cfct/common.hpp>

#include <algorithm>
#include <cmath>

namespace cfct {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

PairwiseLoss pairwise_logistic(double x_pos, double x_neg) {
  const double z = x_neg - x_pos;
  return {softplus(z), sigmoid(z)};
}

LossValue loss_bpr(double x_pos, double x_neg) {
  const auto p = pairwise_logistic(x_pos, x_neg);
  LossValue out;
  out.value = p.value;
  out.grad_pos = -p.grad;
  out.grad_negs = {p.grad};
  return out;
}

LossValue loss_infonce(double x_pos, std::span<const double> x_negs) {
  if (x_negs.empty()) throw UsageError("InfoNCE needs at least one negative");
  const double m = std::max(x_pos, *std::max_element(x_negs.begin(), x_negs.end()));
  const double a = std::exp(x_pos - m);
  double rest = 0.0;
  for (double x : x_negs) rest += std::exp(x - m);
  const double total = a + rest;

  LossValue out;
  out.value = x_pos == m ? std::log1p(rest) : std::log(total) - (x_pos - m);
  out.grad_pos = -rest / total;
  out.grad_negs.resize(x_negs.size());
  for (std::size_t n = 0; n < x_negs.size(); ++n) out.grad_negs[n] = std::exp(x_negs[n] - m) / total;
  return out;
}

LossValue loss_dcl_weighted(double x_pos, std::span<const double> x_negs,
                            std::span<const double> weights,
                            std::span<const double> x_extra_pos, double tau_plus, double tau) {
  if (x_negs.empty()) throw UsageError("DCL needs at least one negative");
  if (x_extra_pos.empty()) throw UsageError("DCL needs at least one extra positive");
  if (weights.size() != x_negs.size()) throw UsageError("one weight per negative required");
  if (!(tau_plus >= 0.0 && tau_plus < 1.0)) throw UsageError("tau_plus must lie in [0, 1)");
  if (!(tau > 0.0)) throw UsageError("temperature must be positive");

  const double n_neg = static_cast<double>(x_negs.size());
  const double n_extra = static_cast<double>(x_extra_pos.size());

  // Work relative to the largest score so nothing overflows.
  double m = x_pos;
  for (double x : x_negs) m = std::max(m, x);
  for (double x : x_extra_pos) m = std::max(m, x);

  double neg_mean = 0.0;
  for (std::size_t n = 0; n < x_negs.size(); ++n) neg_mean += weights[n] * std::exp(x_negs[n] - m);
  neg_mean /= n_neg;
  double pos_mean = 0.0;
  for (double x : x_extra_pos) pos_mean += std::exp(x - m);
  pos_mean /= n_extra;

  double phi = neg_mean;
  bool clamped = false;
  if (tau_plus > 0.0) {
    phi = (neg_mean - tau_plus * pos_mean) / (1.0 - tau_plus);
    const double floor = std::exp(-1.0 / tau - m);
    if (phi < floor) {
      phi = floor;
      clamped = true;
    }
  }

  const double a = std::exp(x_pos - m);
  const double rest = n_neg * phi;
  const double total = a + rest;

  LossValue out;
  out.value = x_pos == m ? std::log1p(rest) : std::log(total) - (x_pos - m);
  out.grad_pos = -rest / total;
  out.grad_negs.assign(x_negs.size(), 0.0);
  out.grad_extra_pos.assign(x_extra_pos.size(), 0.0);
  if (!clamped) {
    const double neg_scale = 1.0 / ((1.0 - tau_plus) * total);
    for (std::size_t n = 0; n < x_negs.size(); ++n) {
      out.grad_negs[n] = weights[n] * std::exp(x_negs[n] - m) * neg_scale;
    }
    const double pos_scale = -n_neg * tau_plus / ((1.0 - tau_plus) * total * n_extra);
    for (std::size_t k = 0; k < x_extra_pos.size(); ++k) {
      out.grad_extra_pos[k] = pos_scale * std::exp(x_extra_pos[k] - m);
    }
  }
  return out;
}

LossValue loss_dcl(double x_pos, std::span<const double> x_negs,
                   std::span<const double> x_extra_pos, double tau_plus, double tau) {
  const std::vector<double> ones(x_negs.size(), 1.0);
  return loss_dcl_weighted(x_pos, x_negs, ones, x_extra_pos, tau_plus, tau);
}

std::vector<double> hcl_weights(std::span<const double> x_negs, double beta) {
  if (!(beta >= 0.0)) throw UsageError("beta must be >= 0");
  std::vector<double> w(x_negs.size(), 1.0);
  if (beta == 0.0 || x_negs.empty()) return w;
  const double top = beta * *std::max_element(x_negs.begin(), x_negs.end());
  double sum = 0.0;
  for (std::size_t n = 0; n < x_negs.size(); ++n) {
    w[n] = std::exp(beta * x_negs[n] - top);
    sum += w[n];
  }
  const double scale = static_cast<double>(x_negs.size()) / sum;
  for (double& v : w) v *= scale;
  return w;
}

LossValue loss_hcl(double x_pos, std::span<const double> x_negs,
                   std::span<const double> x_extra_pos, double beta, double tau_plus,
                   double tau) {
  const auto w = hcl_weights(x_negs, beta);
  return loss_dcl_weighted(x_pos, x_negs, w, x_extra_pos, tau_plus, tau);
}

LossValue loss_proposed(double x_up, double x_uq) { return loss_bpr(x_up, x_uq); }

} // namespace cfct
