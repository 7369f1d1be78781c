#pragma once

#include <span>
#include <vector>

namespace cfct {

// A loss value together with its partial derivatives with respect to the input scores.
// grad_extra_pos is only populated by the debiased losses (DCL/HCL), whose positive
// expectation term reads a separate list of positive scores.
struct LossValue {
  double value = 0.0;
  double grad_pos = 0.0;
  std::vector<double> grad_negs;
  std::vector<double> grad_extra_pos;
};

double softplus(double x);
double sigmoid(double x);

// -ln sigmoid(x_pos - x_neg) with d/dx_neg = grad and d/dx_pos = -grad. Allocation free,
// for the single-negative training kernels.
struct PairwiseLoss {
  double value = 0.0;
  double grad = 0.0;
};
PairwiseLoss pairwise_logistic(double x_pos, double x_neg);

// -ln sigmoid(x_pos - x_neg)
LossValue loss_bpr(double x_pos, double x_neg);

// -ln( e^pos / (e^pos + sum_n e^neg_n) )
LossValue loss_infonce(double x_pos, std::span<const double> x_negs);

inline constexpr double kDefaultTauPlus = 0.1;

// Debiased contrastive loss. The negative expectation is corrected by the class prior
// tau_plus using the extra positive scores and floored at e^{-1/tau} whenever the
// correction is active (tau_plus > 0).
LossValue loss_dcl(double x_pos, std::span<const double> x_negs,
                   std::span<const double> x_extra_pos, double tau_plus, double tau);

// Hardness weights w_n = e^{beta x_n} / mean_m e^{beta x_m}.
std::vector<double> hcl_weights(std::span<const double> x_negs, double beta);

// DCL with each negative exponential multiplied by a fixed weight. Gradients treat the
// weights as constants.
LossValue loss_dcl_weighted(double x_pos, std::span<const double> x_negs,
                            std::span<const double> weights,
                            std::span<const double> x_extra_pos, double tau_plus, double tau);

// loss_dcl_weighted with hcl_weights(x_negs, beta).
LossValue loss_hcl(double x_pos, std::span<const double> x_negs,
                   std::span<const double> x_extra_pos, double beta, double tau_plus,
                   double tau);

// -ln sigmoid(x_up - x_uq) where x_up scores the interest center and x_uq the labeled
// negative, both as cosine / tau.
LossValue loss_proposed(double x_up, double x_uq);

} // namespace cfct
