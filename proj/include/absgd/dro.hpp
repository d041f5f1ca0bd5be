#pragma once

#include <span>
#include <utility>
#include <vector>

#include "absgd/dataset.hpp"
#include "absgd/losses.hpp"
#include "absgd/model.hpp"

namespace absgd {

// Closed-form inner maximizer: p_i ~ exp(L_i / lambda). lambda < 0 flips the
// ordering (weights decrease in loss).
std::vector<double> p_star(std::span<const double> losses, double lambda);

// KL(p || uniform) = sum p_i ln(n p_i), with 0 ln 0 := 0.
double kl_to_uniform(std::span<const double> p);

// Min-max objective: sum p_i L_i - lambda * KL(p || uniform) + reg.
double f_minmax(std::span<const double> losses, std::span<const double> p, double lambda,
                double reg_value);

// Equivalent minimization: lambda * ln((1/n) sum exp(L_i/lambda)) + reg.
double f_lambda(std::span<const double> losses, double lambda, double reg_value);

struct DroDiagnostics {
  double f_lambda = 0.0;
  double grad_norm_sq = 0.0;
  double kl_to_uniform = 0.0;
  double effective_sample_size = 0.0;  // 1 / sum p_i^2, in [1, n]
  double c0_hat = 0.0;                 // max_i exp(L_i / lambda)
  double c1_hat = 0.0;                 // max_i ||grad L_i||^2
};

// Exact full-batch gradient sum_i p*_i grad L_i + grad r.
ParamVector grad_f_lambda(const ParamVector& params, const ModelArch& arch,
                          const Dataset& dataset, const LossContext& ctx, double lambda,
                          const RegSpec& reg);

// Empirical estimates of the smoothness-bound constants at the given params.
// Overflow of exp(L/lambda) is reported as an infinite c0_hat, not an error.
std::pair<double, double> estimate_bounds(const ParamVector& params, const ModelArch& arch,
                                          const Dataset& dataset, const LossContext& ctx,
                                          double lambda);

DroDiagnostics dro_diagnostics(const ParamVector& params, const ModelArch& arch,
                               const Dataset& dataset, const LossContext& ctx,
                               double lambda, const RegSpec& reg);

}  // namespace absgd
