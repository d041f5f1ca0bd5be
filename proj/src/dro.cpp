#include "absgd/dro.hpp"

#include <cmath>

#include "absgd/errors.hpp"
#include "absgd/math.hpp"

namespace absgd {

std::vector<double> p_star(std::span<const double> losses, double lambda) {
  if (lambda == 0.0) throw ValidationError("p_star: lambda must be nonzero");
  std::vector<double> scaled(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) scaled[i] = losses[i] / lambda;
  return stable_softmax(scaled);
}

double kl_to_uniform(std::span<const double> p) {
  const double n = static_cast<double>(p.size());
  double acc = 0.0;
  for (double pi : p)
    if (pi > 0.0) acc += pi * std::log(n * pi);
  return acc;
}

double f_minmax(std::span<const double> losses, std::span<const double> p, double lambda,
                double reg_value) {
  if (losses.size() != p.size()) throw ValidationError("f_minmax: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) acc += p[i] * losses[i];
  return acc - lambda * kl_to_uniform(p) + reg_value;
}

double f_lambda(std::span<const double> losses, double lambda, double reg_value) {
  if (lambda == 0.0) throw ValidationError("f_lambda: lambda must be nonzero");
  if (losses.empty()) throw ValidationError("f_lambda: empty losses");
  if (std::isinf(lambda)) {
    // lambda -> inf limit: plain empirical risk
    double acc = 0.0;
    for (double l : losses) acc += l;
    return acc / static_cast<double>(losses.size()) + reg_value;
  }
  std::vector<double> scaled(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) scaled[i] = losses[i] / lambda;
  const double lme = log_sum_exp(scaled) - std::log(static_cast<double>(losses.size()));
  return lambda * lme + reg_value;
}

ParamVector grad_f_lambda(const ParamVector& params, const ModelArch& arch,
                          const Dataset& dataset, const LossContext& ctx, double lambda,
                          const RegSpec& reg) {
  BatchEval eval = forward(params, arch, dataset.features);
  eval_losses(eval, ctx, dataset.labels);
  std::vector<double> p = p_star(eval.per_sample_losses, lambda);
  // weighted_backward averages by 1/n, so feed n * p_i to get sum_i p_i grad L_i
  const double n = static_cast<double>(p.size());
  for (double& v : p) v *= n;
  ParamVector grad =
      weighted_backward(params, arch, dataset.features, eval, dataset.labels, p, ctx);
  add_l2_grad(params, reg.weight_decay, grad);
  return grad;
}

std::pair<double, double> estimate_bounds(const ParamVector& params, const ModelArch& arch,
                                          const Dataset& dataset, const LossContext& ctx,
                                          double lambda) {
  if (dataset.size() == 0) throw ValidationError("estimate_bounds: empty dataset");
  if (lambda == 0.0) throw ValidationError("estimate_bounds: lambda must be nonzero");
  BatchEval eval = forward(params, arch, dataset.features);
  eval_losses(eval, ctx, dataset.labels);

  double c0 = 0.0;
  for (double l : eval.per_sample_losses) c0 = std::max(c0, std::exp(l / lambda));

  // c1: per-sample gradient norms, one backward each
  double c1 = 0.0;
  Matrix row(1, dataset.dim());
  const std::vector<double> unit{1.0};
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    std::copy(dataset.features.row(i).begin(), dataset.features.row(i).end(),
              row.row(0).begin());
    BatchEval e1 = forward(params, arch, row);
    e1.per_sample_losses = {eval.per_sample_losses[i]};
    const std::vector<int> label{dataset.labels[i]};
    ParamVector g = weighted_backward(params, arch, row, e1, label, unit, ctx);
    double nsq = 0.0;
    for (double v : g.values) nsq += v * v;
    c1 = std::max(c1, nsq);
  }
  return {c0, c1};
}

DroDiagnostics dro_diagnostics(const ParamVector& params, const ModelArch& arch,
                               const Dataset& dataset, const LossContext& ctx,
                               double lambda, const RegSpec& reg) {
  DroDiagnostics d;
  BatchEval eval = forward(params, arch, dataset.features);
  eval_losses(eval, ctx, dataset.labels);
  const auto& losses = eval.per_sample_losses;

  const double reg_value = l2_reg(params, reg.weight_decay).first;
  d.f_lambda = f_lambda(losses, lambda, reg_value);

  const std::vector<double> p = p_star(losses, lambda);
  d.kl_to_uniform = kl_to_uniform(p);
  double psq = 0.0;
  for (double pi : p) psq += pi * pi;
  d.effective_sample_size = 1.0 / psq;

  ParamVector grad = grad_f_lambda(params, arch, dataset, ctx, lambda, reg);
  d.grad_norm_sq = 0.0;
  for (double v : grad.values) d.grad_norm_sq += v * v;

  auto [c0, c1] = estimate_bounds(params, arch, dataset, ctx, lambda);
  d.c0_hat = c0;
  d.c1_hat = c1;
  return d;
}

}  // namespace absgd
