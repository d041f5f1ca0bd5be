#include "absgd/optim.hpp"

#include <cmath>

#include "absgd/errors.hpp"
#include "absgd/math.hpp"

namespace absgd {

namespace {

double mean_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

double lambda_at(const LambdaSchedule& schedule, int epoch) {
  if (epoch < 1) throw ValidationError("lambda_at: epoch is 1-based");
  switch (schedule.kind) {
    case LambdaSchedule::Kind::Constant:
      return schedule.lambda;
    case LambdaSchedule::Kind::TwoStage:
      return epoch < schedule.switch_epoch ? kLambdaInf : schedule.stage2_lambda;
  }
  throw ValidationError("lambda_at: unknown schedule kind");
}

void AbsgdConfig::validate() const {
  if (eta <= 0.0) throw ValidationError("eta must be > 0");
  if (beta < 0.0 || beta >= 1.0) throw ValidationError("beta must be in [0, 1)");
  if (ema_gamma <= 0.0 || ema_gamma > 1.0)
    throw ValidationError("ema_gamma must be in (0, 1]");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
  if (schedule.kind == LambdaSchedule::Kind::Constant && schedule.lambda == 0.0)
    throw ValidationError("lambda must be nonzero");
  if (schedule.kind == LambdaSchedule::Kind::TwoStage) {
    if (schedule.stage2_lambda == 0.0 || std::isinf(schedule.stage2_lambda))
      throw ValidationError("stage2 lambda must be finite and nonzero");
    if (schedule.switch_epoch < 1) throw ValidationError("switch_epoch must be >= 1");
  }
}

AbsgdState make_state(const ParamVector& params, const AbsgdConfig& config) {
  AbsgdState state;
  state.prev_delta.assign(params.values.size(), 0.0);
  state.lambda = lambda_at(config.schedule, 1);
  if (config.normalizer_init == NormalizerInit::ColdZero) {
    state.s = 0.0;
    state.log_s = -std::numeric_limits<double>::infinity();
    state.s_ready = true;  // s0 = 0 participates in the first update as-is
  }
  return state;
}

void set_epoch_lambda(AbsgdState& state, const AbsgdConfig& config, int epoch) {
  const double next = lambda_at(config.schedule, epoch);
  if (next != state.lambda) {
    // "restarting it with a decayed lambda": re-initialize the normalizer
    state.lambda = next;
    state.s_ready = config.normalizer_init == NormalizerInit::ColdZero;
    state.s = 0.0;
    state.log_s = -std::numeric_limits<double>::infinity();
  }
}

double batch_g_tilde(std::span<const double> batch_losses, double lambda) {
  if (batch_losses.empty()) throw ValidationError("batch_g_tilde: empty batch");
  if (lambda == 0.0) throw ValidationError("batch_g_tilde: lambda must be nonzero");
  if (std::isinf(lambda)) return 1.0;
  double acc = 0.0;
  for (double l : batch_losses) acc += std::exp(l / lambda);
  if (!std::isfinite(acc))
    throw NumericError("batch_g_tilde overflow; enable log_domain");
  return acc / static_cast<double>(batch_losses.size());
}

double batch_log_g_tilde(std::span<const double> batch_losses, double lambda) {
  if (batch_losses.empty()) throw ValidationError("batch_log_g_tilde: empty batch");
  if (lambda == 0.0) throw ValidationError("batch_log_g_tilde: lambda must be nonzero");
  if (std::isinf(lambda)) return 0.0;
  std::vector<double> scaled(batch_losses.size());
  for (std::size_t i = 0; i < batch_losses.size(); ++i) scaled[i] = batch_losses[i] / lambda;
  return log_sum_exp(scaled) - std::log(static_cast<double>(batch_losses.size()));
}

double update_normalizer(double s, double g_tilde, double ema_gamma) {
  if (g_tilde <= 0.0) throw ValidationError("update_normalizer: g_tilde must be > 0");
  return (1.0 - ema_gamma) * s + ema_gamma * g_tilde;
}

double update_normalizer_log(double log_s, double log_g_tilde, double ema_gamma) {
  if (ema_gamma >= 1.0) return log_g_tilde;
  return log_add_exp(std::log1p(-ema_gamma) + log_s, std::log(ema_gamma) + log_g_tilde);
}

std::vector<double> batch_weights(std::span<const double> batch_losses, double lambda,
                                  double s_next) {
  if (s_next <= 0.0) throw ValidationError("batch_weights: normalizer must be > 0");
  if (lambda == 0.0) throw ValidationError("batch_weights: lambda must be nonzero");
  std::vector<double> w(batch_losses.size());
  if (std::isinf(lambda)) {
    for (double& v : w) v = 1.0 / s_next;
    return w;
  }
  for (std::size_t i = 0; i < batch_losses.size(); ++i) {
    w[i] = std::exp(batch_losses[i] / lambda) / s_next;
    if (!std::isfinite(w[i]))
      throw NumericError("batch_weights overflow; enable log_domain");
  }
  return w;
}

namespace {

// w_{t+1} = w_t - eta * grad + beta * (w_t - w_{t-1}); frozen layers untouched.
void apply_momentum_update(ParamVector& params, const ParamVector& grad, double eta,
                           double beta, AbsgdState& state) {
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double delta = -eta * grad.values[i] + beta * state.prev_delta[i];
    params.values[i] += delta;
    state.prev_delta[i] = delta;
  }
  ++state.step;
}

std::vector<double> attention_weights(std::span<const double> losses,
                                      const AbsgdConfig& config, AbsgdState& state) {
  const double lambda = state.lambda;
  if (std::isinf(lambda)) {
    state.s = 1.0;
    state.log_s = 0.0;
    return std::vector<double>(losses.size(), 1.0);
  }
  if (config.log_domain) {
    const double log_g = batch_log_g_tilde(losses, lambda);
    state.log_s = state.s_ready
                      ? update_normalizer_log(state.log_s, log_g, config.ema_gamma)
                      : log_g;  // warm start from the first batch
    state.s_ready = true;
    state.s = std::exp(state.log_s);
    std::vector<double> w(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i)
      w[i] = std::exp(losses[i] / lambda - state.log_s);
    return w;
  }
  double g;
  try {
    g = batch_g_tilde(losses, lambda);
  } catch (const NumericError&) {
    double max_loss = losses.empty() ? 0.0 : losses[0];
    for (double l : losses) max_loss = std::max(max_loss, l);
    throw NumericError("exp(L/lambda) overflow at lambda = " + std::to_string(lambda) +
                       ", max loss = " + std::to_string(max_loss) +
                       "; enable log_domain");
  }
  state.s = state.s_ready ? update_normalizer(state.s, g, config.ema_gamma) : g;
  state.s_ready = true;
  state.log_s = std::log(state.s);
  return batch_weights(losses, lambda, state.s);
}

}  // namespace

double absgd_step(ParamVector& params, const ModelArch& arch, const Matrix& features,
                const std::vector<int>& labels, const LossContext& ctx,
                const AbsgdConfig& config, double eta, AbsgdState& state) {
  if (labels.empty()) throw ValidationError("absgd_step: empty batch");
  BatchEval eval = forward(params, arch, features);
  eval_losses(eval, ctx, labels);
  const std::vector<double> weights = attention_weights(eval.per_sample_losses, config, state);
  ParamVector grad =
      weighted_backward(params, arch, features, eval, labels, weights, ctx);
  add_l2_grad(params, config.weight_decay, grad);
  apply_momentum_update(params, grad, eta, config.beta, state);
  return mean_of(eval.per_sample_losses);
}

double sgd_momentum_step(ParamVector& params, const ModelArch& arch, const Matrix& features,
                       const std::vector<int>& labels, const LossContext& ctx, double eta,
                       double beta, double weight_decay, AbsgdState& state) {
  if (labels.empty()) throw ValidationError("sgd_momentum_step: empty batch");
  BatchEval eval = forward(params, arch, features);
  eval_losses(eval, ctx, labels);
  const std::vector<double> unit(labels.size(), 1.0);
  ParamVector grad = weighted_backward(params, arch, features, eval, labels, unit, ctx);
  add_l2_grad(params, weight_decay, grad);
  apply_momentum_update(params, grad, eta, beta, state);
  return mean_of(eval.per_sample_losses);
}

double sgd_momentum_step_ema(ParamVector& params, const ModelArch& arch,
                           const Matrix& features, const std::vector<int>& labels,
                           const LossContext& ctx, double eta0, double beta0,
                           double weight_decay, EmaSgdState& state) {
  if (labels.empty()) throw ValidationError("sgd_momentum_step_ema: empty batch");
  if (state.velocity.empty()) state.velocity.assign(params.values.size(), 0.0);
  BatchEval eval = forward(params, arch, features);
  eval_losses(eval, ctx, labels);
  const std::vector<double> unit(labels.size(), 1.0);
  ParamVector grad = weighted_backward(params, arch, features, eval, labels, unit, ctx);
  add_l2_grad(params, weight_decay, grad);
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    state.velocity[i] = (1.0 - beta0) * state.velocity[i] + beta0 * grad.values[i];
    params.values[i] -= eta0 * state.velocity[i];
  }
  ++state.step;
  return mean_of(eval.per_sample_losses);
}

}  // namespace absgd
