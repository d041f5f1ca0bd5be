#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "absgd/losses.hpp"
#include "absgd/matrix.hpp"
#include "absgd/model.hpp"

namespace absgd {

inline constexpr double kLambdaInf = std::numeric_limits<double>::infinity();

struct LambdaSchedule {
  enum class Kind { Constant, TwoStage };
  Kind kind = Kind::Constant;
  double lambda = kLambdaInf;   // Constant value; may be kLambdaInf or negative
  double stage2_lambda = 1.0;   // TwoStage: stage 1 is lambda = inf
  int switch_epoch = 1;
};

// Constant -> its lambda; TwoStage -> inf before switch_epoch, stage2 after.
double lambda_at(const LambdaSchedule& schedule, int epoch);

enum class NormalizerInit { WarmFirstBatch, ColdZero };

struct AbsgdConfig {
  double eta = 0.1;
  double beta = 0.9;        // momentum
  double ema_gamma = 0.9;   // normalizer moving-average weight
  double weight_decay = 0.0;
  LambdaSchedule schedule;
  NormalizerInit normalizer_init = NormalizerInit::WarmFirstBatch;
  bool log_domain = true;

  void validate() const;
};

struct AbsgdState {
  double s = 0.0;       // normalizer (linear domain mirror)
  double log_s = -std::numeric_limits<double>::infinity();
  bool s_ready = false;  // false until the first finite-lambda batch (warm init)
  std::vector<double> prev_delta;  // w_t - w_{t-1}
  std::uint64_t step = 0;
  double lambda = kLambdaInf;  // active lambda for the current epoch
};

AbsgdState make_state(const ParamVector& params, const AbsgdConfig& config);

// Applies the schedule for `epoch`; re-initializes the normalizer when lambda
// changes (the two-stage restart).
void set_epoch_lambda(AbsgdState& state, const AbsgdConfig& config, int epoch);

// (1/B) sum exp(L_i / lambda); lambda = inf returns exactly 1.
double batch_g_tilde(std::span<const double> batch_losses, double lambda);
double batch_log_g_tilde(std::span<const double> batch_losses, double lambda);

// s' = (1 - gamma) s + gamma g_tilde.
double update_normalizer(double s, double g_tilde, double ema_gamma);
double update_normalizer_log(double log_s, double log_g_tilde, double ema_gamma);

// p~_i = exp(L_i / lambda) / s_next. The batch sum is not constrained to 1.
std::vector<double> batch_weights(std::span<const double> batch_losses, double lambda,
                                  double s_next);

// One ABSGD iteration: forward, normalizer update, attention weights, one
// weighted backward, momentum update. `eta` is the effective step size for
// this iteration (after any learning-rate schedule).
double absgd_step(ParamVector& params, const ModelArch& arch, const Matrix& features,
                const std::vector<int>& labels, const LossContext& ctx,
                const AbsgdConfig& config, double eta, AbsgdState& state);

// Momentum SGD, i.e. the unit-weight special case.
double sgd_momentum_step(ParamVector& params, const ModelArch& arch, const Matrix& features,
                       const std::vector<int>& labels, const LossContext& ctx,
                       double eta, double beta, double weight_decay, AbsgdState& state);

// Normalized-EMA parameterization: v' = (1-beta0) v + beta0 grad,
// w' = w - eta0 v'. Equivalent to sgd_momentum_step under eta = eta0*beta0,
// beta = 1 - beta0.
struct EmaSgdState {
  std::vector<double> velocity;
  std::uint64_t step = 0;
};
double sgd_momentum_step_ema(ParamVector& params, const ModelArch& arch,
                           const Matrix& features, const std::vector<int>& labels,
                           const LossContext& ctx, double eta0, double beta0,
                           double weight_decay, EmaSgdState& state);

}  // namespace absgd
