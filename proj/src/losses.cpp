#include "absgd/losses.hpp"

#include <algorithm>
#include <cmath>

#include "absgd/errors.hpp"
#include "absgd/math.hpp"

namespace absgd {

namespace {

void check_label(std::span<const double> logits, int y, const char* who) {
  if (y < 0 || static_cast<std::size_t>(y) >= logits.size())
    throw ValidationError(std::string(who) + ": label out of range");
}

}  // namespace

double ce_loss(std::span<const double> logits_row, int y) {
  check_label(logits_row, y, "ce_loss");
  return log_sum_exp(logits_row) - logits_row[y];
}

double focal_loss(std::span<const double> logits_row, int y, double focal_gamma) {
  check_label(logits_row, y, "focal_loss");
  if (focal_gamma < 0.0) throw ValidationError("focal_loss: gamma must be >= 0");
  const double ce = log_sum_exp(logits_row) - logits_row[y];
  const double pt = std::exp(-ce);
  return std::pow(1.0 - pt, focal_gamma) * ce;
}

double ldam_loss(std::span<const double> logits_row, int y, std::span<const double> margins,
                 double scale) {
  check_label(logits_row, y, "ldam_loss");
  if (scale <= 0.0) throw ValidationError("ldam_loss: scale must be > 0");
  std::vector<double> shifted(logits_row.begin(), logits_row.end());
  shifted[y] -= margins[y];
  for (double& v : shifted) v *= scale;
  return ce_loss(shifted, y);
}

std::vector<double> ldam_margins(std::span<const long> class_counts, double margin_constant,
                                 double exponent) {
  std::vector<double> margins(class_counts.size());
  for (std::size_t j = 0; j < class_counts.size(); ++j) {
    if (class_counts[j] < 1) throw ValidationError("ldam_margins: zero class count");
    margins[j] = 1.0 / std::pow(static_cast<double>(class_counts[j]), exponent);
  }
  const double max_m = *std::max_element(margins.begin(), margins.end());
  for (double& m : margins) m *= margin_constant / max_m;
  return margins;
}

std::vector<double> cb_class_weights(std::span<const long> class_counts, double beta_cb) {
  if (beta_cb < 0.0 || beta_cb >= 1.0)
    throw ValidationError("cb_class_weights: beta must be in [0, 1)");
  std::vector<double> w(class_counts.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < class_counts.size(); ++j) {
    if (class_counts[j] < 1) throw ValidationError("cb_class_weights: zero class count");
    const double effective =
        beta_cb == 0.0
            ? 1.0
            : (1.0 - std::pow(beta_cb, static_cast<double>(class_counts[j]))) / (1.0 - beta_cb);
    w[j] = 1.0 / effective;
    sum += w[j];
  }
  const double scale = static_cast<double>(class_counts.size()) / sum;
  for (double& v : w) v *= scale;
  return w;
}

std::vector<double> class_weights_for(const LossSpec& spec, int epoch,
                                      std::span<const long> class_counts) {
  std::vector<double> ones(class_counts.size(), 1.0);
  if (spec.class_weighting == ClassWeighting::None) return ones;
  if (spec.defer_epoch && epoch < *spec.defer_epoch) return ones;
  if (spec.class_weighting == ClassWeighting::ClassBalanced)
    return cb_class_weights(class_counts, spec.beta_cb);
  if (spec.explicit_weights.size() != class_counts.size())
    throw ValidationError("explicit class weights size mismatch");
  for (double w : spec.explicit_weights)
    if (w <= 0.0) throw ValidationError("explicit class weights must be > 0");
  return spec.explicit_weights;
}

double effective_loss(const LossSpec& spec, int epoch, std::span<const long> class_counts,
                      std::span<const double> logits_row, int y) {
  return LossContext::make(spec, epoch, class_counts).value(logits_row, y);
}

LossContext LossContext::make(const LossSpec& spec, int epoch,
                              std::span<const long> class_counts) {
  LossContext ctx;
  ctx.spec = spec;
  if (spec.base == BaseLoss::Ldam)
    ctx.margins = ldam_margins(class_counts, spec.margin_constant, spec.ldam_exponent);
  ctx.class_weights = class_weights_for(spec, epoch, class_counts);
  return ctx;
}

double LossContext::value(std::span<const double> logits_row, int y) const {
  double base;
  switch (spec.base) {
    case BaseLoss::CrossEntropy:
      base = ce_loss(logits_row, y);
      break;
    case BaseLoss::Focal:
      base = focal_loss(logits_row, y, spec.focal_gamma);
      break;
    case BaseLoss::Ldam:
      base = ldam_loss(logits_row, y, margins, spec.ldam_scale);
      break;
    default:
      throw ValidationError("unknown base loss");
  }
  return class_weights[y] * base;
}

double LossContext::value_and_grad(std::span<const double> logits_row, int y,
                                   std::span<double> grad_out) const {
  check_label(logits_row, y, "loss grad");
  const double cw = class_weights[y];
  const std::size_t num_classes = logits_row.size();

  switch (spec.base) {
    case BaseLoss::CrossEntropy: {
      stable_softmax(logits_row, grad_out);
      const double loss = log_sum_exp(logits_row) - logits_row[y];
      for (std::size_t k = 0; k < num_classes; ++k) grad_out[k] *= cw;
      grad_out[y] -= cw;
      return cw * loss;
    }
    case BaseLoss::Focal: {
      std::vector<double> q(num_classes);
      stable_softmax(logits_row, q);
      const double ce = log_sum_exp(logits_row) - logits_row[y];
      const double pt = q[y];
      const double g = spec.focal_gamma;
      const double one_m = 1.0 - pt;
      const double pow_g = std::pow(one_m, g);
      // d/dz_k = (q_k - 1[k=y]) * (gamma (1-p)^{g-1} p ce + (1-p)^g)
      double factor = pow_g;
      if (g > 0.0 && one_m > 0.0) factor += g * std::pow(one_m, g - 1.0) * pt * ce;
      for (std::size_t k = 0; k < num_classes; ++k)
        grad_out[k] = cw * factor * (q[k] - (static_cast<int>(k) == y ? 1.0 : 0.0));
      return cw * pow_g * ce;
    }
    case BaseLoss::Ldam: {
      std::vector<double> shifted(logits_row.begin(), logits_row.end());
      shifted[y] -= margins[y];
      for (double& v : shifted) v *= spec.ldam_scale;
      stable_softmax(shifted, grad_out);
      const double loss = log_sum_exp(shifted) - shifted[y];
      for (std::size_t k = 0; k < num_classes; ++k) grad_out[k] *= cw * spec.ldam_scale;
      grad_out[y] -= cw * spec.ldam_scale;
      return cw * loss;
    }
  }
  throw ValidationError("unknown base loss");
}

}  // namespace absgd
