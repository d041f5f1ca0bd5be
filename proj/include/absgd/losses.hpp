#pragma once

#include <optional>
#include <span>
#include <vector>

namespace absgd {

enum class BaseLoss { CrossEntropy, Focal, Ldam };
enum class ClassWeighting { None, ClassBalanced, Explicit };

struct LossSpec {
  BaseLoss base = BaseLoss::CrossEntropy;
  double focal_gamma = 2.0;
  double margin_constant = 0.5;   // LDAM max margin
  double ldam_exponent = 0.25;    // 0.25 default, 0.4 selectable
  double ldam_scale = 30.0;
  ClassWeighting class_weighting = ClassWeighting::None;
  double beta_cb = 0.9999;
  std::vector<double> explicit_weights;
  std::optional<int> defer_epoch;  // class weighting kicks in at this epoch (1-based)
};

struct RegSpec {
  double weight_decay = 0.0;
};

double ce_loss(std::span<const double> logits_row, int y);
double focal_loss(std::span<const double> logits_row, int y, double focal_gamma);
double ldam_loss(std::span<const double> logits_row, int y, std::span<const double> margins,
                 double scale);

// margin_j = margin_constant / counts[j]^exponent, rescaled so the max margin
// equals margin_constant.
std::vector<double> ldam_margins(std::span<const long> class_counts, double margin_constant,
                                 double exponent);

// Effective-number weights w_j ~ (1 - beta) / (1 - beta^n_j), normalized to sum C.
std::vector<double> cb_class_weights(std::span<const long> class_counts, double beta_cb);

// Per-class multipliers for a given epoch; all ones before defer_epoch.
std::vector<double> class_weights_for(const LossSpec& spec, int epoch,
                                      std::span<const long> class_counts);

double effective_loss(const LossSpec& spec, int epoch, std::span<const long> class_counts,
                      std::span<const double> logits_row, int y);

// Everything the per-row evaluation needs, precomputed once per (spec, epoch,
// class_counts).
struct LossContext {
  LossSpec spec;
  std::vector<double> margins;        // empty unless LDAM
  std::vector<double> class_weights;  // size C

  static LossContext make(const LossSpec& spec, int epoch,
                          std::span<const long> class_counts);

  double value(std::span<const double> logits_row, int y) const;
  // Returns the (class-weighted) loss and writes d(loss)/d(logits) into grad_out.
  double value_and_grad(std::span<const double> logits_row, int y,
                        std::span<double> grad_out) const;
};

}  // namespace absgd
