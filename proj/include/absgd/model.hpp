#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "absgd/losses.hpp"
#include "absgd/matrix.hpp"
#include "absgd/rng.hpp"

namespace absgd {

// Linear softmax model when hidden_dims is empty, otherwise an MLP with
// rectifier activations (depth at most 2).
struct ModelArch {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 2;

  std::size_t depth() const { return hidden_dims.size() + 1; }
};

struct LayerShape {
  std::size_t in = 0, out = 0;
  std::size_t weight_offset = 0;  // out x in block, row-major
  std::size_t bias_offset = 0;    // out entries
};

struct ParamVector {
  std::vector<double> values;
  std::vector<LayerShape> layers;
  std::vector<char> trainable;  // per layer freeze mask, 1 = trainable

  std::span<double> weights(std::size_t layer) {
    const auto& s = layers[layer];
    return {values.data() + s.weight_offset, s.in * s.out};
  }
  std::span<const double> weights(std::size_t layer) const {
    const auto& s = layers[layer];
    return {values.data() + s.weight_offset, s.in * s.out};
  }
  std::span<double> biases(std::size_t layer) {
    const auto& s = layers[layer];
    return {values.data() + s.bias_offset, s.out};
  }
  std::span<const double> biases(std::size_t layer) const {
    const auto& s = layers[layer];
    return {values.data() + s.bias_offset, s.out};
  }
};

enum class InitPolicy { Zero, FanIn, Fixed };

// Zero-valued parameter vector shaped for the arch, all layers trainable.
ParamVector make_params(const ModelArch& arch);

// FanIn draws weights with stddev sqrt(2/fan_in); Fixed uses `scale`.
// Biases start at zero.
ParamVector init_params(const ModelArch& arch, Rng& rng, InitPolicy policy,
                        double scale = 0.0);

struct BatchEval {
  Matrix logits;  // B x C
  std::vector<double> per_sample_losses;
  // caches for backprop
  std::vector<Matrix> preacts;      // one per hidden layer
  std::vector<Matrix> activations;  // post-rectifier, one per hidden layer
};

BatchEval forward(const ParamVector& params, const ModelArch& arch, const Matrix& features);

// Fills eval.per_sample_losses from the cached logits.
void eval_losses(BatchEval& eval, const LossContext& ctx, const std::vector<int>& labels);

// Gradient of (1/B) sum_i weight_i * loss_i in a single backward pass.
// Frozen layers get zero gradient. Weights must be >= 0.
ParamVector weighted_backward(const ParamVector& params, const ModelArch& arch,
                              const Matrix& features, const BatchEval& eval,
                              const std::vector<int>& labels,
                              std::span<const double> per_sample_weights,
                              const LossContext& ctx);

// Central differences, one objective pair per coordinate. Skips nothing;
// callers filter kink-adjacent coordinates themselves.
ParamVector finite_diff_grad(const std::function<double(const ParamVector&)>& objective,
                             const ParamVector& params, double h);

// (value, gradient) of (wd/2)*||w||^2 over trainable weight coordinates;
// biases and frozen layers excluded.
std::pair<double, ParamVector> l2_reg(const ParamVector& params, double weight_decay);
// Adds wd * w into grad in place (same exclusions).
void add_l2_grad(const ParamVector& params, double weight_decay, ParamVector& grad);

// Backward-pass instrumentation (per thread).
std::uint64_t backward_pass_count();
void reset_backward_pass_count();

// Text checkpoint, round-trips values bit-exactly.
void save_checkpoint(const std::string& path, const ModelArch& arch,
                     const ParamVector& params);
std::pair<ModelArch, ParamVector> load_checkpoint(const std::string& path);

}  // namespace absgd
