#include "absgd/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "absgd/errors.hpp"

namespace absgd {

namespace {
thread_local std::uint64_t g_backward_count = 0;
}

std::uint64_t backward_pass_count() { return g_backward_count; }
void reset_backward_pass_count() { g_backward_count = 0; }

ParamVector make_params(const ModelArch& arch) {
  if (arch.input_dim < 1 || arch.num_classes < 1)
    throw ValidationError("arch dims must be >= 1");
  for (std::size_t h : arch.hidden_dims)
    if (h < 1) throw ValidationError("arch dims must be >= 1");

  ParamVector p;
  std::size_t offset = 0;
  std::size_t in = arch.input_dim;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    const std::size_t out =
        l < arch.hidden_dims.size() ? arch.hidden_dims[l] : arch.num_classes;
    LayerShape s;
    s.in = in;
    s.out = out;
    s.weight_offset = offset;
    offset += in * out;
    s.bias_offset = offset;
    offset += out;
    p.layers.push_back(s);
    in = out;
  }
  p.values.assign(offset, 0.0);
  p.trainable.assign(p.layers.size(), 1);
  return p;
}

ParamVector init_params(const ModelArch& arch, Rng& rng, InitPolicy policy, double scale) {
  ParamVector p = make_params(arch);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const double sd = policy == InitPolicy::Zero ? 0.0
                      : policy == InitPolicy::FanIn
                          ? std::sqrt(2.0 / static_cast<double>(p.layers[l].in))
                          : scale;
    for (double& w : p.weights(l)) w = sd * rng.next_gaussian();
  }
  return p;
}

BatchEval forward(const ParamVector& params, const ModelArch& arch, const Matrix& features) {
  if (features.cols() != arch.input_dim)
    throw ValidationError("forward: feature width does not match arch input_dim");
  const std::size_t batch = features.rows();
  BatchEval eval;
  const Matrix* act = &features;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& shape = params.layers[l];
    const auto w = params.weights(l);
    const auto b = params.biases(l);
    Matrix out(batch, shape.out);
    for (std::size_t i = 0; i < batch; ++i) {
      const auto x = act->row(i);
      for (std::size_t o = 0; o < shape.out; ++o) {
        double acc = b[o];
        const double* wr = w.data() + o * shape.in;
        for (std::size_t j = 0; j < shape.in; ++j) acc += wr[j] * x[j];
        out(i, o) = acc;
      }
    }
    if (l + 1 < params.layers.size()) {
      eval.preacts.push_back(out);
      for (double& v : out.data()) v = v > 0.0 ? v : 0.0;  // rectifier, 0 at the kink
      eval.activations.push_back(std::move(out));
      act = &eval.activations.back();
    } else {
      eval.logits = std::move(out);
    }
  }
  return eval;
}

void eval_losses(BatchEval& eval, const LossContext& ctx, const std::vector<int>& labels) {
  const std::size_t batch = eval.logits.rows();
  if (labels.size() != batch) throw ValidationError("eval_losses: label count mismatch");
  eval.per_sample_losses.resize(batch);
  for (std::size_t i = 0; i < batch; ++i)
    eval.per_sample_losses[i] = ctx.value(eval.logits.row(i), labels[i]);
}

ParamVector weighted_backward(const ParamVector& params, const ModelArch& arch,
                              const Matrix& features, const BatchEval& eval,
                              const std::vector<int>& labels,
                              std::span<const double> per_sample_weights,
                              const LossContext& ctx) {
  const std::size_t batch = features.rows();
  if (per_sample_weights.size() != batch)
    throw ValidationError("weighted_backward: weight count mismatch");
  for (double w : per_sample_weights)
    if (w < 0.0) throw ValidationError("weighted_backward: negative sample weight");

  ++g_backward_count;

  ParamVector grad = make_params(arch);
  grad.trainable = params.trainable;

  // delta at the logits: (weight_i / B) * dLoss/dlogits
  const std::size_t num_classes = arch.num_classes;
  Matrix delta(batch, num_classes);
  for (std::size_t i = 0; i < batch; ++i) {
    ctx.value_and_grad(eval.logits.row(i), labels[i], delta.row(i));
    const double scale = per_sample_weights[i] / static_cast<double>(batch);
    for (double& v : delta.row(i)) v *= scale;
  }

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const auto& shape = params.layers[l];
    const Matrix& input = l == 0 ? features : eval.activations[l - 1];
    if (params.trainable[l]) {
      auto gw = grad.weights(l);
      auto gb = grad.biases(l);
      for (std::size_t i = 0; i < batch; ++i) {
        const auto d = delta.row(i);
        const auto x = input.row(i);
        for (std::size_t o = 0; o < shape.out; ++o) {
          double* gwr = gw.data() + o * shape.in;
          const double dv = d[o];
          if (dv == 0.0) continue;
          for (std::size_t j = 0; j < shape.in; ++j) gwr[j] += dv * x[j];
          gb[o] += dv;
        }
      }
    }
    if (l == 0) break;
    // propagate: delta_prev = (delta . W) o relu'(preact)
    const auto w = params.weights(l);
    const Matrix& pre = eval.preacts[l - 1];
    Matrix prev(batch, shape.in);
    for (std::size_t i = 0; i < batch; ++i) {
      const auto d = delta.row(i);
      auto pd = prev.row(i);
      for (std::size_t j = 0; j < shape.in; ++j) {
        if (pre(i, j) <= 0.0) {
          pd[j] = 0.0;
          continue;
        }
        double acc = 0.0;
        for (std::size_t o = 0; o < shape.out; ++o) acc += d[o] * w[o * shape.in + j];
        pd[j] = acc;
      }
    }
    delta = std::move(prev);
  }
  return grad;
}

ParamVector finite_diff_grad(const std::function<double(const ParamVector&)>& objective,
                             const ParamVector& params, double h) {
  ParamVector grad = params;
  std::fill(grad.values.begin(), grad.values.end(), 0.0);
  ParamVector probe = params;
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double orig = params.values[i];
    probe.values[i] = orig + h;
    const double fp = objective(probe);
    probe.values[i] = orig - h;
    const double fm = objective(probe);
    probe.values[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_diff_grad: non-finite objective value");
    grad.values[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

std::pair<double, ParamVector> l2_reg(const ParamVector& params, double weight_decay) {
  if (weight_decay < 0.0) throw ValidationError("l2_reg: weight_decay must be >= 0");
  ParamVector grad = params;
  std::fill(grad.values.begin(), grad.values.end(), 0.0);
  double value = 0.0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (!params.trainable[l]) continue;
    const auto w = params.weights(l);
    auto g = grad.weights(l);
    for (std::size_t j = 0; j < w.size(); ++j) {
      value += w[j] * w[j];
      g[j] = weight_decay * w[j];
    }
  }
  return {0.5 * weight_decay * value, std::move(grad)};
}

void add_l2_grad(const ParamVector& params, double weight_decay, ParamVector& grad) {
  if (weight_decay == 0.0) return;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (!params.trainable[l]) continue;
    const auto w = params.weights(l);
    auto g = grad.weights(l);
    for (std::size_t j = 0; j < w.size(); ++j) g[j] += weight_decay * w[j];
  }
}

void save_checkpoint(const std::string& path, const ModelArch& arch,
                     const ParamVector& params) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "absgd-checkpoint 1\n";
  f << arch.input_dim;
  for (std::size_t h : arch.hidden_dims) f << ' ' << h;
  f << '\n' << arch.num_classes << '\n';
  for (char t : params.trainable) f << int(t) << ' ';
  f << '\n';
  char buf[40];
  for (double v : params.values) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    f << buf;
  }
  if (!f) throw IoError("write failed: " + path);
}

std::pair<ModelArch, ParamVector> load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string magic;
  int version = 0;
  f >> magic >> version;
  if (magic != "absgd-checkpoint" || version != 1)
    throw IoError("not an absgd checkpoint: " + path);
  std::string line;
  std::getline(f, line);
  std::getline(f, line);
  ModelArch arch;
  {
    std::istringstream dims(line);
    std::size_t v;
    dims >> arch.input_dim;
    while (dims >> v) arch.hidden_dims.push_back(v);
  }
  f >> arch.num_classes;
  ParamVector params = make_params(arch);
  for (auto& t : params.trainable) {
    int v;
    f >> v;
    t = static_cast<char>(v);
  }
  for (double& v : params.values) f >> v;
  if (!f) throw IoError("truncated checkpoint: " + path);
  return {std::move(arch), std::move(params)};
}

}  // namespace absgd
