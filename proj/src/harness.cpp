#include "absgd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "absgd/errors.hpp"
#include "absgd/math.hpp"

namespace absgd {

using nlohmann::json;

namespace fs = std::filesystem;

double lr_at(const LrSchedule& schedule, int epoch, int total_epochs, double base_lr,
             int restart_epoch) {
  if (epoch < 1) throw ValidationError("lr_at: epoch is 1-based");
  if (schedule.kind == LrSchedule::Kind::Stagewise) {
    int passed = 0;
    for (int m : schedule.milestones)
      if (epoch >= m) ++passed;
    return base_lr / std::pow(schedule.factor, passed);
  }
  // cosine
  double progress;
  if (restart_epoch > 1 && epoch >= restart_epoch) {
    progress = static_cast<double>(epoch - restart_epoch + 1) /
               static_cast<double>(total_epochs - restart_epoch + 1);
  } else {
    progress = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  }
  const double pi = 3.141592653589793238462643383279502884;
  return base_lr * (1.0 + std::cos(pi * progress)) / 2.0;
}

namespace {

// Blobs around fixed per-class means (shared between the train and test split).
Dataset sample_blobs(const Matrix& means, const std::vector<long>& counts, double stddev,
                     Rng& rng) {
  long n = 0;
  for (long c : counts) n += c;
  Dataset ds;
  ds.features = Matrix(static_cast<std::size_t>(n), means.cols());
  ds.labels.reserve(n);
  std::size_t row = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    for (long j = 0; j < counts[k]; ++j, ++row) {
      for (std::size_t c = 0; c < means.cols(); ++c)
        ds.features(row, c) = means(k, c) + stddev * rng.next_gaussian();
      ds.labels.push_back(static_cast<int>(k));
    }
  }
  ds.class_counts.assign(counts.begin(), counts.end());
  return ds;
}

// rng stream ids used by a run; keep them distinct and stable
enum Stream : std::uint64_t {
  kStreamMeans = 10,
  kStreamTrain = 11,
  kStreamTest = 12,
  kStreamNoise = 13,
  kStreamInit = 20,
  kStreamProbe = 21,
  kStreamShuffle = 22,
};

}  // namespace

std::pair<Dataset, Dataset> build_datasets(const DataSpec& spec, std::uint64_t seed) {
  Rng train_rng(seed, kStreamTrain);
  Rng test_rng(seed, kStreamTest);
  Dataset train, test;
  switch (spec.kind) {
    case DataSpec::Kind::Lt:
    case DataSpec::Kind::St: {
      const std::vector<long> counts = spec.kind == DataSpec::Kind::Lt
                                           ? lt_counts(spec.num_classes, spec.n0, spec.rho)
                                           : st_counts(spec.num_classes, spec.n0, spec.rho);
      Rng means_rng(seed, kStreamMeans);
      Matrix means(spec.num_classes, spec.dim);
      for (double& v : means.data()) v = spec.class_sep * means_rng.next_gaussian();
      train = sample_blobs(means, counts, spec.stddev, train_rng);
      const std::vector<long> balanced(spec.num_classes, spec.test_per_class);
      test = sample_blobs(means, balanced, spec.stddev, test_rng);
      break;
    }
    case DataSpec::Kind::Gaussian2d: {
      train = gaussian_mixture_2d(spec.counts, spec.means, spec.stddevs, train_rng);
      const std::vector<long> balanced(spec.counts.size(), spec.test_per_class);
      test = gaussian_mixture_2d(balanced, spec.means, spec.stddevs, test_rng);
      break;
    }
    case DataSpec::Kind::Csv: {
      train = read_csv(spec.train_csv);
      test = read_csv(spec.test_csv);
      break;
    }
  }
  if (spec.flip_probability > 0.0) {
    Rng noise_rng(seed, kStreamNoise);
    train = inject_label_noise(train, NoiseSpec{spec.flip_probability}, noise_rng).first;
  }
  return {std::move(train), std::move(test)};
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ValidationError("unknown config key '" + it.key() + "' in " + where);
  }
}

DataSpec parse_data(const json& j) {
  DataSpec d;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "lt" || kind == "st") {
    check_keys(j,
               {"kind", "num_classes", "n0", "rho", "dim", "class_sep", "stddev",
                "test_per_class", "flip_probability"},
               "data");
    d.kind = kind == "lt" ? DataSpec::Kind::Lt : DataSpec::Kind::St;
    d.num_classes = j.at("num_classes").get<int>();
    d.n0 = j.at("n0").get<long>();
    d.rho = j.at("rho").get<double>();
    d.dim = j.value("dim", 2);
    d.class_sep = j.value("class_sep", 1.0);
    d.stddev = j.value("stddev", 1.0);
    d.test_per_class = j.value("test_per_class", 100);
    d.flip_probability = j.value("flip_probability", 0.0);
  } else if (kind == "gaussian2d") {
    check_keys(j, {"kind", "counts", "means", "stddevs", "test_per_class",
                   "flip_probability"},
               "data");
    d.kind = DataSpec::Kind::Gaussian2d;
    d.counts = j.at("counts").get<std::vector<long>>();
    for (const auto& m : j.at("means"))
      d.means.push_back({m.at(0).get<double>(), m.at(1).get<double>()});
    d.stddevs = j.at("stddevs").get<std::vector<double>>();
    d.test_per_class = j.value("test_per_class", 100);
    d.flip_probability = j.value("flip_probability", 0.0);
    d.num_classes = static_cast<int>(d.counts.size());
    d.dim = 2;
  } else if (kind == "csv") {
    check_keys(j, {"kind", "train", "test", "flip_probability"}, "data");
    d.kind = DataSpec::Kind::Csv;
    d.train_csv = j.at("train").get<std::string>();
    d.test_csv = j.at("test").get<std::string>();
    d.flip_probability = j.value("flip_probability", 0.0);
  } else {
    throw ValidationError("unknown data kind '" + kind + "'");
  }
  return d;
}

LossSpec parse_loss(const json& j) {
  check_keys(j,
             {"base", "focal_gamma", "margin_constant", "ldam_exponent", "ldam_scale",
              "class_weighting", "beta_cb", "class_weights", "defer_epoch"},
             "loss");
  LossSpec l;
  const std::string base = j.value("base", "ce");
  if (base == "ce")
    l.base = BaseLoss::CrossEntropy;
  else if (base == "focal")
    l.base = BaseLoss::Focal;
  else if (base == "ldam")
    l.base = BaseLoss::Ldam;
  else
    throw ValidationError("unknown loss base '" + base + "'");
  l.focal_gamma = j.value("focal_gamma", 2.0);
  l.margin_constant = j.value("margin_constant", 0.5);
  l.ldam_exponent = j.value("ldam_exponent", 0.25);
  l.ldam_scale = j.value("ldam_scale", 30.0);
  const std::string cw = j.value("class_weighting", "none");
  if (cw == "none")
    l.class_weighting = ClassWeighting::None;
  else if (cw == "class_balanced")
    l.class_weighting = ClassWeighting::ClassBalanced;
  else if (cw == "explicit")
    l.class_weighting = ClassWeighting::Explicit;
  else
    throw ValidationError("unknown class_weighting '" + cw + "'");
  l.beta_cb = j.value("beta_cb", 0.9999);
  if (j.contains("class_weights"))
    l.explicit_weights = j.at("class_weights").get<std::vector<double>>();
  if (j.contains("defer_epoch")) l.defer_epoch = j.at("defer_epoch").get<int>();
  return l;
}

double parse_lambda(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf") return kLambdaInf;
    throw ValidationError("lambda must be a number or \"inf\", got '" + s + "'");
  }
  return v.get<double>();
}

ExperimentConfig parse_config_impl(const json& j) {
  check_keys(j,
             {"name", "data", "arch", "loss", "optimizer", "epochs", "batch_size",
              "lr_schedule", "seeds", "probe_every", "probe_subset", "output_dir"},
             "config");
  ExperimentConfig c;
  c.name = j.value("name", "");
  c.data = parse_data(j.at("data"));

  const json& a = j.at("arch");
  check_keys(a, {"input_dim", "hidden_dims", "num_classes"}, "arch");
  c.arch.input_dim = a.at("input_dim").get<std::size_t>();
  if (a.contains("hidden_dims"))
    c.arch.hidden_dims = a.at("hidden_dims").get<std::vector<std::size_t>>();
  c.arch.num_classes = a.at("num_classes").get<std::size_t>();
  if (c.arch.hidden_dims.size() > 2)
    throw ValidationError("at most 2 hidden layers are supported");

  c.loss = parse_loss(j.at("loss"));

  const json& o = j.at("optimizer");
  check_keys(o,
             {"optimizer", "eta", "beta", "ema_gamma", "weight_decay", "lambda",
              "lambda_stage2", "switch_epoch", "normalizer_init", "log_domain", "freeze"},
             "optimizer");
  const std::string method = o.value("optimizer", "absgd");
  if (method == "absgd")
    c.use_absgd = true;
  else if (method == "sgd")
    c.use_absgd = false;
  else
    throw ValidationError("optimizer must be \"absgd\" or \"sgd\"");
  c.opt.eta = o.at("eta").get<double>();
  c.opt.beta = o.value("beta", 0.9);
  c.opt.ema_gamma = o.value("ema_gamma", 0.9);
  c.opt.weight_decay = o.value("weight_decay", 0.0);
  if (o.contains("lambda_stage2")) {
    c.opt.schedule.kind = LambdaSchedule::Kind::TwoStage;
    c.opt.schedule.stage2_lambda = parse_lambda(o.at("lambda_stage2"));
    c.opt.schedule.switch_epoch = o.at("switch_epoch").get<int>();
  } else {
    c.opt.schedule.kind = LambdaSchedule::Kind::Constant;
    c.opt.schedule.lambda = o.contains("lambda") ? parse_lambda(o.at("lambda")) : kLambdaInf;
  }
  const std::string init = o.value("normalizer_init", "warm");
  if (init == "warm")
    c.opt.normalizer_init = NormalizerInit::WarmFirstBatch;
  else if (init == "cold")
    c.opt.normalizer_init = NormalizerInit::ColdZero;
  else
    throw ValidationError("normalizer_init must be \"warm\" or \"cold\"");
  c.opt.log_domain = o.value("log_domain", true);
  if (o.contains("freeze")) c.freeze = o.at("freeze").get<std::vector<int>>();

  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  if (c.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (c.batch_size < 1) throw ValidationError("batch_size must be >= 1");

  if (j.contains("lr_schedule")) {
    const json& s = j.at("lr_schedule");
    check_keys(s, {"kind", "milestones", "factor"}, "lr_schedule");
    const std::string kind = s.value("kind", "stagewise");
    if (kind == "stagewise")
      c.lr.kind = LrSchedule::Kind::Stagewise;
    else if (kind == "cosine")
      c.lr.kind = LrSchedule::Kind::Cosine;
    else
      throw ValidationError("lr_schedule kind must be \"stagewise\" or \"cosine\"");
    if (s.contains("milestones")) c.lr.milestones = s.at("milestones").get<std::vector<int>>();
    c.lr.factor = s.value("factor", 100.0);
    for (std::size_t i = 1; i < c.lr.milestones.size(); ++i)
      if (c.lr.milestones[i] <= c.lr.milestones[i - 1])
        throw ValidationError("lr milestones must be strictly increasing");
  }

  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.probe_every = j.value("probe_every", 0);
  c.probe_subset = j.value("probe_subset", 512);
  c.output_dir = j.value("output_dir", "");

  if (c.name.empty())
    c.name = std::string(c.use_absgd ? "absgd" : "sgd");
  if (c.use_absgd) c.opt.validate();
  return c;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  try {
    return parse_config_impl(j);
  } catch (const json::exception& e) {
    // missing or mistyped keys surface as validation failures, not json internals
    throw ValidationError(std::string("invalid config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config parse error in " + path + ": " + e.what());
  }
  return parse_config(j);
}

namespace {

json config_to_json(const ExperimentConfig& c);  // forward (defined below)

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["use_absgd"] = c.use_absgd;
  j["arch"] = {{"input_dim", c.arch.input_dim},
               {"hidden_dims", c.arch.hidden_dims},
               {"num_classes", c.arch.num_classes}};
  j["loss"] = {{"base", static_cast<int>(c.loss.base)},
               {"focal_gamma", c.loss.focal_gamma},
               {"margin_constant", c.loss.margin_constant},
               {"ldam_exponent", c.loss.ldam_exponent},
               {"ldam_scale", c.loss.ldam_scale},
               {"class_weighting", static_cast<int>(c.loss.class_weighting)},
               {"beta_cb", c.loss.beta_cb},
               {"defer_epoch", c.loss.defer_epoch ? json(*c.loss.defer_epoch) : json()}};
  j["opt"] = {{"eta", c.opt.eta},
              {"beta", c.opt.beta},
              {"ema_gamma", c.opt.ema_gamma},
              {"weight_decay", c.opt.weight_decay},
              {"schedule_kind", static_cast<int>(c.opt.schedule.kind)},
              {"lambda", std::isinf(c.opt.schedule.lambda) ? json("inf")
                                                           : json(c.opt.schedule.lambda)},
              {"stage2_lambda", c.opt.schedule.stage2_lambda},
              {"switch_epoch", c.opt.schedule.switch_epoch},
              {"normalizer_init", static_cast<int>(c.opt.normalizer_init)},
              {"log_domain", c.opt.log_domain}};
  j["freeze"] = c.freeze;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = {{"kind", static_cast<int>(c.lr.kind)},
             {"milestones", c.lr.milestones},
             {"factor", c.lr.factor}};
  j["data_kind"] = static_cast<int>(c.data.kind);
  j["data"] = {{"num_classes", c.data.num_classes}, {"n0", c.data.n0},
               {"rho", c.data.rho},               {"dim", c.data.dim},
               {"class_sep", c.data.class_sep},   {"stddev", c.data.stddev},
               {"test_per_class", c.data.test_per_class},
               {"flip_probability", c.data.flip_probability},
               {"counts", c.data.counts},         {"stddevs", c.data.stddevs},
               {"train_csv", c.data.train_csv},   {"test_csv", c.data.test_csv}};
  j["probe_every"] = c.probe_every;
  j["probe_subset"] = c.probe_subset;
  return j;
}

}  // namespace

std::string config_hash(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(config_to_json(config).dump())));
  return buf;
}

Metrics evaluate(const ParamVector& params, const ModelArch& arch, const Dataset& dataset,
                 const std::vector<long>& train_counts) {
  if (dataset.size() == 0) throw ValidationError("evaluate: empty dataset");
  const std::size_t num_classes = arch.num_classes;
  Metrics m;
  m.confusion.assign(num_classes, std::vector<long>(num_classes, 0));
  const BatchEval eval = forward(params, arch, dataset.features);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto row = eval.logits.row(i);
    std::size_t pred = 0;
    for (std::size_t k = 1; k < num_classes; ++k)
      if (row[k] > row[pred]) pred = k;  // ties go to the lowest index
    ++m.confusion[dataset.labels[i]][pred];
  }
  long correct = 0;
  m.per_class.assign(num_classes, 0.0);
  for (std::size_t k = 0; k < num_classes; ++k) {
    long row_total = 0;
    for (long v : m.confusion[k]) row_total += v;
    correct += m.confusion[k][k];
    m.per_class[k] =
        row_total > 0 ? static_cast<double>(m.confusion[k][k]) / row_total : 0.0;
  }
  m.top1 = static_cast<double>(correct) / static_cast<double>(dataset.size());

  const std::vector<long>& counts =
      train_counts.empty() ? dataset.class_counts : train_counts;
  std::vector<std::size_t> order(num_classes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  const std::size_t majors = (num_classes + 1) / 2;
  double maj = 0.0, min_ = 0.0;
  for (std::size_t r = 0; r < num_classes; ++r)
    (r < majors ? maj : min_) += m.per_class[order[r]];
  m.majority_acc = maj / static_cast<double>(majors);
  m.minority_acc =
      num_classes > majors ? min_ / static_cast<double>(num_classes - majors) : 0.0;
  return m;
}

namespace {

Dataset take_subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.features = Matrix(idx.size(), ds.dim());
  out.labels.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto src = ds.features.row(idx[r]);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    out.labels.push_back(ds.labels[idx[r]]);
  }
  out.class_counts = tally_labels(out.labels, static_cast<int>(ds.num_classes()));
  return out;
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                         ParamVector* final_params) {
  const auto start = std::chrono::steady_clock::now();
  if (config.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (config.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (config.use_absgd) config.opt.validate();

  RunRecord record;
  record.config_hash = config_hash(config);
  record.name = config.name;
  record.seed = seed;

  auto [train, test] = build_datasets(config.data, seed);
  if (train.size() == 0) throw ValidationError("empty training set");
  if (train.dim() != config.arch.input_dim)
    throw ValidationError("data dimension does not match arch input_dim");

  Rng init_rng(seed, kStreamInit);
  ParamVector params = init_params(config.arch, init_rng, InitPolicy::FanIn);
  for (int l : config.freeze) {
    if (l < 0 || static_cast<std::size_t>(l) >= params.layers.size())
      throw ValidationError("freeze index out of range");
    params.trainable[l] = 0;
  }

  // fixed probe subsample, drawn once per run
  Rng probe_rng(seed, kStreamProbe);
  std::vector<std::size_t> probe_idx(train.size());
  std::iota(probe_idx.begin(), probe_idx.end(), 0);
  const std::size_t probe_n =
      std::min<std::size_t>(train.size(), static_cast<std::size_t>(config.probe_subset));
  for (std::size_t j = 0; j < probe_n; ++j) {
    const std::size_t pick = j + probe_rng.next_index(probe_idx.size() - j);
    std::swap(probe_idx[j], probe_idx[pick]);
  }
  probe_idx.resize(probe_n);
  const Dataset probe_set = take_subset(train, probe_idx);

  AbsgdState state = make_state(params, config.opt);
  const RegSpec reg{config.opt.weight_decay};

  Rng shuffle_rng(seed, kStreamShuffle);
  std::vector<std::size_t> perm(train.size());
  std::iota(perm.begin(), perm.end(), 0);

  const int restart_epoch = config.use_absgd &&
                                    config.opt.schedule.kind == LambdaSchedule::Kind::TwoStage
                                ? config.opt.schedule.switch_epoch
                                : 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.use_absgd) set_epoch_lambda(state, config.opt, epoch);
    const double eta =
        lr_at(config.lr, epoch, config.epochs, config.opt.eta, restart_epoch);
    const LossContext ctx = LossContext::make(config.loss, epoch, train.class_counts);

    // per-epoch reshuffle, sampling without replacement
    for (std::size_t j = 0; j + 1 < perm.size(); ++j) {
      const std::size_t pick = j + shuffle_rng.next_index(perm.size() - j);
      std::swap(perm[j], perm[pick]);
    }

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t begin = 0; begin < perm.size(); begin += config.batch_size) {
      const std::size_t bsz = std::min<std::size_t>(config.batch_size, perm.size() - begin);
      Matrix feats(bsz, train.dim());
      std::vector<int> labels(bsz);
      for (std::size_t r = 0; r < bsz; ++r) {
        const auto src = train.features.row(perm[begin + r]);
        std::copy(src.begin(), src.end(), feats.row(r).begin());
        labels[r] = train.labels[perm[begin + r]];
      }
      const std::uint64_t bp_before = backward_pass_count();
      double batch_loss;
      try {
        batch_loss = config.use_absgd
                         ? absgd_step(params, config.arch, feats, labels, ctx, config.opt,
                                      eta, state)
                         : sgd_momentum_step(params, config.arch, feats, labels, ctx, eta,
                                             config.opt.beta, config.opt.weight_decay,
                                             state);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(state.step + 1) + ": " + e.what());
      }
      record.backward_passes += backward_pass_count() - bp_before;
      ++record.steps;
      loss_sum += batch_loss * static_cast<double>(bsz);
      loss_count += bsz;

      if (config.probe_every > 0 && record.steps % config.probe_every == 0) {
        ParamVector g =
            grad_f_lambda(params, config.arch, probe_set, ctx, state.lambda, reg);
        double nsq = 0.0;
        for (double v : g.values) nsq += v * v;
        record.probes.push_back({record.steps, nsq});
      }
    }

    EpochTrace row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(loss_count);
    row.test_top1 = evaluate(params, config.arch, test, train.class_counts).top1;
    row.lambda = config.use_absgd ? state.lambda : kLambdaInf;
    row.s = config.use_absgd ? state.s : 1.0;
    const DroDiagnostics diag =
        dro_diagnostics(params, config.arch, probe_set, ctx, row.lambda, reg);
    row.probe_grad_norm_sq = diag.grad_norm_sq;
    row.c0_hat = diag.c0_hat;
    row.c1_hat = diag.c1_hat;
    record.trace.push_back(row);
  }

  record.final_metrics = evaluate(params, config.arch, test, train.class_counts);
  if (final_params) *final_params = params;
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!config.output_dir.empty()) write_run_record(record, config.output_dir);
  return record;
}

std::vector<RunRecord> sweep(const std::vector<ExperimentConfig>& configs, int jobs) {
  struct Task {
    const ExperimentConfig* config;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& c : configs) {
    if (c.seeds.empty()) throw ValidationError("sweep: config '" + c.name + "' has no seeds");
    for (std::uint64_t s : c.seeds) tasks.push_back({&c, s});
  }
  std::vector<RunRecord> records(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        records[i] = run_experiment(*tasks[i].config, tasks[i].seed);
      } catch (const std::exception& e) {
        RunRecord failed;
        failed.config_hash = config_hash(*tasks[i].config);
        failed.name = tasks[i].config->name;
        failed.seed = tasks[i].seed;
        failed.failed = true;
        failed.error = e.what();
        records[i] = std::move(failed);
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return records;
}

namespace {

struct Summary {
  std::string name;
  std::vector<double> top1, minority;
};

std::vector<Summary> summarize(const std::vector<RunRecord>& records) {
  std::vector<Summary> groups;
  for (const auto& r : records) {
    if (r.failed) continue;
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Summary& s) { return s.name == r.name; });
    if (it == groups.end()) {
      groups.push_back({r.name, {}, {}});
      it = groups.end() - 1;
    }
    it->top1.push_back(100.0 * r.final_metrics.top1);
    it->minority.push_back(100.0 * r.final_metrics.minority_acc);
  }
  return groups;
}

std::pair<double, double> mean_pop_std(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / v.size())};  // population std
}

std::string fmt_cell(const std::vector<double>& v) {
  const auto [mean, sd] = mean_pop_std(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f (%.2f)", mean, sd);
  return buf;
}

}  // namespace

std::string compare_report(const std::vector<RunRecord>& records) {
  std::ostringstream out;
  out << "method                     top1            minority        runs\n";
  for (const auto& g : summarize(records)) {
    char line[160];
    std::snprintf(line, sizeof line, "%-26s %-15s %-15s %zu\n", g.name.c_str(),
                  fmt_cell(g.top1).c_str(), fmt_cell(g.minority).c_str(), g.top1.size());
    out << line;
  }
  std::size_t failed = 0;
  for (const auto& r : records)
    if (r.failed) ++failed;
  if (failed > 0) out << "warning: " << failed << " failed run(s) omitted\n";
  return out.str();
}

std::string compare_report_csv(const std::vector<RunRecord>& records) {
  std::ostringstream out;
  out << "method,top1_mean,top1_std,minority_mean,minority_std,runs\n";
  for (const auto& g : summarize(records)) {
    const auto [tm, ts] = mean_pop_std(g.top1);
    const auto [mm, ms] = mean_pop_std(g.minority);
    char line[200];
    std::snprintf(line, sizeof line, "%s,%.2f,%.2f,%.2f,%.2f,%zu\n", g.name.c_str(), tm, ts,
                  mm, ms, g.top1.size());
    out << line;
  }
  return out.str();
}

void emit_plot_data(const ParamVector& params, const ModelArch& arch,
                    const Dataset& dataset, const LossContext& ctx, double lambda,
                    double s, const GridSpec& grid, const std::string& path) {
  if (dataset.dim() != 2 || arch.input_dim != 2)
    throw ValidationError("emit_plot_data: 2-D features required");
  if (s <= 0.0) throw ValidationError("emit_plot_data: normalizer must be > 0");

  {
    std::ofstream f(path + "_grid.csv");
    if (!f) throw IoError("cannot open for writing: " + path + "_grid.csv");
    f << "x,y,pred\n";
    Matrix point(1, 2);
    for (int iy = 0; iy < grid.ny; ++iy) {
      for (int ix = 0; ix < grid.nx; ++ix) {
        const double x =
            grid.nx > 1 ? grid.x_min + (grid.x_max - grid.x_min) * ix / (grid.nx - 1)
                        : grid.x_min;
        const double y =
            grid.ny > 1 ? grid.y_min + (grid.y_max - grid.y_min) * iy / (grid.ny - 1)
                        : grid.y_min;
        point(0, 0) = x;
        point(0, 1) = y;
        const BatchEval eval = forward(params, arch, point);
        const auto row = eval.logits.row(0);
        std::size_t pred = 0;
        for (std::size_t k = 1; k < arch.num_classes; ++k)
          if (row[k] > row[pred]) pred = k;
        f << x << ',' << y << ',' << pred << '\n';
      }
    }
  }
  {
    std::ofstream f(path + "_points.csv");
    if (!f) throw IoError("cannot open for writing: " + path + "_points.csv");
    f << "x,y,label,weight\n";
    BatchEval eval = forward(params, arch, dataset.features);
    eval_losses(eval, ctx, dataset.labels);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const double w = std::isinf(lambda)
                           ? 1.0 / s
                           : std::exp(eval.per_sample_losses[i] / lambda) / s;
      f << dataset.features(i, 0) << ',' << dataset.features(i, 1) << ','
        << dataset.labels[i] << ',' << w << '\n';
    }
  }
}

namespace {

// JSON has no inf/nan literals; encode non-finite doubles as strings
json num_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double num_from_json(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf") return kLambdaInf;
    if (s == "-inf") return -kLambdaInf;
    return std::numeric_limits<double>::quiet_NaN();
  }
  return v.get<double>();
}

json metrics_to_json(const Metrics& m) {
  return {{"top1", m.top1},
          {"per_class", m.per_class},
          {"majority_acc", m.majority_acc},
          {"minority_acc", m.minority_acc},
          {"confusion", m.confusion}};
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.top1 = j.at("top1").get<double>();
  m.per_class = j.at("per_class").get<std::vector<double>>();
  m.majority_acc = j.at("majority_acc").get<double>();
  m.minority_acc = j.at("minority_acc").get<double>();
  m.confusion = j.at("confusion").get<std::vector<std::vector<long>>>();
  return m;
}

}  // namespace

json record_to_json(const RunRecord& record) {
  json j;
  j["config_hash"] = record.config_hash;
  j["name"] = record.name;
  j["seed"] = record.seed;
  j["final"] = record.failed ? json() : metrics_to_json(record.final_metrics);
  j["wall_seconds"] = record.wall_seconds;
  j["steps"] = record.steps;
  j["backward_passes"] = record.backward_passes;
  j["failed"] = record.failed;
  j["error"] = record.error;
  json probes = json::array();
  for (const auto& p : record.probes)
    probes.push_back({{"step", p.step}, {"grad_norm_sq", p.grad_norm_sq}});
  j["probes"] = std::move(probes);
  return j;
}

void write_run_record(const RunRecord& record, const std::string& dir) {
  fs::create_directories(dir);
  const std::string path =
      dir + "/run_" + record.config_hash + "_" + std::to_string(record.seed) + ".jsonl";
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << record_to_json(record).dump() << '\n';
  for (const auto& t : record.trace) {
    json row = {{"epoch", t.epoch},
                {"train_loss", num_to_json(t.train_loss)},
                {"test_top1", t.test_top1},
                {"lambda", num_to_json(t.lambda)},
                {"s", num_to_json(t.s)},
                {"probe_grad_norm_sq", num_to_json(t.probe_grad_norm_sq)},
                {"c0_hat", num_to_json(t.c0_hat)},
                {"c1_hat", num_to_json(t.c1_hat)}};
    f << row.dump() << '\n';
  }
  if (!f) throw IoError("write failed: " + path);
}

RunRecord read_run_record(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty run record: " + path);
  json header = json::parse(line);
  RunRecord r;
  r.config_hash = header.at("config_hash").get<std::string>();
  r.name = header.at("name").get<std::string>();
  r.seed = header.at("seed").get<std::uint64_t>();
  r.failed = header.at("failed").get<bool>();
  r.error = header.at("error").get<std::string>();
  if (!r.failed) r.final_metrics = metrics_from_json(header.at("final"));
  r.wall_seconds = header.at("wall_seconds").get<double>();
  r.steps = header.at("steps").get<std::uint64_t>();
  r.backward_passes = header.at("backward_passes").get<std::uint64_t>();
  for (const auto& p : header.at("probes"))
    r.probes.push_back(
        {p.at("step").get<std::uint64_t>(), p.at("grad_norm_sq").get<double>()});
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json row = json::parse(line);
    EpochTrace t;
    t.epoch = row.at("epoch").get<int>();
    t.train_loss = num_from_json(row.at("train_loss"));
    t.test_top1 = row.at("test_top1").get<double>();
    t.lambda = num_from_json(row.at("lambda"));
    t.s = num_from_json(row.at("s"));
    t.probe_grad_norm_sq = num_from_json(row.at("probe_grad_norm_sq"));
    t.c0_hat = num_from_json(row.at("c0_hat"));
    t.c1_hat = num_from_json(row.at("c1_hat"));
    r.trace.push_back(t);
  }
  return r;
}

std::vector<RunRecord> read_run_dir(const std::string& dir) {
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".jsonl") paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  std::vector<RunRecord> records;
  for (const auto& p : paths) records.push_back(read_run_record(p));
  return records;
}

}  // namespace absgd
