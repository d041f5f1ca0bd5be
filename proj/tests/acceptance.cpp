// Acceptance gate: one criterion per function, one PASS/FAIL line each.
// Exit code is the number of failing criteria.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "absgd/dataset.hpp"
#include "absgd/dro.hpp"
#include "absgd/harness.hpp"
#include "absgd/losses.hpp"
#include "absgd/model.hpp"
#include "absgd/optim.hpp"

using namespace absgd;

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ---------------------------------------------------------------- C1
// Analytic full-batch gradient vs central finite differences across every
// arch/loss/temperature combination in scope.
bool c1_gradient_oracle(std::string& detail) {
  const std::vector<std::vector<std::size_t>> hiddens{{}, {6}, {6, 5}};
  const std::vector<double> lambdas{0.5, 1.0, 10.0, -1.0};
  const double h = 1e-5;
  double worst = 0.0;
  int cases = 0;

  for (std::uint64_t seed : {101, 202}) {
    for (const auto& hidden : hiddens) {
      ModelArch arch{3, hidden, 3};
      for (int loss_id = 0; loss_id < 4; ++loss_id) {
        LossSpec spec;
        if (loss_id == 1) spec.base = BaseLoss::Focal;
        if (loss_id == 2) spec.base = BaseLoss::Ldam;
        if (loss_id == 3) spec.class_weighting = ClassWeighting::ClassBalanced;

        // redraw until every hidden preactivation clears the rectifier kink
        // by a wide margin, so the FD probe cannot flip an activation
        Rng rng(seed);
        ParamVector params;
        Dataset ds;
        for (int attempt = 0;; ++attempt) {
          params = init_params(arch, rng, InitPolicy::FanIn);
          ds = gaussian_blobs({4, 3, 3}, 3, 1.0, 1.0, rng);
          const BatchEval eval = forward(params, arch, ds.features);
          double min_pre = 1.0;
          for (const Matrix& pre : eval.preacts)
            for (double v : pre.data()) min_pre = std::min(min_pre, std::abs(v));
          if (min_pre > 1e-3 || attempt > 50) break;
        }
        const LossContext ctx = LossContext::make(spec, 1, ds.class_counts);

        for (double lambda : lambdas) {
          const ParamVector analytic =
              grad_f_lambda(params, arch, ds, ctx, lambda, RegSpec{0.0});
          const ParamVector fd = finite_diff_grad(
              [&](const ParamVector& p) {
                BatchEval e = forward(p, arch, ds.features);
                eval_losses(e, ctx, ds.labels);
                return f_lambda(e.per_sample_losses, lambda, 0.0);
              },
              params, h);
          for (std::size_t i = 0; i < fd.values.size(); ++i) {
            const double a = analytic.values[i], n = fd.values[i];
            worst = std::max(worst, std::abs(a - n) / std::max(1.0, std::abs(n)));
          }
          ++cases;
        }
      }
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d cases, max relative error %.3g", cases, worst);
  detail = buf;
  return cases >= 50 && worst <= 1e-5;
}

// ---------------------------------------------------------------- C2
bool c2_minmax_equivalence(std::string& detail) {
  Rng rng(2);
  double worst = 0.0;
  bool maximizer_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> losses(2 + rng.next_index(63));
    for (double& l : losses) l = 5.0 * rng.next_double();
    for (double lambda : {0.1, 1.0, 10.0}) {
      const double reg = rng.next_double();
      const std::vector<double> p = p_star(losses, lambda);
      const double at_star = f_minmax(losses, p, lambda, reg);
      worst = std::max(worst, std::abs(at_star - f_lambda(losses, lambda, reg)));
      for (int k = 0; k < 100; ++k) {
        std::vector<double> q(losses.size());
        double sum = 0.0;
        for (double& x : q) {
          x = -std::log(1.0 - rng.next_double());
          sum += x;
        }
        for (double& x : q) x /= sum;
        if (f_minmax(losses, q, lambda, reg) > at_star + 1e-12) maximizer_ok = false;
      }
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max |min-max - min| %.3g, maximizer %s", worst,
                maximizer_ok ? "holds" : "violated");
  detail = buf;
  return worst <= 1e-10 && maximizer_ok;
}

// ---------------------------------------------------------------- C3
bool c3_limit_reductions(std::string& detail) {
  Rng rng(3);
  bool ok = true;
  double worst_mean = 0.0, worst_max = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> losses(2 + rng.next_index(30));
    for (double& l : losses) l = 5.0 * rng.next_double();
    const double mean = mean_of(losses);
    const double mx = *std::max_element(losses.begin(), losses.end());

    worst_mean = std::max(
        worst_mean, std::abs(f_lambda(losses, 1e8, 0.0) - mean) / (1.0 + std::abs(mean)));
    worst_max = std::max(worst_max, std::abs(f_lambda(losses, 1e-4, 0.0) - mx));

    double prev = mx + 1e-12;
    for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0}) {
      const double f = f_lambda(losses, lambda, 0.0);
      if (f < mean - 1e-10 || f > mx + 1e-10 || f > prev + 1e-10) ok = false;
      prev = f;
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "mean-limit err %.3g, max-limit err %.3g", worst_mean,
                worst_max);
  detail = buf;
  return ok && worst_mean <= 1e-6 && worst_max <= 1e-2;
}

// ---------------------------------------------------------------- C4
bool c4_sgd_reduction(std::string& detail) {
  Rng rng(4);
  const ModelArch arch{4, {8}, 3};
  const Dataset ds = gaussian_blobs({8, 6, 6}, 4, 1.0, 1.0, rng);
  const LossContext ctx = LossContext::make(LossSpec{}, 1, ds.class_counts);

  Rng init(44);
  ParamVector wa = init_params(arch, init, InitPolicy::FanIn);
  ParamVector wb = wa;
  AbsgdConfig config;
  config.eta = 0.05;
  config.beta = 0.9;
  config.schedule.lambda = kLambdaInf;
  AbsgdState sa = make_state(wa, config), sb = make_state(wb, config);
  double worst = 0.0;
  for (int step = 0; step < 100; ++step) {
    absgd_step(wa, arch, ds.features, ds.labels, ctx, config, config.eta, sa);
    sgd_momentum_step(wb, arch, ds.features, ds.labels, ctx, config.eta, config.beta, 0.0,
                      sb);
    for (std::size_t i = 0; i < wa.values.size(); ++i)
      worst = std::max(worst, std::abs(wa.values[i] - wb.values[i]));
  }

  // appendix change of variables: eta = eta0*beta0, beta = 1 - beta0
  ParamVector pa = init_params(arch, init, InitPolicy::FanIn);
  ParamVector pb = pa;
  const double eta0 = 0.4, beta0 = 0.1;
  AbsgdState sc = make_state(pa, config);
  EmaSgdState se;
  double worst_eq = 0.0;
  for (int step = 0; step < 100; ++step) {
    sgd_momentum_step(pa, arch, ds.features, ds.labels, ctx, eta0 * beta0, 1.0 - beta0,
                      0.0, sc);
    sgd_momentum_step_ema(pb, arch, ds.features, ds.labels, ctx, eta0, beta0, 0.0, se);
    for (std::size_t i = 0; i < pa.values.size(); ++i)
      worst_eq = std::max(worst_eq, std::abs(pa.values[i] - pb.values[i]));
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "reduction gap %.3g, reparameterization gap %.3g", worst,
                worst_eq);
  detail = buf;
  return worst <= 1e-12 && worst_eq <= 1e-10;
}

// ---------------------------------------------------------------- C5
bool c5_normalizer_tracking(std::string& detail) {
  Rng pool_rng(5);
  const std::size_t pool = 600, batch = 16;
  std::vector<double> losses(pool);
  for (double& l : losses) l = 3.0 * pool_rng.next_double();
  const double lambda = 2.0, gamma = 0.1;
  const double target = batch_g_tilde(losses, lambda);

  int hits = 0;
  const int reps = 100, T = 500;
  for (int rep = 0; rep < reps; ++rep) {
    Rng r(5000 + rep);
    double s = 0.0;
    bool ready = false;
    double mg = 0.0, mgsq = 0.0;
    for (int t = 0; t < T; ++t) {
      std::vector<double> bl(batch);
      for (double& l : bl) l = losses[r.next_index(pool)];
      const double g = batch_g_tilde(bl, lambda);
      s = ready ? update_normalizer(s, g, gamma) : g;
      ready = true;
      mg += g;
      mgsq += g * g;
    }
    mg /= T;
    const double var_g = mgsq / T - mg * mg;
    if (std::abs(s - target) <= 3.0 * std::sqrt(gamma * var_g)) ++hits;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%d / %d repetitions inside the band", hits, reps);
  detail = buf;
  return hits >= 95;
}

// ---------------------------------------------------------------- C6
bool c6_stationarity_trend(std::string& detail) {
  Rng rng(6);
  const ModelArch arch{10, {16}, 4};
  const Dataset ds = gaussian_blobs({500, 500, 500, 500}, 10, 1.0, 1.0, rng);
  const LossContext ctx = LossContext::make(LossSpec{}, 1, ds.class_counts);
  const double lambda = 1.0;

  // probe the exact objective on the full training set
  const Dataset& probe = ds;

  ParamVector params = init_params(arch, rng, InitPolicy::FanIn);
  AbsgdConfig config;
  config.eta = 0.01;
  config.beta = 0.9;
  config.schedule.lambda = lambda;
  AbsgdState state = make_state(params, config);

  const int total = 20000, batch = 32;
  std::vector<double> probes;
  Matrix feats(batch, 10);
  std::vector<int> labels(batch);
  for (int step = 1; step <= total; ++step) {
    for (int r = 0; r < batch; ++r) {
      const std::size_t pick = rng.next_index(ds.size());
      std::copy(ds.features.row(pick).begin(), ds.features.row(pick).end(),
                feats.row(r).begin());
      labels[r] = ds.labels[pick];
    }
    // anneal the step size over the horizon so late iterates settle
    const double eta = config.eta / (step > 2 * total / 3 ? 25.0
                                     : step > total / 3   ? 5.0
                                                          : 1.0);
    absgd_step(params, arch, feats, labels, ctx, config, eta, state);
    if (step % 50 == 0) {
      const ParamVector g = grad_f_lambda(params, arch, probe, ctx, lambda, RegSpec{0.0});
      double nsq = 0.0;
      for (double v : g.values) nsq += v * v;
      probes.push_back(nsq);
    }
  }
  const std::size_t third = probes.size() / 3;
  const double first =
      std::accumulate(probes.begin(), probes.begin() + third, 0.0) / third;
  const double last =
      std::accumulate(probes.end() - third, probes.end(), 0.0) / third;
  char buf[96];
  std::snprintf(buf, sizeof buf, "first-third mean %.3g, last-third mean %.3g", first,
                last);
  detail = buf;
  return last < 0.1 * first;
}

// ---------------------------------------------------------------- C7
bool c7_toy_direction_of_effect(std::string& detail) {
  std::vector<double> sgd_minority, absgd_minority, sgd_top1, absgd_top1;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    Rng data_rng(seed), test_rng(seed + 100);
    const std::vector<std::array<double, 2>> means{{-0.9, 0.0}, {0.9, 0.0}};
    const std::vector<double> stddevs{1.0, 1.0};
    const Dataset train = gaussian_mixture_2d({1000, 10}, means, stddevs, data_rng);
    const Dataset test = gaussian_mixture_2d({500, 500}, means, stddevs, test_rng);
    const LossContext ctx = LossContext::make(LossSpec{}, 1, train.class_counts);
    const ModelArch arch{2, {}, 2};

    for (int use_absgd = 0; use_absgd < 2; ++use_absgd) {
      Rng init(seed + 200), batch_rng(seed + 300);
      ParamVector params = init_params(arch, init, InitPolicy::FanIn);
      AbsgdConfig config;
      config.eta = 0.1;
      config.beta = 0.9;
      config.ema_gamma = 0.05;  // slow normalizer: rare-class spikes stay upweighted
      config.schedule.lambda = use_absgd ? 1.0 : kLambdaInf;
      AbsgdState state = make_state(params, config);
      const int steps = 500, batch = 64;
      Matrix feats(batch, 2);
      std::vector<int> labels(batch);
      for (int step = 0; step < steps; ++step) {
        for (int r = 0; r < batch; ++r) {
          const std::size_t pick = batch_rng.next_index(train.size());
          feats(r, 0) = train.features(pick, 0);
          feats(r, 1) = train.features(pick, 1);
          labels[r] = train.labels[pick];
        }
        absgd_step(params, arch, feats, labels, ctx, config, config.eta, state);
      }
      const Metrics m = evaluate(params, arch, test, train.class_counts);
      (use_absgd ? absgd_minority : sgd_minority).push_back(m.per_class[1]);
      (use_absgd ? absgd_top1 : sgd_top1).push_back(m.top1);
    }
  }
  const double recall_gain = 100.0 * (mean_of(absgd_minority) - mean_of(sgd_minority));
  const double top1_gap = 100.0 * std::abs(mean_of(absgd_top1) - mean_of(sgd_top1));
  char buf[128];
  std::snprintf(buf, sizeof buf,
                "minority recall gain %.1f pts (need >= 10), top1 gap %.1f pts (need <= 5)",
                recall_gain, top1_gap);
  detail = buf;
  return recall_gain >= 10.0 && top1_gap <= 5.0;
}

// ---------------------------------------------------------------- C8
bool c8_two_stage_vs_constant(std::string& detail) {
  ExperimentConfig base;
  base.data.kind = DataSpec::Kind::Lt;
  base.data.num_classes = 10;
  base.data.n0 = 1000;
  base.data.rho = 100.0;
  base.data.dim = 10;
  base.data.class_sep = 2.0;
  base.data.stddev = 1.0;
  base.data.test_per_class = 100;
  base.arch = ModelArch{10, {32}, 10};
  base.epochs = 20;
  base.batch_size = 64;
  base.opt.eta = 0.1;
  base.opt.beta = 0.9;
  base.seeds = {1, 2, 3, 4, 5};

  ExperimentConfig two = base;
  two.name = "two-stage";
  two.opt.schedule.kind = LambdaSchedule::Kind::TwoStage;
  two.opt.schedule.stage2_lambda = 1.0;
  two.opt.schedule.switch_epoch = 12;  // 60% of the budget

  ExperimentConfig constant = base;
  constant.name = "constant";
  constant.opt.schedule.kind = LambdaSchedule::Kind::Constant;
  constant.opt.schedule.lambda = 1.0;

  const std::vector<RunRecord> records = sweep({two, constant}, 2);
  std::vector<double> two_top1, const_top1;
  for (const auto& r : records) {
    if (r.failed) {
      detail = "run failed: " + r.error;
      return false;
    }
    (r.name == "two-stage" ? two_top1 : const_top1).push_back(r.final_metrics.top1);
  }
  const double a = 100.0 * mean_of(two_top1), b = 100.0 * mean_of(const_top1);
  char buf[96];
  std::snprintf(buf, sizeof buf, "two-stage %.2f%% vs constant %.2f%% mean top-1", a, b);
  detail = buf;
  return a >= b;
}

// ---------------------------------------------------------------- C9
bool c9_negative_lambda_noise(std::string& detail) {
  ExperimentConfig base;
  base.data.kind = DataSpec::Kind::St;  // rho = 1 makes it balanced
  base.data.num_classes = 4;
  base.data.n0 = 400;
  base.data.rho = 1.0;
  base.data.dim = 5;
  base.data.class_sep = 1.2;
  base.data.stddev = 1.0;
  base.data.test_per_class = 200;
  base.data.flip_probability = 0.3;  // train labels noisy, test split clean
  base.arch = ModelArch{5, {}, 4};
  base.epochs = 10;
  base.batch_size = 32;
  base.opt.eta = 0.05;
  base.opt.beta = 0.9;
  base.seeds = {1, 2, 3, 4, 5};

  ExperimentConfig robust = base;
  robust.name = "absgd-neg";
  robust.opt.schedule.lambda = -1.0;

  ExperimentConfig sgd = base;
  sgd.name = "sgd";
  sgd.use_absgd = false;

  const std::vector<RunRecord> records = sweep({robust, sgd}, 2);
  std::vector<double> rob, plain;
  for (const auto& r : records) {
    if (r.failed) {
      detail = "run failed: " + r.error;
      return false;
    }
    (r.name == "absgd-neg" ? rob : plain).push_back(r.final_metrics.top1);
  }
  const double a = 100.0 * mean_of(rob), b = 100.0 * mean_of(plain);
  char buf[96];
  std::snprintf(buf, sizeof buf, "negative-lambda %.2f%% vs sgd %.2f%% clean-test top-1",
                a, b);
  detail = buf;
  return a >= b;
}

// ---------------------------------------------------------------- C10
bool c10_generators(std::string& detail) {
  const std::vector<long> lt = lt_counts(4, 37800, 100.0);
  const bool lt_ok = lt == std::vector<long>{37800, 8143, 1754, 378};
  const bool st_ok = st_counts(10, 5000, 100.0) ==
                     std::vector<long>{5000, 5000, 5000, 5000, 5000, 50, 50, 50, 50, 50};

  Rng rng(10);
  const Dataset src = gaussian_blobs({7, 5}, 3, 1.0, 1.0, rng);
  const std::string path =
      (std::filesystem::temp_directory_path() / "absgd_acceptance.csv").string();
  write_csv(path, src);
  const Dataset back = read_csv(path);
  bool csv_ok = back.labels == src.labels;
  for (std::size_t i = 0; i < src.features.data().size() && csv_ok; ++i)
    csv_ok = back.features.data()[i] == src.features.data()[i];
  std::remove(path.c_str());

  detail = std::string("lt ") + (lt_ok ? "exact" : "WRONG") + ", st " +
           (st_ok ? "exact" : "WRONG") + ", csv round-trip " +
           (csv_ok ? "exact" : "WRONG");
  return lt_ok && st_ok && csv_ok;
}

// ---------------------------------------------------------------- C11
bool c11_one_backward(std::string& detail) {
  ExperimentConfig config;
  config.name = "instrumented";
  config.data.kind = DataSpec::Kind::Lt;
  config.data.num_classes = 3;
  config.data.n0 = 90;
  config.data.rho = 9.0;
  config.data.dim = 2;
  config.data.test_per_class = 20;
  config.arch = ModelArch{2, {4}, 3};
  config.epochs = 5;
  config.batch_size = 16;
  config.opt.eta = 0.05;
  config.opt.schedule.lambda = 1.0;
  const RunRecord r = run_experiment(config, 1);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%llu steps, %llu backward passes",
                static_cast<unsigned long long>(r.steps),
                static_cast<unsigned long long>(r.backward_passes));
  detail = buf;
  return r.steps > 0 && r.backward_passes == r.steps;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    const char* summary;
    bool (*fn)(std::string&);
  };
  const Criterion criteria[] = {
      {"C1", "gradient oracle", c1_gradient_oracle},
      {"C2", "min-max/min equivalence", c2_minmax_equivalence},
      {"C3", "limit reductions", c3_limit_reductions},
      {"C4", "momentum SGD reduction", c4_sgd_reduction},
      {"C5", "normalizer tracking", c5_normalizer_tracking},
      {"C6", "stationarity trend", c6_stationarity_trend},
      {"C7", "toy direction of effect", c7_toy_direction_of_effect},
      {"C8", "two-stage vs constant lambda", c8_two_stage_vs_constant},
      {"C9", "negative-lambda noise robustness", c9_negative_lambda_noise},
      {"C10", "dataset generators", c10_generators},
      {"C11", "one-backward instrumentation", c11_one_backward},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("%-4s %-4s %s (%s)\n", c.name, ok ? "PASS" : "FAIL", c.summary,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
