// Command-line surface for the absgd library: dataset synthesis, training,
// evaluation, gradient checking, sweeps, reports, and 2-D plot-data emission.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "absgd/errors.hpp"
#include "absgd/harness.hpp"

namespace fs = std::filesystem;
using namespace absgd;

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    seeds.push_back(std::stoull(tok));
  }
  if (seeds.empty()) throw ValidationError("no seeds in '" + csv + "'");
  return seeds;
}

void print_metrics(const Metrics& m) {
  std::cout << "top1: " << m.top1 << "\n";
  std::cout << "majority_acc: " << m.majority_acc << "\n";
  std::cout << "minority_acc: " << m.minority_acc << "\n";
  std::cout << "per_class:";
  for (double v : m.per_class) std::cout << ' ' << v;
  std::cout << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"absgd: attention-weighted SGD training harness"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset as CSV");
  std::string synth_kind = "lt", synth_out;
  int synth_classes = 10;
  long synth_n0 = 1000;
  double synth_rho = 100.0, synth_sep = 1.0, synth_std = 1.0, synth_flip = 0.0;
  std::size_t synth_dim = 10;
  std::uint64_t synth_seed = 1;
  long synth_test_per_class = 0;  // > 0 also writes <out-stem>_test.csv
  synth->add_option("--kind", synth_kind, "lt | st")->check(CLI::IsMember({"lt", "st"}));
  synth->add_option("--classes", synth_classes, "number of classes");
  synth->add_option("--n0", synth_n0, "most-frequent class size");
  synth->add_option("--rho", synth_rho, "imbalance ratio");
  synth->add_option("--dim", synth_dim, "feature dimension");
  synth->add_option("--class-sep", synth_sep, "class mean spread");
  synth->add_option("--stddev", synth_std, "within-class stddev");
  synth->add_option("--flip", synth_flip, "symmetric label-flip probability");
  synth->add_option("--test-per-class", synth_test_per_class,
                    "also write a balanced test CSV with this many per class");
  synth->add_option("--seed", synth_seed, "rng seed");
  synth->add_option("--out", synth_out, "output CSV path")->required();

  // ---- train ----
  auto* train = app.add_subcommand("train", "train one run from a config file");
  std::string train_config, train_out;
  std::uint64_t train_seed = 1;
  train->add_option("--config", train_config, "JSON experiment config")->required();
  train->add_option("--seed", train_seed, "rng seed");
  train->add_option("--out", train_out, "output directory (overrides config)");

  // ---- eval ----
  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a CSV dataset");
  std::string eval_ckpt, eval_data;
  evalc->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  evalc->add_option("--data", eval_data, "CSV dataset")->required();

  // ---- gradcheck ----
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  std::size_t gc_input = 4, gc_classes = 3;
  std::vector<std::size_t> gc_hidden;
  std::string gc_loss = "ce";
  double gc_lambda = 1.0;
  std::uint64_t gc_seed = 1;
  gradcheck->add_option("--input-dim", gc_input, "feature dimension");
  gradcheck->add_option("--hidden", gc_hidden, "hidden layer widths (at most 2)");
  gradcheck->add_option("--classes", gc_classes, "number of classes");
  gradcheck->add_option("--loss", gc_loss, "ce | focal | ldam")
      ->check(CLI::IsMember({"ce", "focal", "ldam"}));
  gradcheck->add_option("--lambda", gc_lambda, "temperature (nonzero, may be negative)");
  gradcheck->add_option("--seed", gc_seed, "rng seed");

  // ---- sweep ----
  auto* sweepc = app.add_subcommand("sweep", "run all configs in a directory");
  std::string sweep_dir, sweep_seeds, sweep_out;
  int sweep_jobs = 1;
  sweepc->add_option("--config-dir", sweep_dir, "directory of JSON configs")->required();
  sweepc->add_option("--seeds", sweep_seeds, "comma-separated seeds (overrides configs)");
  sweepc->add_option("--jobs", sweep_jobs, "parallel runs");
  sweepc->add_option("--out", sweep_out, "output directory for run records");

  // ---- report ----
  auto* report = app.add_subcommand("report", "summarize run records");
  std::string report_dir;
  bool report_csv = false;
  report->add_option("--runs", report_dir, "directory of run records")->required();
  report->add_flag("--csv", report_csv, "emit CSV instead of a text table");

  // ---- plot-data ----
  auto* plot = app.add_subcommand("plot-data", "decision grid + point weights (2-D)");
  std::string plot_ckpt, plot_data, plot_out;
  double plot_lambda = 1.0, plot_s = 1.0;
  GridSpec grid;
  plot->add_option("--checkpoint", plot_ckpt, "model checkpoint")->required();
  plot->add_option("--data", plot_data, "CSV dataset (2-D features)")->required();
  plot->add_option("--lambda", plot_lambda, "temperature");
  plot->add_option("--s", plot_s, "normalizer value for the weights");
  plot->add_option("--x-min", grid.x_min);
  plot->add_option("--x-max", grid.x_max);
  plot->add_option("--y-min", grid.y_min);
  plot->add_option("--y-max", grid.y_max);
  plot->add_option("--nx", grid.nx);
  plot->add_option("--ny", grid.ny);
  plot->add_option("--out", plot_out, "output path stem")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (*synth) {
    DataSpec spec;
    spec.kind = synth_kind == "lt" ? DataSpec::Kind::Lt : DataSpec::Kind::St;
    spec.num_classes = synth_classes;
    spec.n0 = synth_n0;
    spec.rho = synth_rho;
    spec.dim = synth_dim;
    spec.class_sep = synth_sep;
    spec.stddev = synth_std;
    spec.flip_probability = synth_flip;
    spec.test_per_class = synth_test_per_class > 0 ? synth_test_per_class : 1;
    auto [train_ds, test_ds] = build_datasets(spec, synth_seed);
    write_csv(synth_out, train_ds);
    std::cout << "wrote " << train_ds.size() << " samples to " << synth_out << "\n";
    if (synth_test_per_class > 0) {
      const fs::path p(synth_out);
      const std::string test_path =
          (p.parent_path() / (p.stem().string() + "_test" + p.extension().string()))
              .string();
      write_csv(test_path, test_ds);
      std::cout << "wrote " << test_ds.size() << " samples to " << test_path << "\n";
    }
    return 0;
  }

  if (*train) {
    ExperimentConfig config = load_config(train_config);
    if (!train_out.empty()) config.output_dir = train_out;
    ParamVector params;
    const RunRecord record = run_experiment(config, train_seed, &params);
    if (!config.output_dir.empty()) {
      const std::string ckpt = config.output_dir + "/ckpt_" + record.config_hash + "_" +
                               std::to_string(train_seed) + ".txt";
      save_checkpoint(ckpt, config.arch, params);
      std::cout << "checkpoint: " << ckpt << "\n";
    }
    std::cout << "steps: " << record.steps << ", wall: " << record.wall_seconds << " s\n";
    print_metrics(record.final_metrics);
    return 0;
  }

  if (*evalc) {
    auto [arch, params] = load_checkpoint(eval_ckpt);
    const Dataset ds = read_csv(eval_data);
    print_metrics(evaluate(params, arch, ds));
    return 0;
  }

  if (*gradcheck) {
    if (gc_hidden.size() > 2) throw ValidationError("at most 2 hidden layers");
    ModelArch arch{gc_input, gc_hidden, gc_classes};
    Rng rng(gc_seed);
    ParamVector params = init_params(arch, rng, InitPolicy::FanIn);
    std::vector<long> counts;
    for (std::size_t k = 0; k < gc_classes; ++k)
      counts.push_back(static_cast<long>(20 + 10 * k));
    Dataset ds = gaussian_blobs(counts, gc_input, 1.0, 1.0, rng);
    LossSpec loss;
    if (gc_loss == "focal") loss.base = BaseLoss::Focal;
    if (gc_loss == "ldam") loss.base = BaseLoss::Ldam;
    const LossContext ctx = LossContext::make(loss, 1, ds.class_counts);
    const RegSpec reg{0.0};
    const ParamVector analytic = grad_f_lambda(params, arch, ds, ctx, gc_lambda, reg);
    const ParamVector numeric = finite_diff_grad(
        [&](const ParamVector& p) {
          BatchEval e = forward(p, arch, ds.features);
          eval_losses(e, ctx, ds.labels);
          return f_lambda(e.per_sample_losses, gc_lambda, 0.0);
        },
        params, 1e-5);
    double max_rel = 0.0;
    for (std::size_t i = 0; i < analytic.values.size(); ++i) {
      const double a = analytic.values[i], n = numeric.values[i];
      max_rel = std::max(max_rel, std::abs(a - n) / std::max(1.0, std::abs(n)));
    }
    const bool ok = max_rel <= 1e-5;
    std::cout << "max relative error: " << max_rel << "\n"
              << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? 0 : 2;
  }

  if (*sweepc) {
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(sweep_dir))
      if (entry.path().extension() == ".json") paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw ValidationError("no .json configs in " + sweep_dir);
    std::vector<ExperimentConfig> configs;
    for (const auto& p : paths) {
      ExperimentConfig c = load_config(p);
      if (!sweep_seeds.empty()) c.seeds = parse_seed_list(sweep_seeds);
      if (!sweep_out.empty()) c.output_dir = sweep_out;
      configs.push_back(std::move(c));
    }
    const std::vector<RunRecord> records = sweep(configs, sweep_jobs);
    std::cout << compare_report(records);
    for (const auto& r : records)
      if (r.failed)
        std::cerr << "failed: " << r.name << " seed " << r.seed << ": " << r.error << "\n";
    return 0;
  }

  if (*report) {
    const std::vector<RunRecord> records = read_run_dir(report_dir);
    if (records.empty()) throw ValidationError("no run records in " + report_dir);
    std::cout << (report_csv ? compare_report_csv(records) : compare_report(records));
    return 0;
  }

  if (*plot) {
    auto [arch, params] = load_checkpoint(plot_ckpt);
    const Dataset ds = read_csv(plot_data);
    const LossContext ctx = LossContext::make(LossSpec{}, 1, ds.class_counts);
    emit_plot_data(params, arch, ds, ctx, plot_lambda, plot_s, grid, plot_out);
    std::cout << "wrote " << plot_out << "_grid.csv and " << plot_out << "_points.csv\n";
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
