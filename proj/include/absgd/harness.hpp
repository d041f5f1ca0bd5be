#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "absgd/dataset.hpp"
#include "absgd/dro.hpp"
#include "absgd/losses.hpp"
#include "absgd/model.hpp"
#include "absgd/optim.hpp"

namespace absgd {

struct LrSchedule {
  enum class Kind { Stagewise, Cosine };
  Kind kind = Kind::Stagewise;
  std::vector<int> milestones;  // strictly increasing epochs
  double factor = 100.0;
};

// Stagewise: base / factor^(milestones passed). Cosine: half-period anneal to
// zero at `total_epochs`; with restart_epoch > 0 the anneal restarts from the
// full base_lr at that epoch (the two-stage boundary).
double lr_at(const LrSchedule& schedule, int epoch, int total_epochs, double base_lr,
             int restart_epoch = 0);

struct DataSpec {
  enum class Kind { Lt, St, Gaussian2d, Csv };
  Kind kind = Kind::Lt;
  // synthetic blobs (lt / st)
  int num_classes = 2;
  long n0 = 100;
  double rho = 1.0;
  std::size_t dim = 2;
  double class_sep = 1.0;
  double stddev = 1.0;
  long test_per_class = 100;
  double flip_probability = 0.0;  // symmetric label noise on the train split
  // gaussian2d toy
  std::vector<long> counts;
  std::vector<std::array<double, 2>> means;
  std::vector<double> stddevs;
  // csv
  std::string train_csv, test_csv;
};

// Train split per the requested kind; test split always balanced and noise-free.
std::pair<Dataset, Dataset> build_datasets(const DataSpec& spec, std::uint64_t seed);

struct ExperimentConfig {
  std::string name;  // method label used by compare_report
  DataSpec data;
  ModelArch arch;
  LossSpec loss;
  bool use_absgd = true;  // false: momentum SGD baseline
  AbsgdConfig opt;
  std::vector<int> freeze;  // layer indices excluded from training
  int epochs = 1;
  int batch_size = 32;
  LrSchedule lr;
  std::vector<std::uint64_t> seeds;
  int probe_every = 0;       // 0 disables mid-epoch probes
  int probe_subset = 512;    // fixed probe subsample size
  std::string output_dir;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
std::string config_hash(const ExperimentConfig& config);

struct Metrics {
  double top1 = 0.0;
  std::vector<double> per_class;
  double majority_acc = 0.0;  // mean per-class accuracy over the majority group
  double minority_acc = 0.0;
  std::vector<std::vector<long>> confusion;  // C x C, row = true class
};

// Argmax prediction, ties toward the lowest class index. `train_counts`
// decides the majority/minority split (larger-count half is the majority);
// when empty the dataset's own counts are used.
Metrics evaluate(const ParamVector& params, const ModelArch& arch, const Dataset& dataset,
                 const std::vector<long>& train_counts = {});

struct EpochTrace {
  int epoch = 0;
  double train_loss = 0.0;
  double test_top1 = 0.0;
  double lambda = 0.0;
  double s = 0.0;
  double probe_grad_norm_sq = 0.0;
  double c0_hat = 0.0;
  double c1_hat = 0.0;
};

struct ProbeRow {
  std::uint64_t step = 0;
  double grad_norm_sq = 0.0;
};

struct RunRecord {
  std::string config_hash;
  std::string name;
  std::uint64_t seed = 0;
  Metrics final_metrics;
  double wall_seconds = 0.0;
  std::vector<EpochTrace> trace;
  std::vector<ProbeRow> probes;
  std::uint64_t steps = 0;
  std::uint64_t backward_passes = 0;  // training passes only, probes excluded
  bool failed = false;
  std::string error;
};

// `final_params`, when given, receives the trained parameter vector.
RunRecord run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                         ParamVector* final_params = nullptr);

// All (config, seed) pairs, optionally in parallel; output order and content
// are independent of the parallelism degree. A failing run is recorded as
// failed without aborting siblings.
std::vector<RunRecord> sweep(const std::vector<ExperimentConfig>& configs, int jobs);

// Per-method "mean (std)" table over seeds; population std, two decimals.
std::string compare_report(const std::vector<RunRecord>& records);
std::string compare_report_csv(const std::vector<RunRecord>& records);

struct GridSpec {
  double x_min = -1, x_max = 1, y_min = -1, y_max = 1;
  int nx = 50, ny = 50;
};

// Decision grid + per-point attention weights for 2-D data; writes
// <path>_grid.csv and <path>_points.csv.
void emit_plot_data(const ParamVector& params, const ModelArch& arch,
                    const Dataset& dataset, const LossContext& ctx, double lambda,
                    double s, const GridSpec& grid, const std::string& path);

nlohmann::json record_to_json(const RunRecord& record);
void write_run_record(const RunRecord& record, const std::string& dir);
RunRecord read_run_record(const std::string& path);
std::vector<RunRecord> read_run_dir(const std::string& dir);

}  // namespace absgd
