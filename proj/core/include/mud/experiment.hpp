#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mud/dataset.hpp"
#include "mud/distill.hpp"
#include "mud/pipeline.hpp"
#include "mud/train.hpp"

namespace mud {

// Threshold policy: absolute stream count or a fraction of N_r.
struct ThresholdPolicy {
  enum class Kind { Absolute, FractionOfNr } kind = Kind::FractionOfNr;
  int absolute = 0;
  int divisor = 1;  // N_r / divisor

  int resolve(int nr) const {
    const int v = kind == Kind::Absolute ? absolute : std::max(1, nr / divisor);
    return std::max(1, v);
  }
};

struct EvalConfig {
  std::vector<double> snr_sweep{0.0, 2.5, 5.0, 7.5, 10.0};
  int64_t records = 1000;
  ThresholdPolicy n_thres;
  int teacher_steps = 10;
  std::vector<std::string> methods{"ls", "lmmse", "pipeline"};
};

struct ExperimentConfig {
  int version = 1;
  uint64_t seed = 1;
  std::string out_dir = "runs/exp";
  std::string preset = "small";
  std::string data_dir = "data/exp";
  std::vector<DatasetMeta> grid;  // >= 1 cells; records field = train size
  int64_t val_records = 1000;
  int schedule_T = 1000;
  double beta_1 = 1e-4, beta_T = 0.02;
  TrainConfig train_aligner_cfg;
  TrainConfig train_dit_cfg;
  DistillConfig distill_cfg;
  EvalConfig eval;
  int threads = 0;

  void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides = {});
nlohmann::json experiment_config_json(const ExperimentConfig&);

/// FNV-1a hash of the canonical config JSON, for report provenance.
std::string config_hash(const ExperimentConfig&);

// Orchestration entry points used by the CLI.
void cmd_gen_data(const ExperimentConfig& cfg);
void cmd_train_aligner(const ExperimentConfig& cfg);
void cmd_train_dit(const ExperimentConfig& cfg);
void cmd_distill(const ExperimentConfig& cfg);

struct EvalRow {
  std::string method;
  int cell = 0;
  double snr_db = 0.0;
  int64_t samples = 0;
  int64_t bits = 0;
  int64_t bit_errors = 0;
  double ber = 0.0;
  double throughput_bpcu = 0.0;
  double flops_per_sample = 0.0;
  // wall-clock stats (excluded from the deterministic CSV)
  double mean_us = 0.0, p50_us = 0.0, p95_us = 0.0;
};

struct MetricsReport {
  std::vector<EvalRow> rows;
  uint64_t seed = 0;
  std::string config_digest;
  std::string code_version;
};

/// Evaluates the configured methods on deterministic validation draws for
/// one grid cell across the SNR sweep.
MetricsReport evaluate_cell(const ExperimentConfig& cfg, int cell);

/// evaluate (primary cell) or sweep (all cells): writes metrics.csv,
/// timing.csv, report.json and the BER/throughput plots under out_dir.
MetricsReport cmd_evaluate(const ExperimentConfig& cfg);
MetricsReport cmd_sweep(const ExperimentConfig& cfg);

void write_metrics_csv(const std::string& path, const MetricsReport& report);
void write_timing_csv(const std::string& path, const MetricsReport& report);

/// Renders BER-vs-SNR (log y) and throughput-vs-SNR SVG plots from a
/// metrics.csv produced by evaluate/sweep. Plots are a view over the CSV.
void plot_from_csv(const std::string& csv_path, const std::string& out_dir);

}  // namespace mud
