#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mud/experiment.hpp"

namespace {

// exit codes: 0 ok, 1 user error (config/data), 2 internal error
int run(const std::string& verb, const std::string& config_path,
        const std::vector<std::string>& overrides, const std::string& csv,
        const std::string& out) {
  using namespace mud;
  if (verb == "plot" && !csv.empty()) {
    plot_from_csv(csv, out.empty() ? "." : out);
    return 0;
  }
  ExperimentConfig cfg = load_experiment_config(config_path, overrides);
  if (verb == "gen-data") {
    cmd_gen_data(cfg);
  } else if (verb == "train-aligner") {
    cmd_train_aligner(cfg);
  } else if (verb == "train-dit") {
    cmd_train_dit(cfg);
  } else if (verb == "distill") {
    cmd_distill(cfg);
  } else if (verb == "evaluate") {
    MetricsReport r = cmd_evaluate(cfg);
    for (const auto& row : r.rows)
      std::printf("%-10s cell %d  snr %5.1f dB  ber %.5f  throughput %.3f b/cu\n",
                  row.method.c_str(), row.cell, row.snr_db, row.ber, row.throughput_bpcu);
  } else if (verb == "sweep") {
    MetricsReport r = cmd_sweep(cfg);
    std::printf("wrote %zu rows to %s/metrics.csv\n", r.rows.size(), cfg.out_dir.c_str());
  } else if (verb == "plot") {
    plot_from_csv(cfg.out_dir + "/metrics.csv", cfg.out_dir);
  } else {
    std::fprintf(stderr, "unknown command: %s\n", verb.c_str());
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-user MIMO uplink demodulation toolkit"};
  app.require_subcommand(1);

  std::string config_path, csv, out;
  std::vector<std::string> overrides;

  const std::vector<std::string> verbs = {"gen-data", "train-aligner", "train-dit", "distill",
                                          "evaluate", "sweep", "plot"};
  for (const auto& v : verbs) {
    auto* sub = app.add_subcommand(v);
    if (v == "plot") {
      sub->add_option("-c,--config", config_path, "experiment config JSON");
      sub->add_option("--csv", csv, "render plots from this metrics.csv");
      sub->add_option("--out", out, "output directory for plots");
    } else {
      sub->add_option("-c,--config", config_path, "experiment config JSON")->required();
    }
    sub->add_option("-s,--set", overrides, "config override key.path=value (repeatable)");
  }

  CLI11_PARSE(app, argc, argv);

  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    return run(verb, config_path, overrides, csv, out);
  } catch (const mud::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.user_facing() ? 1 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
}
