#include "mud/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "mud/metrics.hpp"
#include "mud/nn/checkpoint.hpp"

namespace mud {

namespace fs = std::filesystem;
using json = nlohmann::json;

void ExperimentConfig::validate() const {
  require(!grid.empty(), ErrorKind::Config, "experiment: dataset grid must be nonempty");
  preset_by_name(preset);
  for (const auto& cell : grid) cell.config.validate();
  require(schedule_T >= 2, ErrorKind::Config, "experiment: schedule_T must be >= 2");
  train_aligner_cfg.validate();
  train_dit_cfg.validate();
  distill_cfg.validate();
  require(!eval.snr_sweep.empty(), ErrorKind::Config, "experiment: empty snr sweep");
  require(eval.records > 0, ErrorKind::Config, "experiment: eval.records must be > 0");
}

namespace {

ThresholdPolicy threshold_from_json(const json& j) {
  ThresholdPolicy p;
  if (j.is_number_integer()) {
    p.kind = ThresholdPolicy::Kind::Absolute;
    p.absolute = j.get<int>();
    require(p.absolute >= 1, ErrorKind::Config, "n_thres must be >= 1");
    return p;
  }
  const std::string s = j.get<std::string>();
  p.kind = ThresholdPolicy::Kind::FractionOfNr;
  if (s == "nr")
    p.divisor = 1;
  else if (s == "nr/2")
    p.divisor = 2;
  else if (s == "nr/4")
    p.divisor = 4;
  else
    throw Error(ErrorKind::Config, "n_thres must be an integer or one of nr, nr/2, nr/4");
  return p;
}

json threshold_to_json(const ThresholdPolicy& p) {
  if (p.kind == ThresholdPolicy::Kind::Absolute) return p.absolute;
  return p.divisor == 1 ? "nr" : ("nr/" + std::to_string(p.divisor));
}

SystemConfig system_from_json(const json& j) {
  SystemConfig c;
  c.users = j.at("users").get<int>();
  if (j.at("tx_antennas").is_array())
    c.tx_antennas = j.at("tx_antennas").get<std::vector<int>>();
  else
    c.tx_antennas.assign(static_cast<size_t>(c.users), j.at("tx_antennas").get<int>());
  c.rx_antennas = j.at("rx_antennas").get<int>();
  c.constellation = modulation_from_string(j.value("constellation", std::string("qpsk")));
  c.snr_db = j.value("snr_db", 0.0);
  if (j.contains("est_mse")) {
    if (j.at("est_mse").is_array())
      c.est_mse = j.at("est_mse").get<std::vector<double>>();
    else
      c.est_mse.assign(static_cast<size_t>(c.users), j.at("est_mse").get<double>());
  }
  const std::string model = j.value("channel", std::string("iid_rayleigh"));
  if (model == "exp_correlated") {
    c.channel = ChannelModel::ExpCorrelated;
    c.rho = j.value("rho", 0.0);
  } else {
    require(model == "iid_rayleigh", ErrorKind::Config, "unknown channel model: " + model);
  }
  return c;
}

json system_to_json(const SystemConfig& c) {
  return json{{"users", c.users},
              {"tx_antennas", c.tx_antennas},
              {"rx_antennas", c.rx_antennas},
              {"constellation", to_string(c.constellation)},
              {"snr_db", c.snr_db},
              {"est_mse", c.est_mse},
              {"channel",
               c.channel == ChannelModel::ExpCorrelated ? "exp_correlated" : "iid_rayleigh"},
              {"rho", c.rho}};
}

TrainConfig train_from_json(const json& j, const TrainConfig& defaults) {
  TrainConfig t = defaults;
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  if (j.contains("optimizer")) {
    const std::string o = j.at("optimizer").get<std::string>();
    require(o == "adamw" || o == "adam", ErrorKind::Config, "optimizer must be adamw or adam");
    t.optimizer = o == "adamw" ? Optim::AdamW : Optim::Adam;
    if (t.optimizer == Optim::Adam) t.weight_decay = 0.0;
  }
  return t;
}

void apply_override(json& root, const std::string& kv) {
  const auto eq = kv.find('=');
  require(eq != std::string::npos, ErrorKind::Config, "override must be key.path=value: " + kv);
  const std::string path = kv.substr(0, eq);
  const std::string value = kv.substr(eq + 1);
  json* node = &root;
  size_t at = 0;
  while (true) {
    const auto dot = path.find('.', at);
    const std::string key = path.substr(at, dot == std::string::npos ? dot : dot - at);
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    at = dot + 1;
  }
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  require(is.good(), ErrorKind::Io, "cannot open config: " + path);
  json j = json::parse(is, nullptr, false);
  require(!j.is_discarded(), ErrorKind::Config, "unparsable config JSON: " + path);
  for (const auto& o : overrides) apply_override(j, o);

  ExperimentConfig cfg;
  cfg.version = j.value("version", 1);
  require(cfg.version == 1, ErrorKind::Config, "unsupported config version");
  cfg.seed = j.value("seed", 1ull);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.preset = j.value("preset", cfg.preset);
  cfg.threads = j.value("threads", 0);

  const json& ds = j.at("dataset");
  cfg.data_dir = ds.value("dir", cfg.data_dir);
  cfg.val_records = ds.value("val_records", cfg.val_records);
  const int64_t train_records = ds.value("train_records", 10000);
  json cells = ds.contains("grid") ? ds.at("grid") : json::array({ds.at("system")});
  int cell_idx = 0;
  for (const auto& cj : cells) {
    DatasetMeta m;
    m.config = system_from_json(cj);
    m.config.seed = derive_seed(cfg.seed, 0xce11, static_cast<uint64_t>(cell_idx));
    m.records = cj.value("train_records", train_records);
    m.snr_range = ds.value("snr_range", std::vector<double>{});
    m.est_mse_range = ds.value("est_mse_range", std::vector<double>{});
    if (cj.contains("snr_range")) m.snr_range = cj.at("snr_range").get<std::vector<double>>();
    if (cj.contains("est_mse_range"))
      m.est_mse_range = cj.at("est_mse_range").get<std::vector<double>>();
    cfg.grid.push_back(std::move(m));
    ++cell_idx;
  }

  if (j.contains("schedule")) {
    cfg.schedule_T = j.at("schedule").value("timesteps", 1000);
    cfg.beta_1 = j.at("schedule").value("beta_1", 1e-4);
    cfg.beta_T = j.at("schedule").value("beta_T", 0.02);
  }

  TrainConfig ad;  // Table-driven defaults
  ad.epochs = 100;
  ad.learning_rate = 0.002;
  cfg.train_aligner_cfg = train_from_json(j.value("train_aligner", json::object()), ad);
  TrainConfig dd;
  dd.epochs = 100;
  dd.learning_rate = 0.001;
  cfg.train_dit_cfg = train_from_json(j.value("train_dit", json::object()), dd);
  cfg.train_aligner_cfg.T = cfg.schedule_T;
  cfg.train_dit_cfg.T = cfg.schedule_T;
  cfg.train_aligner_cfg.seed = derive_seed(cfg.seed, 0xa11);
  cfg.train_dit_cfg.seed = derive_seed(cfg.seed, 0xd17);
  cfg.train_aligner_cfg.threads = cfg.threads;
  cfg.train_dit_cfg.threads = cfg.threads;

  if (j.contains("distill")) {
    const json& dj = j.at("distill");
    cfg.distill_cfg.epochs = dj.value("epochs", 80);
    cfg.distill_cfg.batch_size = dj.value("batch_size", 64);
    cfg.distill_cfg.learning_rate = dj.value("learning_rate", 8e-4);
    cfg.distill_cfg.mu = dj.value("mu", 0.2);
    cfg.distill_cfg.k0 = dj.value("k0", 0.1);
    cfg.distill_cfg.s0 = dj.value("s0", -1.0);
    cfg.distill_cfg.grid_points = dj.value("grid_points", 18);
  }
  cfg.distill_cfg.seed = derive_seed(cfg.seed, 0xd157);
  cfg.distill_cfg.threads = cfg.threads;

  if (j.contains("eval")) {
    const json& ej = j.at("eval");
    cfg.eval.snr_sweep = ej.value("snr_sweep", cfg.eval.snr_sweep);
    cfg.eval.records = ej.value("records", cfg.eval.records);
    if (ej.contains("n_thres")) cfg.eval.n_thres = threshold_from_json(ej.at("n_thres"));
    cfg.eval.teacher_steps = ej.value("teacher_steps", 10);
    cfg.eval.methods = ej.value("methods", cfg.eval.methods);
  }

  cfg.validate();
  return cfg;
}

json experiment_config_json(const ExperimentConfig& cfg) {
  json cells = json::array();
  for (const auto& m : cfg.grid) {
    json cj = system_to_json(m.config);
    cj["train_records"] = m.records;
    cj["snr_range"] = m.snr_range;
    cj["est_mse_range"] = m.est_mse_range;
    cells.push_back(cj);
  }
  return json{
      {"version", cfg.version},
      {"seed", cfg.seed},
      {"out_dir", cfg.out_dir},
      {"preset", cfg.preset},
      {"threads", cfg.threads},
      {"dataset",
       {{"dir", cfg.data_dir}, {"val_records", cfg.val_records}, {"grid", cells}}},
      {"schedule",
       {{"timesteps", cfg.schedule_T}, {"beta_1", cfg.beta_1}, {"beta_T", cfg.beta_T}}},
      {"train_aligner",
       {{"epochs", cfg.train_aligner_cfg.epochs},
        {"batch_size", cfg.train_aligner_cfg.batch_size},
        {"learning_rate", cfg.train_aligner_cfg.learning_rate},
        {"weight_decay", cfg.train_aligner_cfg.weight_decay}}},
      {"train_dit",
       {{"epochs", cfg.train_dit_cfg.epochs},
        {"batch_size", cfg.train_dit_cfg.batch_size},
        {"learning_rate", cfg.train_dit_cfg.learning_rate},
        {"weight_decay", cfg.train_dit_cfg.weight_decay}}},
      {"distill",
       {{"epochs", cfg.distill_cfg.epochs},
        {"batch_size", cfg.distill_cfg.batch_size},
        {"learning_rate", cfg.distill_cfg.learning_rate},
        {"mu", cfg.distill_cfg.mu},
        {"k0", cfg.distill_cfg.k0},
        {"s0", cfg.distill_cfg.s0},
        {"grid_points", cfg.distill_cfg.grid_points}}},
      {"eval",
       {{"snr_sweep", cfg.eval.snr_sweep},
        {"records", cfg.eval.records},
        {"n_thres", threshold_to_json(cfg.eval.n_thres)},
        {"teacher_steps", cfg.eval.teacher_steps},
        {"methods", cfg.eval.methods}}}};
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string s = experiment_config_json(cfg).dump();
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return {out};
}

namespace {

std::string cell_dir(const ExperimentConfig& cfg, int cell, const char* split) {
  return cfg.data_dir + "/cell" + std::to_string(cell) + "/" + split;
}

DatasetMeta val_meta(const ExperimentConfig& cfg, int cell) {
  DatasetMeta m = cfg.grid[static_cast<size_t>(cell)];
  m.records = cfg.val_records;
  m.config.seed = derive_seed(m.config.seed, 0x7a1);  // disjoint stream from train
  return m;
}

NoiseSchedule schedule_of(const ExperimentConfig& cfg) {
  return linear_beta_schedule(cfg.schedule_T, cfg.beta_1, cfg.beta_T);
}

std::vector<DemodSample> load_train_samples(const ExperimentConfig& cfg) {
  std::vector<DemodSample> all;
  for (size_t cell = 0; cell < cfg.grid.size(); ++cell) {
    DatasetReader r(cell_dir(cfg, static_cast<int>(cell), "train"));
    auto part = r.read_all();
    std::move(part.begin(), part.end(), std::back_inserter(all));
  }
  require(!all.empty(), ErrorKind::Config, "no training data found under " + cfg.data_dir);
  return all;
}

json schedule_meta(const ExperimentConfig& cfg) {
  return json{{"timesteps", cfg.schedule_T}, {"beta_1", cfg.beta_1}, {"beta_T", cfg.beta_T}};
}

void log_epoch(const char* what, int epoch, double loss) {
  std::printf("[%s] epoch %d loss %.6f\n", what, epoch, loss);
  std::fflush(stdout);
}

}  // namespace

void cmd_gen_data(const ExperimentConfig& cfg) {
  for (size_t cell = 0; cell < cfg.grid.size(); ++cell) {
    generate_dataset(cell_dir(cfg, static_cast<int>(cell), "train"),
                     cfg.grid[cell]);
    generate_dataset(cell_dir(cfg, static_cast<int>(cell), "val"),
                     val_meta(cfg, static_cast<int>(cell)));
  }
}

void cmd_train_aligner(const ExperimentConfig& cfg) {
  const auto& p = preset_by_name(cfg.preset);
  AlignerConfig acfg{p.aligner_depth, p.aligner_width, p.aligner_heads, cfg.schedule_T};
  Aligner model(acfg, derive_seed(cfg.seed, 0x1a17));
  const NoiseSchedule sched = schedule_of(cfg);

  std::vector<VecC> clean;
  for (const auto& s : load_train_samples(cfg))
    for (const auto& xu : s.x) clean.push_back(xu);

  auto trace = train_aligner(model, clean, sched, cfg.train_aligner_cfg,
                             [](int e, double l) { log_epoch("aligner", e, l); });
  fs::create_directories(cfg.out_dir);
  write_loss_csv(cfg.out_dir + "/loss_aligner.csv", trace);
  json meta{{"kind", "aligner"},
            {"preset", cfg.preset},
            {"config",
             {{"depth", acfg.depth}, {"width", acfg.width}, {"heads", acfg.heads}, {"T", acfg.T}}},
            {"schedule", schedule_meta(cfg)},
            {"seed", cfg.seed}};
  nn::save_checkpoint(cfg.out_dir + "/aligner.ckpt", model.params(), meta);
}

namespace {

DiTConfig dit_config_of(const ExperimentConfig& cfg) {
  const auto& p = preset_by_name(cfg.preset);
  DiTConfig d;
  d.depth = p.dit_depth;
  d.width = p.dit_width;
  d.heads = p.dit_heads;
  d.T = cfg.schedule_T;
  return d;
}

json dit_meta(const ExperimentConfig& cfg, const DiTConfig& d, const char* kind) {
  return json{{"kind", kind},
              {"preset", cfg.preset},
              {"config",
               {{"depth", d.depth},
                {"width", d.width},
                {"heads", d.heads},
                {"patch_x", d.patch_x},
                {"patch_y", d.patch_y},
                {"T", d.T}}},
              {"schedule", schedule_meta(cfg)},
              {"seed", cfg.seed}};
}

Aligner load_aligner(const ExperimentConfig& cfg) {
  const std::string path = cfg.out_dir + "/aligner.ckpt";
  require(fs::exists(path), ErrorKind::Config,
          "missing aligner checkpoint (run train-aligner first): " + path);
  json meta = nn::read_checkpoint_meta(path);
  AlignerConfig a;
  a.depth = meta.at("config").at("depth").get<int>();
  a.width = meta.at("config").at("width").get<int>();
  a.heads = meta.at("config").at("heads").get<int>();
  a.T = meta.at("config").at("T").get<int>();
  Aligner model(a, 0);
  nn::load_checkpoint(path, model.params());
  return model;
}

DiT load_dit(const ExperimentConfig& cfg, const std::string& file, const char* hint) {
  const std::string path = cfg.out_dir + "/" + file;
  require(fs::exists(path), ErrorKind::Config,
          std::string("missing checkpoint (run ") + hint + " first): " + path);
  json meta = nn::read_checkpoint_meta(path);
  DiTConfig d;
  d.depth = meta.at("config").at("depth").get<int>();
  d.width = meta.at("config").at("width").get<int>();
  d.heads = meta.at("config").at("heads").get<int>();
  d.patch_x = meta.at("config").at("patch_x").get<int>();
  d.patch_y = meta.at("config").at("patch_y").get<int>();
  d.T = meta.at("config").at("T").get<int>();
  DiT model(d, 0);
  nn::load_checkpoint(path, model.params());
  return model;
}

}  // namespace

void cmd_train_dit(const ExperimentConfig& cfg) {
  const DiTConfig dcfg = dit_config_of(cfg);
  DiT model(dcfg, derive_seed(cfg.seed, 0x2d17));
  const NoiseSchedule sched = schedule_of(cfg);
  auto data = load_train_samples(cfg);
  DiTEpsAdapter<float> adapter(model);
  auto trace = train_denoiser<float>(adapter, data, sched, cfg.train_dit_cfg,
                                     [](int e, double l) { log_epoch("dit", e, l); });
  fs::create_directories(cfg.out_dir);
  write_loss_csv(cfg.out_dir + "/loss_dit.csv", trace);
  nn::save_checkpoint(cfg.out_dir + "/dit.ckpt", model.params(), dit_meta(cfg, dcfg, "dit"));
}

void cmd_distill(const ExperimentConfig& cfg) {
  DiT teacher = load_dit(cfg, "dit.ckpt", "train-dit");
  DiT student(teacher.config(), 0);
  DiT ema(teacher.config(), 0);
  const NoiseSchedule sched = schedule_of(cfg);
  auto data = load_train_samples(cfg);
  auto result = distill_run(teacher, student, ema, data, sched, cfg.distill_cfg,
                            [](int e, double l) { log_epoch("distill", e, l); });
  write_loss_csv(cfg.out_dir + "/loss_distill.csv", result.loss_trace);
  json meta = dit_meta(cfg, teacher.config(), "student");
  meta["teacher_checkpoint_hash"] = nn::file_hash_hex(cfg.out_dir + "/dit.ckpt");
  meta["adaptive_weight_s0"] = result.s0;
  nn::save_checkpoint(cfg.out_dir + "/student.ckpt", student.params(), meta);
}

namespace {

struct LatencyAcc {
  std::vector<double> us;
  void finalize(EvalRow& row) {
    if (us.empty()) return;
    std::sort(us.begin(), us.end());
    double sum = 0.0;
    for (double v : us) sum += v;
    row.mean_us = sum / static_cast<double>(us.size());
    row.p50_us = us[us.size() / 2];
    row.p95_us = us[static_cast<size_t>(static_cast<double>(us.size() - 1) * 0.95)];
  }
};

constexpr int kEvalChunk = 16;

}  // namespace

MetricsReport evaluate_cell(const ExperimentConfig& cfg, int cell) {
  cfg.validate();
  const NoiseSchedule sched = schedule_of(cfg);
  const DatasetMeta vmeta = val_meta(cfg, cell);
  const SystemConfig& sys = vmeta.config;
  const Constellation constellation = make_constellation(sys.constellation);
  require(cfg.eval.records > 0 && cfg.eval.records <= vmeta.records, ErrorKind::Config,
          "eval.records exceeds validation split size");

  const bool want_pipeline =
      std::find(cfg.eval.methods.begin(), cfg.eval.methods.end(), "pipeline") !=
      cfg.eval.methods.end();
  const bool want_teacher =
      std::find(cfg.eval.methods.begin(), cfg.eval.methods.end(), "teacher") !=
      cfg.eval.methods.end();

  std::optional<Aligner> aligner;
  std::optional<DiT> student, teacher;
  if (want_pipeline || want_teacher) aligner.emplace(load_aligner(cfg));
  if (want_pipeline) student.emplace(load_dit(cfg, "student.ckpt", "distill"));
  if (want_teacher) teacher.emplace(load_dit(cfg, "dit.ckpt", "train-dit"));
  const std::vector<double> grid = make_sigma_grid(sched, cfg.distill_cfg.grid_points);

  // Buffer of channel realizations approximating the cell's channel law.
  MemoryBuffer buffer(sys.users, 4096);
  {
    SystemConfig bc = sys;
    bc.seed = derive_seed(sys.seed, 0xbfff);
    Rng rng(bc.seed);
    for (int i = 0; i < 4096; ++i) buffer.push_all(gen_channels(bc, rng));
  }

  const auto& p = preset_by_name(cfg.preset);
  const AlignerConfig acfg{p.aligner_depth, p.aligner_width, p.aligner_heads, cfg.schedule_T};
  const DiTConfig dcfg = dit_config_of(cfg);

  MetricsReport report;
  report.seed = cfg.seed;
  report.config_digest = config_hash(cfg);
  report.code_version = "mudemod-0.1.0";

  const int threads =
      cfg.threads > 0
          ? cfg.threads
          : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  for (size_t si = 0; si < cfg.eval.snr_sweep.size(); ++si) {
    const double snr = cfg.eval.snr_sweep[si];
    DatasetMeta smeta = vmeta;
    smeta.config.snr_db = snr;
    smeta.snr_range.clear();  // fixed SNR at each sweep point

    const int64_t n = cfg.eval.records;
    const int n_chunks = static_cast<int>((n + kEvalChunk - 1) / kEvalChunk);

    struct MethodAcc {
      BitErrors bits;
      LatencyAcc lat;
      int64_t streams = 0;
    };
    std::vector<std::vector<MethodAcc>> per_chunk(
        static_cast<size_t>(n_chunks),
        std::vector<MethodAcc>(cfg.eval.methods.size()));
    std::atomic<int> cursor{0};

    auto worker = [&] {
      for (;;) {
        const int ci = cursor.fetch_add(1);
        if (ci >= n_chunks) return;
        for (int64_t i = ci * kEvalChunk; i < std::min<int64_t>(n, (ci + 1) * kEvalChunk); ++i) {
          const DemodSample s = draw_dataset_sample(smeta, i);
          for (size_t mi = 0; mi < cfg.eval.methods.size(); ++mi) {
            const std::string& method = cfg.eval.methods[mi];
            auto& acc = per_chunk[static_cast<size_t>(ci)][mi];
            const auto t0 = std::chrono::steady_clock::now();
            DemodResult r;
            if (method == "ls") {
              r = demodulate_baseline(s, BaselineMethod::LS, constellation);
            } else if (method == "lmmse") {
              r = demodulate_baseline(s, BaselineMethod::LMMSE, constellation);
            } else if (method == "pipeline" || method == "teacher") {
              PipelineModels models;
              models.aligner = &*aligner;
              PipelineOptions opts;
              opts.n_thres = cfg.eval.n_thres.resolve(sys.rx_antennas);
              if (method == "pipeline") {
                models.student = &*student;
              } else {
                models.teacher = &*teacher;
                opts.refine = RefineMode::TeacherMultiStep;
                opts.teacher_steps = cfg.eval.teacher_steps;
                opts.grid = &grid;
              }
              r = demodulate(s, models, sched, buffer, constellation, opts);
            } else {
              throw Error(ErrorKind::Config, "unknown eval method: " + method);
            }
            acc.lat.us.push_back(std::chrono::duration<double, std::micro>(
                                     std::chrono::steady_clock::now() - t0)
                                     .count());
            acc.bits.add(r.bits, s.bits);
            acc.streams += sys.total_streams();
          }
        }
      }
    };
    if (threads <= 1 || n_chunks == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < std::min(threads, n_chunks); ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }

    for (size_t mi = 0; mi < cfg.eval.methods.size(); ++mi) {
      EvalRow row;
      row.method = cfg.eval.methods[mi];
      row.cell = cell;
      row.snr_db = snr;
      row.samples = n;
      LatencyAcc all_lat;
      for (int ci = 0; ci < n_chunks; ++ci) {
        auto& acc = per_chunk[static_cast<size_t>(ci)][mi];
        row.bits += acc.bits.total;
        row.bit_errors += acc.bits.errors;
        all_lat.us.insert(all_lat.us.end(), acc.lat.us.begin(), acc.lat.us.end());
      }
      row.ber = row.bits ? static_cast<double>(row.bit_errors) / row.bits : 0.0;
      // normalized throughput: delivered bits per channel use
      row.throughput_bpcu = row.samples
                                ? static_cast<double>(row.bits - row.bit_errors) / row.samples
                                : 0.0;
      const int steps = row.method == "teacher" ? cfg.eval.teacher_steps
                        : row.method == "pipeline" ? 1
                                                   : 0;
      row.flops_per_sample =
          steps > 0 ? flops_estimate(acfg, dcfg, sys, steps).total : 0.0;
      all_lat.finalize(row);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream os(path);
  require(os.good(), ErrorKind::Io, "cannot write metrics csv: " + path);
  os << "method,cell,snr_db,samples,bits,bit_errors,ber,throughput_bpcu,flops_per_sample\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.10g,%lld,%lld,%lld,%.10g,%.10g,%.10g\n",
                  r.method.c_str(), r.cell, r.snr_db, static_cast<long long>(r.samples),
                  static_cast<long long>(r.bits), static_cast<long long>(r.bit_errors), r.ber,
                  r.throughput_bpcu, r.flops_per_sample);
    os << buf;
  }
}

void write_timing_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream os(path);
  require(os.good(), ErrorKind::Io, "cannot write timing csv: " + path);
  os << "method,cell,snr_db,mean_us,p50_us,p95_us\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.10g,%.3f,%.3f,%.3f\n", r.method.c_str(), r.cell,
                  r.snr_db, r.mean_us, r.p50_us, r.p95_us);
    os << buf;
  }
}

namespace {

MetricsReport finish_report(const ExperimentConfig& cfg, MetricsReport report) {
  fs::create_directories(cfg.out_dir);
  write_metrics_csv(cfg.out_dir + "/metrics.csv", report);
  write_timing_csv(cfg.out_dir + "/timing.csv", report);
  json rep;
  rep["seed"] = report.seed;
  rep["config_hash"] = report.config_digest;
  rep["code_version"] = report.code_version;
  rep["config"] = experiment_config_json(cfg);
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"method", r.method},
                    {"cell", r.cell},
                    {"snr_db", r.snr_db},
                    {"samples", r.samples},
                    {"bits", r.bits},
                    {"bit_errors", r.bit_errors},
                    {"ber", r.ber},
                    {"throughput_bpcu", r.throughput_bpcu},
                    {"flops_per_sample", r.flops_per_sample}});
  rep["rows"] = rows;
  std::ofstream os(cfg.out_dir + "/report.json");
  require(os.good(), ErrorKind::Io, "cannot write report.json under " + cfg.out_dir);
  os << rep.dump(2) << "\n";
  plot_from_csv(cfg.out_dir + "/metrics.csv", cfg.out_dir);
  return report;
}

}  // namespace

MetricsReport cmd_evaluate(const ExperimentConfig& cfg) {
  return finish_report(cfg, evaluate_cell(cfg, 0));
}

MetricsReport cmd_sweep(const ExperimentConfig& cfg) {
  MetricsReport all;
  for (size_t cell = 0; cell < cfg.grid.size(); ++cell) {
    MetricsReport part = evaluate_cell(cfg, static_cast<int>(cell));
    all.seed = part.seed;
    all.config_digest = part.config_digest;
    all.code_version = part.code_version;
    std::move(part.rows.begin(), part.rows.end(), std::back_inserter(all.rows));
  }
  return finish_report(cfg, all);
}

}  // namespace mud
