#include "mud/dataset.hpp"

#include "mud/linear.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace mud {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json config_to_json(const SystemConfig& c) {
  return json{{"users", c.users},
              {"tx_antennas", c.tx_antennas},
              {"rx_antennas", c.rx_antennas},
              {"constellation", to_string(c.constellation)},
              {"snr_db", c.snr_db},
              {"est_mse", c.est_mse},
              {"seed", c.seed},
              {"channel", c.channel == ChannelModel::IidRayleigh ? "iid_rayleigh"
                                                                 : "exp_correlated"},
              {"rho", c.rho}};
}

SystemConfig config_from_json(const json& j) {
  SystemConfig c;
  c.users = j.at("users").get<int>();
  c.tx_antennas = j.at("tx_antennas").get<std::vector<int>>();
  c.rx_antennas = j.at("rx_antennas").get<int>();
  c.constellation = modulation_from_string(j.at("constellation").get<std::string>());
  c.snr_db = j.at("snr_db").get<double>();
  c.est_mse = j.at("est_mse").get<std::vector<double>>();
  c.seed = j.at("seed").get<uint64_t>();
  c.channel = j.at("channel").get<std::string>() == "exp_correlated"
                  ? ChannelModel::ExpCorrelated
                  : ChannelModel::IidRayleigh;
  c.rho = j.at("rho").get<double>();
  return c;
}

void write_complex(std::ostream& os, const MatC& m) {
  std::vector<double> buf(static_cast<size_t>(m.size()) * 2);
  size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      buf[k++] = m(r, c).real();
      buf[k++] = m(r, c).imag();
    }
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(double)));
}

MatC read_complex(std::istream& is, int rows, int cols, const std::string& what, int64_t rec) {
  std::vector<double> buf(static_cast<size_t>(rows) * cols * 2);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(double)));
  require(is.good(), ErrorKind::Ingestion,
          "corrupted " + what + " at record " + std::to_string(rec));
  MatC m(rows, cols);
  size_t k = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      m(r, c) = cxd(buf[k], buf[k + 1]);
      k += 2;
    }
  return m;
}

}  // namespace

struct DatasetWriter::Impl {
  fs::path dir;
  DatasetMeta meta;
  std::ofstream channels, estimates, received, symbols, bits, noise, est_mse;
  int64_t written = 0;
  bool finished = false;
};

DatasetWriter::DatasetWriter(const std::string& dir, const DatasetMeta& meta)
    : impl_(std::make_unique<Impl>()) {
  impl_->dir = dir;
  impl_->meta = meta;
  std::error_code ec;
  fs::create_directories(impl_->dir, ec);
  auto open = [&](std::ofstream& os, const char* name) {
    os.open(impl_->dir / name, std::ios::binary | std::ios::trunc);
    require(os.good(), ErrorKind::Io, std::string("cannot open ") + name + " in " + dir);
  };
  open(impl_->channels, "channels.bin");
  open(impl_->estimates, "estimates.bin");
  open(impl_->received, "received.bin");
  open(impl_->symbols, "symbols.bin");
  open(impl_->bits, "bits.bin");
  open(impl_->noise, "noise.bin");
  open(impl_->est_mse, "est_mse.bin");
}

DatasetWriter::~DatasetWriter() {
  if (!impl_->finished) {
    try {
      finish();
    } catch (...) {
    }
  }
}

void DatasetWriter::append(const DemodSample& s) {
  auto& im = *impl_;
  require(static_cast<int>(s.channels.H.size()) == im.meta.config.users, ErrorKind::Shape,
          "append: user count mismatch");
  for (int u = 0; u < im.meta.config.users; ++u) {
    write_complex(im.channels, s.channels.H[static_cast<size_t>(u)]);
    write_complex(im.estimates, s.estimates.H_hat[static_cast<size_t>(u)]);
  }
  write_complex(im.received, s.y);
  for (const auto& xu : s.x) write_complex(im.symbols, xu);
  for (const auto& bu : s.bits)
    im.bits.write(reinterpret_cast<const char*>(bu.data()),
                  static_cast<std::streamsize>(bu.size()));
  im.noise.write(reinterpret_cast<const char*>(&s.noise_var), sizeof(double));
  for (double v : s.estimates.est_mse)
    im.est_mse.write(reinterpret_cast<const char*>(&v), sizeof(double));
  ++im.written;
}

void DatasetWriter::finish() {
  auto& im = *impl_;
  if (im.finished) return;
  im.finished = true;
  json manifest;
  manifest["format_version"] = im.meta.format_version;
  manifest["dtype"] = "f8";
  manifest["endianness"] = "little";
  manifest["records"] = im.written;
  manifest["config"] = config_to_json(im.meta.config);
  manifest["snr_range"] = im.meta.snr_range;
  manifest["est_mse_range"] = im.meta.est_mse_range;
  std::ofstream os(im.dir / "manifest.json");
  require(os.good(), ErrorKind::Io, "cannot write manifest in " + im.dir.string());
  os << manifest.dump(2) << "\n";
}

struct DatasetReader::Impl {
  fs::path dir;
  DatasetMeta meta;
  int bits_per_symbol = 0;
  int total_streams = 0;
  // per-record byte strides
  int64_t ch_stride = 0, y_stride = 0, x_stride = 0, b_stride = 0;
};

DatasetReader::DatasetReader(const std::string& dir) : impl_(std::make_unique<Impl>()) {
  impl_->dir = dir;
  const fs::path mp = impl_->dir / "manifest.json";
  require(fs::exists(mp), ErrorKind::Ingestion, "missing manifest: " + mp.string());
  std::ifstream is(mp);
  json manifest = json::parse(is, nullptr, /*allow_exceptions=*/false);
  require(!manifest.is_discarded(), ErrorKind::Ingestion, "unparsable manifest: " + mp.string());
  require(manifest.value("format_version", -1) == 1, ErrorKind::Ingestion,
          "unsupported dataset format version in " + mp.string());
  impl_->meta.records = manifest.at("records").get<int64_t>();
  impl_->meta.config = config_from_json(manifest.at("config"));
  impl_->meta.snr_range = manifest.value("snr_range", std::vector<double>{});
  impl_->meta.est_mse_range = manifest.value("est_mse_range", std::vector<double>{});

  const auto& c = impl_->meta.config;
  impl_->bits_per_symbol = make_constellation(c.constellation).bits_per_symbol;
  impl_->total_streams = c.total_streams();
  int64_t ch = 0;
  for (int nt : c.tx_antennas) ch += static_cast<int64_t>(c.rx_antennas) * nt;
  impl_->ch_stride = ch * 16;
  impl_->y_stride = static_cast<int64_t>(c.rx_antennas) * 16;
  impl_->x_stride = static_cast<int64_t>(impl_->total_streams) * 16;
  impl_->b_stride = static_cast<int64_t>(impl_->total_streams) * impl_->bits_per_symbol;

  // validate sizes against the manifest
  auto check = [&](const char* name, int64_t stride) {
    const fs::path p = impl_->dir / name;
    require(fs::exists(p), ErrorKind::Ingestion, "missing dataset file: " + p.string());
    const auto sz = static_cast<int64_t>(fs::file_size(p));
    require(sz == stride * impl_->meta.records, ErrorKind::Ingestion,
            std::string(name) + " size mismatch with manifest record count");
  };
  check("channels.bin", impl_->ch_stride);
  check("estimates.bin", impl_->ch_stride);
  check("received.bin", impl_->y_stride);
  check("symbols.bin", impl_->x_stride);
  check("bits.bin", impl_->b_stride);
  check("noise.bin", 8);
  check("est_mse.bin", static_cast<int64_t>(c.users) * 8);
}

DatasetReader::~DatasetReader() = default;

const DatasetMeta& DatasetReader::meta() const { return impl_->meta; }
int64_t DatasetReader::size() const { return impl_->meta.records; }

DemodSample DatasetReader::read(int64_t index) const {
  const auto& im = *impl_;
  require(index >= 0 && index < im.meta.records, ErrorKind::Usage,
          "dataset index out of range");
  const auto& c = im.meta.config;
  DemodSample s;
  {
    std::ifstream is(im.dir / "channels.bin", std::ios::binary);
    std::ifstream es(im.dir / "estimates.bin", std::ios::binary);
    is.seekg(index * im.ch_stride);
    es.seekg(index * im.ch_stride);
    for (int u = 0; u < c.users; ++u) {
      s.channels.H.push_back(read_complex(is, c.rx_antennas, c.tx_antennas[u], "channels", index));
      s.estimates.H_hat.push_back(
          read_complex(es, c.rx_antennas, c.tx_antennas[u], "estimates", index));
    }
  }
  {
    std::ifstream is(im.dir / "received.bin", std::ios::binary);
    is.seekg(index * im.y_stride);
    s.y = read_complex(is, c.rx_antennas, 1, "received", index).col(0);
  }
  {
    std::ifstream is(im.dir / "symbols.bin", std::ios::binary);
    is.seekg(index * im.x_stride);
    const VecC all = read_complex(is, im.total_streams, 1, "symbols", index).col(0);
    s.x = split_streams(all, c.tx_antennas);
  }
  {
    std::ifstream is(im.dir / "bits.bin", std::ios::binary);
    is.seekg(index * im.b_stride);
    for (int u = 0; u < c.users; ++u) {
      std::vector<uint8_t> b(static_cast<size_t>(c.tx_antennas[u]) * im.bits_per_symbol);
      is.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size()));
      require(is.good(), ErrorKind::Ingestion, "corrupted bits at record " + std::to_string(index));
      s.bits.push_back(std::move(b));
    }
  }
  {
    std::ifstream is(im.dir / "noise.bin", std::ios::binary);
    is.seekg(index * 8);
    is.read(reinterpret_cast<char*>(&s.noise_var), 8);
    require(is.good(), ErrorKind::Ingestion, "corrupted noise at record " + std::to_string(index));
  }
  {
    std::ifstream is(im.dir / "est_mse.bin", std::ios::binary);
    is.seekg(index * static_cast<int64_t>(c.users) * 8);
    s.estimates.est_mse.resize(static_cast<size_t>(c.users));
    is.read(reinterpret_cast<char*>(s.estimates.est_mse.data()),
            static_cast<std::streamsize>(c.users * 8));
    require(is.good(), ErrorKind::Ingestion,
            "corrupted est_mse at record " + std::to_string(index));
  }
  return s;
}

std::vector<DemodSample> DatasetReader::read_all() const {
  std::vector<DemodSample> out;
  out.reserve(static_cast<size_t>(size()));
  for (int64_t i = 0; i < size(); ++i) out.push_back(read(i));
  return out;
}

void load_external_channels(const std::string& dir,
                            const std::function<void(int64_t, ChannelSet)>& sink) {
  DatasetReader reader(dir);
  const auto& c = reader.meta().config;
  for (int64_t i = 0; i < reader.size(); ++i) {
    DemodSample s = reader.read(i);
    for (int u = 0; u < c.users; ++u) {
      require(s.channels.H[static_cast<size_t>(u)].rows() == c.rx_antennas &&
                  s.channels.H[static_cast<size_t>(u)].cols() == c.tx_antennas[u],
              ErrorKind::Ingestion,
              "channel shape mismatch at record " + std::to_string(i) + " user " +
                  std::to_string(u));
      require(s.channels.H[static_cast<size_t>(u)].allFinite(), ErrorKind::Ingestion,
              "non-finite channel at record " + std::to_string(i));
    }
    sink(i, std::move(s.channels));
  }
}

DemodSample draw_dataset_sample(const DatasetMeta& meta, int64_t index) {
  SystemConfig cfg = meta.config;
  Rng rng(derive_seed(cfg.seed, 0xda7a, static_cast<uint64_t>(index)));
  if (meta.snr_range.size() == 2)
    cfg.snr_db = rng.uniform(meta.snr_range[0], meta.snr_range[1]);
  if (meta.est_mse_range.size() == 2) {
    cfg.est_mse.resize(static_cast<size_t>(cfg.users));
    for (auto& v : cfg.est_mse) v = rng.uniform(meta.est_mse_range[0], meta.est_mse_range[1]);
  } else if (cfg.est_mse.empty()) {
    cfg.est_mse.assign(static_cast<size_t>(cfg.users), 0.0);
  }
  return draw_sample(cfg, rng);
}

void generate_dataset(const std::string& dir, const DatasetMeta& meta) {
  DatasetWriter w(dir, meta);
  for (int64_t i = 0; i < meta.records; ++i) w.append(draw_dataset_sample(meta, i));
  w.finish();
}

}  // namespace mud
