#include "mud/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace mud::nn {

namespace {

using json = nlohmann::json;

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

template <class S>
void save_impl(const std::string& path, const ParamStore<S>& store, const json& meta) {
  json header;
  header["version"] = 1;
  header["dtype"] = "f8";
  header["meta"] = meta;
  json params = json::array();
  for (int i = 0; i < store.count(); ++i) {
    const auto& e = store.at(i);
    params.push_back({{"name", e.name},
                      {"rows", static_cast<int>(e.value.rows())},
                      {"cols", static_cast<int>(e.value.cols())}});
  }
  header["params"] = params;
  const std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::Io, "cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, 8);
  write_u32(os, static_cast<uint32_t>(hs.size()));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  std::vector<double> buf;
  for (int i = 0; i < store.count(); ++i) {
    const auto& v = store.at(i).value;
    buf.resize(static_cast<size_t>(v.size()));
    size_t k = 0;
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c) buf[k++] = static_cast<double>(v(r, c));
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(double)));
  }
  require(os.good(), ErrorKind::Io, "checkpoint write failed: " + path);
}

template <class S>
json load_impl(const std::string& path, ParamStore<S>& store) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::Io, "cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  require(is.good() && std::memcmp(magic, kCheckpointMagic, 8) == 0, ErrorKind::Ingestion,
          "not a checkpoint file: " + path);
  const uint32_t hlen = read_u32(is);
  std::string hs(hlen, '\0');
  is.read(hs.data(), hlen);
  require(is.good(), ErrorKind::Ingestion, "truncated checkpoint header: " + path);
  json header = json::parse(hs);
  const auto& params = header.at("params");
  require(static_cast<int>(params.size()) == store.count(), ErrorKind::Ingestion,
          "checkpoint parameter count mismatch: " + path);
  std::vector<double> buf;
  for (int i = 0; i < store.count(); ++i) {
    auto& e = store.at(i);
    const auto& p = params[i];
    require(p.at("name").get<std::string>() == e.name &&
                p.at("rows").get<int>() == static_cast<int>(e.value.rows()) &&
                p.at("cols").get<int>() == static_cast<int>(e.value.cols()),
            ErrorKind::Ingestion,
            "checkpoint parameter mismatch at " + e.name + " in " + path);
    buf.resize(static_cast<size_t>(e.value.size()));
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
    require(is.good(), ErrorKind::Ingestion, "truncated checkpoint payload: " + path);
    size_t k = 0;
    for (Eigen::Index r = 0; r < e.value.rows(); ++r)
      for (Eigen::Index c = 0; c < e.value.cols(); ++c) e.value(r, c) = static_cast<S>(buf[k++]);
  }
  return header.at("meta");
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& store,
                     const nlohmann::json& meta) {
  save_impl(path, store, meta);
}
void save_checkpoint(const std::string& path, const ParamStore<double>& store,
                     const nlohmann::json& meta) {
  save_impl(path, store, meta);
}

nlohmann::json load_checkpoint(const std::string& path, ParamStore<float>& store) {
  return load_impl(path, store);
}
nlohmann::json load_checkpoint(const std::string& path, ParamStore<double>& store) {
  return load_impl(path, store);
}

nlohmann::json read_checkpoint_meta(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::Io, "cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  require(is.good() && std::memcmp(magic, kCheckpointMagic, 8) == 0, ErrorKind::Ingestion,
          "not a checkpoint file: " + path);
  const uint32_t hlen = read_u32(is);
  std::string hs(hlen, '\0');
  is.read(hs.data(), hlen);
  require(is.good(), ErrorKind::Ingestion, "truncated checkpoint header: " + path);
  return json::parse(hs).at("meta");
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::Io, "cannot open file for hashing: " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    const auto n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!is) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

}  // namespace mud::nn
