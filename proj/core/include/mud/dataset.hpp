#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mud/system.hpp"

namespace mud {

// Dataset directory layout (format version 1):
//   manifest.json       config fields, record count, dtype, endianness
//   channels.bin        per record: U matrices (N_r x N_t_u), row-major,
//                       interleaved re/im float64 little-endian
//   estimates.bin       same layout as channels.bin (H_hat)
//   received.bin        per record: y (N_r), interleaved re/im f8
//   symbols.bin         per record: stacked x (sum N_t_u), interleaved re/im f8
//   bits.bin            per record: concatenated user bits, one byte each
//   noise.bin           per record: sigma_n^2, f8
//   est_mse.bin         per record: sigma_{H,u}^2 per user, f8
struct DatasetMeta {
  SystemConfig config;
  int64_t records = 0;
  // per-sample draw ranges (snr/est_mse in config hold fixed values when the
  // ranges are empty)
  std::vector<double> snr_range;      // [lo, hi]
  std::vector<double> est_mse_range;  // [lo, hi]
  int format_version = 1;
};

class DatasetWriter {
 public:
  DatasetWriter(const std::string& dir, const DatasetMeta& meta);
  ~DatasetWriter();
  void append(const DemodSample& s);
  void finish();  // writes the manifest

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class DatasetReader {
 public:
  explicit DatasetReader(const std::string& dir);
  ~DatasetReader();

  const DatasetMeta& meta() const;
  int64_t size() const;
  DemodSample read(int64_t index) const;
  std::vector<DemodSample> read_all() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Streams validated ChannelSets out of a dataset directory. Yields nothing
/// for an empty directory (no manifest -> ingestion error; zero records ->
/// empty stream).
void load_external_channels(const std::string& dir,
                            const std::function<void(int64_t, ChannelSet)>& sink);

/// Deterministic generation: per-record seeds derive from (seed, index), so
/// regeneration is byte-identical and generation could proceed in any order.
void generate_dataset(const std::string& dir, const DatasetMeta& meta);

/// Draws the sample with the given record index under this meta (per-record
/// snr / est_mse resolved from the ranges).
DemodSample draw_dataset_sample(const DatasetMeta& meta, int64_t index);

}  // namespace mud
