#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "mud/nn/params.hpp"

namespace mud::nn {

// Versioned parameter container: magic + JSON header (names, shapes, dtype,
// arbitrary metadata) + float64 little-endian payload in header order.
inline constexpr char kCheckpointMagic[8] = {'M', 'U', 'D', 'C', 'K', 'P', 'T', '1'};

void save_checkpoint(const std::string& path, const ParamStore<float>& store,
                     const nlohmann::json& meta);
void save_checkpoint(const std::string& path, const ParamStore<double>& store,
                     const nlohmann::json& meta);

/// Fills `store` (already built with matching names/shapes) and returns the
/// metadata header.
nlohmann::json load_checkpoint(const std::string& path, ParamStore<float>& store);
nlohmann::json load_checkpoint(const std::string& path, ParamStore<double>& store);

/// Reads only the metadata header.
nlohmann::json read_checkpoint_meta(const std::string& path);

/// FNV-1a of the file bytes, as a hex string; used for provenance fields.
std::string file_hash_hex(const std::string& path);

}  // namespace mud::nn
