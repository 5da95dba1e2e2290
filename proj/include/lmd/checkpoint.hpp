#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "lmd/encoder.hpp"

namespace lmd {

/// Model weights plus the JSON config they were trained under.
struct Checkpoint {
    ModelParams<float> params;
    /// Free-form run metadata (training config, sampler, seed, ...).
    nlohmann::json meta = nlohmann::json::object();

    bool operator==(const Checkpoint&) const = default;
};

/// "LMCK" container: magic, version, tensor count, per tensor (name, rows,
/// cols, dtype, little-endian values), a JSON trailer holding the encoder
/// config and metadata, then an FNV-1a checksum.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);

/// Rebuilds the parameter layout from the trailer and rejects any tensor
/// whose name or shape differs from it (ShapeMismatch), a wrong version
/// (VersionMismatch) or a damaged file (ChecksumMismatch).
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

} // namespace lmd
