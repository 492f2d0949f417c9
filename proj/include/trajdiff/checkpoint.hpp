#pragma once

#include "trajdiff/config.hpp"
#include "trajdiff/trainer.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace trajdiff {

constexpr std::uint32_t kCheckpointVersion = 1;

/// Trained model plus everything needed to resume: optimizer moments, the
/// step counter, early-stopping bookkeeping, and the config snapshot.
struct Checkpoint {
  RunConfig config;
  TrainState state;
};

/// Layout: "TRAJDIFF", u32 version, u64 header length, JSON header, raw
/// little-endian double blobs (params, adam_m, adam_v, best_params), then the
/// 32-byte SHA-256 of everything before it.
std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws DataError on a bad magic, version, layout or digest.
Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& source = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model with the best validation objective.
ScoreNetParams best_model(const Checkpoint& ckpt);

}  // namespace trajdiff
