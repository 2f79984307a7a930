#pragma once

#include "eegstate/pretrain.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>

namespace eegstate {

/// Checkpoint container:
///   "EGCK" | u32 version | u64 manifest bytes | JSON manifest | payload
/// The manifest holds the model and training configs, the config hash, the
/// schedule position, RNG states and a block table (name, rows, cols, dtype,
/// byte offset into the payload). Blocks are little-endian float64, so
/// parameters and optimizer moments round-trip bit-exactly.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const EncoderConfig& c);
nlohmann::json to_json(const DecoderConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const PretrainConfig& c);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
DecoderConfig decoder_config_from_json(const nlohmann::json& j);
ModelConfig model_config_from_json(const nlohmann::json& j);
PretrainConfig pretrain_config_from_json(const nlohmann::json& j);

/// 64-bit FNV-1a of a string.
std::uint64_t fnv1a64(std::string_view bytes);
/// FNV-1a of the canonical (sorted-key, compact) JSON of the architecture.
std::uint64_t config_hash(const ModelConfig& c);
std::string hex64(std::uint64_t v);

std::string rng_state(const nn::Rng& rng);
nn::Rng rng_from_state(const std::string& state);

/// Writes to `path` through a temporary file and a rename.
void save_checkpoint(const std::filesystem::path& path, PretrainModel& model, const AdamW& optimizer,
                     const TrainState& state, const PretrainConfig& config);

struct LoadedCheckpoint {
  std::unique_ptr<PretrainModel> model;
  AdamW optimizer;
  TrainState state;
  PretrainConfig pretrain;
  nlohmann::json manifest;
};

/// Refuses (CheckpointError) on a bad magic, an unknown version, a corrupt
/// manifest or, when `expected` is given, an architecture that differs.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const ModelConfig* expected = nullptr);

}  // namespace eegstate
