#pragma once

#include "eegstate/finetune.hpp"
#include "eegstate/synth.hpp"

#include <filesystem>
#include <optional>
#include <set>

namespace eegstate {

/// Schema violation. `key` is the dotted path (section.key) at fault.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error("config: " + key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Parsed run configuration. A section is set only when present in the file.
/// Sections: encoder, decoder (together: model), pretrain, finetune, synth.
struct RunConfig {
  std::optional<ModelConfig> model;
  std::optional<PretrainConfig> pretrain;
  std::uint64_t init_seed = 0;  // pretrain.init_seed
  std::optional<AdaptConfig> finetune;
  double finetune_window_s = 10.0;  // finetune.window_s
  std::optional<synth::SynthSpec> synth;
};

/// INI text -> RunConfig. Every key of a present section is required;
/// unknown sections/keys and malformed values are errors. `required` lists
/// sections that must be present.
RunConfig parse_config(const std::string& text, const std::set<std::string>& required = {});
RunConfig load_config(const std::filesystem::path& path, const std::set<std::string>& required = {});

/// Renders the sections that are set, in schema order.
std::string render_config(const RunConfig& config);

/// A configuration with every section set to its defaults.
RunConfig default_config();

/// Dotted key paths of the schema, in order.
std::vector<std::string> schema_keys();

}  // namespace eegstate
