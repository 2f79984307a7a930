#include "eegstate/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace eegstate {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

using nlohmann::json;

json to_json(const EncoderConfig& c) {
  return json{{"conv_in", c.conv_in},
              {"conv_out", c.conv_out},
              {"conv_kernel", c.conv_kernel},
              {"conv_stride", c.conv_stride},
              {"conv_padding", c.conv_padding},
              {"channel_filters", c.channel_filters},
              {"region_filters", c.region_filters},
              {"patch_len", c.patch_len},
              {"patch_stride", c.patch_stride},
              {"dim", c.dim},
              {"layers", c.layers},
              {"heads", c.heads},
              {"ff_dim", c.ff_dim},
              {"norm_groups", c.norm_groups},
              {"max_patches", c.max_patches}};
}

json to_json(const DecoderConfig& c) {
  return json{{"layers", c.layers}, {"heads", c.heads}, {"ff_dim", c.ff_dim}};
}

json to_json(const ModelConfig& c) {
  return json{{"encoder", to_json(c.encoder)}, {"decoder", to_json(c.decoder)}};
}

json to_json(const PretrainConfig& c) {
  return json{{"peak_lr", c.peak_lr},
              {"min_lr", c.min_lr},
              {"warmup_epochs", c.warmup_epochs},
              {"epochs", c.epochs},
              {"beta1", c.adamw.beta1},
              {"beta2", c.adamw.beta2},
              {"eps", c.adamw.eps},
              {"weight_decay", c.adamw.weight_decay},
              {"grad_clip", c.grad_clip},
              {"mask_ratio", c.mask_ratio},
              {"margin", c.margin},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"window_s", c.window_s}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  j.at("conv_in").get_to(c.conv_in);
  j.at("conv_out").get_to(c.conv_out);
  j.at("conv_kernel").get_to(c.conv_kernel);
  j.at("conv_stride").get_to(c.conv_stride);
  j.at("conv_padding").get_to(c.conv_padding);
  j.at("channel_filters").get_to(c.channel_filters);
  j.at("region_filters").get_to(c.region_filters);
  j.at("patch_len").get_to(c.patch_len);
  j.at("patch_stride").get_to(c.patch_stride);
  j.at("dim").get_to(c.dim);
  j.at("layers").get_to(c.layers);
  j.at("heads").get_to(c.heads);
  j.at("ff_dim").get_to(c.ff_dim);
  j.at("norm_groups").get_to(c.norm_groups);
  j.at("max_patches").get_to(c.max_patches);
  return c;
}

DecoderConfig decoder_config_from_json(const json& j) {
  DecoderConfig c;
  j.at("layers").get_to(c.layers);
  j.at("heads").get_to(c.heads);
  j.at("ff_dim").get_to(c.ff_dim);
  return c;
}

ModelConfig model_config_from_json(const json& j) {
  return {encoder_config_from_json(j.at("encoder")), decoder_config_from_json(j.at("decoder"))};
}

PretrainConfig pretrain_config_from_json(const json& j) {
  PretrainConfig c;
  j.at("peak_lr").get_to(c.peak_lr);
  j.at("min_lr").get_to(c.min_lr);
  j.at("warmup_epochs").get_to(c.warmup_epochs);
  j.at("epochs").get_to(c.epochs);
  j.at("beta1").get_to(c.adamw.beta1);
  j.at("beta2").get_to(c.adamw.beta2);
  j.at("eps").get_to(c.adamw.eps);
  j.at("weight_decay").get_to(c.adamw.weight_decay);
  j.at("grad_clip").get_to(c.grad_clip);
  j.at("mask_ratio").get_to(c.mask_ratio);
  j.at("margin").get_to(c.margin);
  j.at("batch_size").get_to(c.batch_size);
  j.at("seed").get_to(c.seed);
  j.at("window_s").get_to(c.window_s);
  return c;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const ModelConfig& c) { return fnv1a64(to_json(c).dump()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string rng_state(const nn::Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

nn::Rng rng_from_state(const std::string& state) {
  nn::Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw CheckpointError("corrupt RNG state in checkpoint");
  return rng;
}

namespace {

constexpr char kMagic[4] = {'E', 'G', 'C', 'K'};

struct Block {
  std::string name;
  const Matrix* data;
};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw CheckpointError("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, PretrainModel& model, const AdamW& optimizer,
                     const TrainState& state, const PretrainConfig& config) {
  std::vector<Block> blocks;
  for (nn::Param* p : model.all_params()) blocks.push_back({p->name, &p->value});
  json steps = json::object();
  for (const auto& [name, slot] : optimizer.slots()) {
    blocks.push_back({"adam.m/" + name, &slot.m});
    blocks.push_back({"adam.v/" + name, &slot.v});
    steps[name] = slot.steps;
  }

  json table = json::array();
  std::uint64_t offset = 0;
  for (const Block& b : blocks) {
    table.push_back({{"name", b.name},
                     {"rows", b.data->rows()},
                     {"cols", b.data->cols()},
                     {"dtype", "f64"},
                     {"offset", offset}});
    offset += static_cast<std::uint64_t>(b.data->size()) * sizeof(double);
  }

  json manifest;
  manifest["format"] = "eegstate-checkpoint";
  manifest["version"] = kCheckpointVersion;
  manifest["model_config"] = to_json(model.config());
  manifest["config_hash"] = hex64(config_hash(model.config()));
  manifest["pretrain_config"] = to_json(config);
  manifest["init_seed"] = model.init_seed();
  manifest["epoch"] = state.epoch;
  manifest["step_in_epoch"] = state.step_in_epoch;
  manifest["global_step"] = state.global_step;
  manifest["rng"] = {{"mask", rng_state(state.mask_rng)}};
  manifest["adam"] = {{"beta1", optimizer.config().beta1},
                      {"beta2", optimizer.config().beta2},
                      {"eps", optimizer.config().eps},
                      {"weight_decay", optimizer.config().weight_decay},
                      {"steps", steps}};
  manifest["blocks"] = table;
  const std::string text = manifest.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write " + tmp.string());
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const Block& b : blocks)
      os.write(reinterpret_cast<const char*>(b.data->data()),
               static_cast<std::streamsize>(b.data->size() * sizeof(double)));
    os.flush();
    if (!os) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("not a checkpoint: " + path.string());
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw CheckpointError("truncated checkpoint manifest");
  const std::streamoff payload_start = is.tellg();

  LoadedCheckpoint out;
  ModelConfig config;
  try {
    out.manifest = json::parse(text);
    config = model_config_from_json(out.manifest.at("model_config"));
    out.pretrain = pretrain_config_from_json(out.manifest.at("pretrain_config"));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  if (out.manifest.value("config_hash", std::string()) != hex64(config_hash(config)))
    throw CheckpointError("checkpoint config hash does not match its config");
  if (expected && config_hash(*expected) != config_hash(config))
    throw CheckpointError("config mismatch: checkpoint " + hex64(config_hash(config)) +
                          ", expected " + hex64(config_hash(*expected)));

  const auto& m = out.manifest;
  out.model = std::make_unique<PretrainModel>(config, m.at("init_seed").get<std::uint64_t>());
  std::map<std::string, nn::Param*> by_name;
  for (nn::Param* p : out.model->all_params()) by_name[p->name] = p;

  const auto& adam = m.at("adam");
  out.optimizer = AdamW(AdamWConfig{adam.at("beta1"), adam.at("beta2"), adam.at("eps"),
                                    adam.at("weight_decay")});
  auto& slots = out.optimizer.slots();
  for (const auto& [name, steps] : adam.at("steps").items()) slots[name].steps = steps.get<long>();

  size_t params_seen = 0;
  for (const auto& b : m.at("blocks")) {
    const std::string name = b.at("name");
    if (b.at("dtype") != "f64") throw CheckpointError("unsupported block dtype for " + name);
    Matrix value(b.at("rows").get<Eigen::Index>(), b.at("cols").get<Eigen::Index>());
    is.seekg(payload_start + static_cast<std::streamoff>(b.at("offset").get<std::uint64_t>()));
    is.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(double)));
    if (!is) throw CheckpointError("truncated block " + name);
    if (name.rfind("adam.m/", 0) == 0) {
      slots[name.substr(7)].m = std::move(value);
    } else if (name.rfind("adam.v/", 0) == 0) {
      slots[name.substr(7)].v = std::move(value);
    } else {
      auto it = by_name.find(name);
      if (it == by_name.end()) throw CheckpointError("unknown parameter block " + name);
      if (it->second->value.rows() != value.rows() || it->second->value.cols() != value.cols())
        throw CheckpointError("shape mismatch for " + name);
      it->second->value = std::move(value);
      ++params_seen;
    }
  }
  if (params_seen != by_name.size()) throw CheckpointError("checkpoint is missing parameter blocks");
  for (const auto& [name, slot] : slots)
    if (slot.m.size() == 0 || slot.v.size() != slot.m.size())
      throw CheckpointError("incomplete optimizer state for " + name);

  out.state.epoch = m.at("epoch");
  out.state.step_in_epoch = m.at("step_in_epoch");
  out.state.global_step = m.at("global_step");
  out.state.mask_rng = rng_from_state(m.at("rng").at("mask"));
  return out;
}

}  // namespace eegstate
