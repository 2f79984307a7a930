#include "eegstate/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace eegstate {
namespace {

namespace pt = boost::property_tree;

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const std::string s = trim(v);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  const std::string s = trim(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key, "expected true/false, got '" + v + "'");
}

template <typename T>
std::vector<T> parse_numbers(const std::string& key, const std::string& v) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(parse_number<T>(key, item));
  if (out.empty()) throw ConfigError(key, "expected a non-empty list");
  return out;
}

// shortest text that parses back to the same double
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) out += fmt(v[i]);
    else if constexpr (std::is_arithmetic_v<T>) out += std::to_string(v[i]);
    else out += std::string(v[i]);
  }
  return out;
}

struct Entry {
  std::string section, key;
  std::function<void(RunConfig&, const std::string& path, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Field accessors for each section; the optional is engaged before set/get.
#define ENC(field) c.model->encoder.field
#define DEC(field) c.model->decoder.field
#define PRE(field) c.pretrain->field
#define FIN(field) c.finetune->field
#define SYN(field) c.synth->field

#define INT_ENTRY(sec, name, acc)                                                           \
  Entry{sec, name, [](RunConfig& c, const std::string& p, const std::string& v) { acc = parse_number<int>(p, v); }, \
        [](const RunConfig& c) { return std::to_string(acc); }}
#define DBL_ENTRY(sec, name, acc)                                                                \
  Entry{sec, name, [](RunConfig& c, const std::string& p, const std::string& v) { acc = parse_number<double>(p, v); }, \
        [](const RunConfig& c) { return fmt(acc); }}
#define U64_ENTRY(sec, name, acc)                                                                       \
  Entry{sec, name, [](RunConfig& c, const std::string& p, const std::string& v) { acc = parse_number<std::uint64_t>(p, v); }, \
        [](const RunConfig& c) { return std::to_string(acc); }}
#define INTS_ENTRY(sec, name, acc)                                                                  \
  Entry{sec, name, [](RunConfig& c, const std::string& p, const std::string& v) { acc = parse_numbers<int>(p, v); }, \
        [](const RunConfig& c) { return join(acc); }}
#define BOOL_ENTRY(sec, name, acc)                                                            \
  Entry{sec, name, [](RunConfig& c, const std::string& p, const std::string& v) { acc = parse_bool(p, v); }, \
        [](const RunConfig& c) { return std::string(acc ? "true" : "false"); }}

const std::vector<Entry>& schema() {
  static const std::vector<Entry> entries = {
      INTS_ENTRY("encoder", "conv_in", ENC(conv_in)),
      INTS_ENTRY("encoder", "conv_out", ENC(conv_out)),
      INTS_ENTRY("encoder", "conv_kernel", ENC(conv_kernel)),
      INTS_ENTRY("encoder", "conv_stride", ENC(conv_stride)),
      INTS_ENTRY("encoder", "conv_padding", ENC(conv_padding)),
      INT_ENTRY("encoder", "channel_filters", ENC(channel_filters)),
      INT_ENTRY("encoder", "region_filters", ENC(region_filters)),
      INT_ENTRY("encoder", "patch_len", ENC(patch_len)),
      INT_ENTRY("encoder", "patch_stride", ENC(patch_stride)),
      INT_ENTRY("encoder", "dim", ENC(dim)),
      INT_ENTRY("encoder", "layers", ENC(layers)),
      INT_ENTRY("encoder", "heads", ENC(heads)),
      INT_ENTRY("encoder", "ff_dim", ENC(ff_dim)),
      INT_ENTRY("encoder", "norm_groups", ENC(norm_groups)),
      INT_ENTRY("encoder", "max_patches", ENC(max_patches)),

      INT_ENTRY("decoder", "layers", DEC(layers)),
      INT_ENTRY("decoder", "heads", DEC(heads)),
      INT_ENTRY("decoder", "ff_dim", DEC(ff_dim)),

      DBL_ENTRY("pretrain", "peak_lr", PRE(peak_lr)),
      DBL_ENTRY("pretrain", "min_lr", PRE(min_lr)),
      DBL_ENTRY("pretrain", "warmup_epochs", PRE(warmup_epochs)),
      INT_ENTRY("pretrain", "epochs", PRE(epochs)),
      DBL_ENTRY("pretrain", "beta1", PRE(adamw.beta1)),
      DBL_ENTRY("pretrain", "beta2", PRE(adamw.beta2)),
      DBL_ENTRY("pretrain", "eps", PRE(adamw.eps)),
      DBL_ENTRY("pretrain", "weight_decay", PRE(adamw.weight_decay)),
      DBL_ENTRY("pretrain", "grad_clip", PRE(grad_clip)),
      DBL_ENTRY("pretrain", "mask_ratio", PRE(mask_ratio)),
      DBL_ENTRY("pretrain", "margin", PRE(margin)),
      INT_ENTRY("pretrain", "batch_size", PRE(batch_size)),
      U64_ENTRY("pretrain", "seed", PRE(seed)),
      U64_ENTRY("pretrain", "init_seed", c.init_seed),
      DBL_ENTRY("pretrain", "window_s", PRE(window_s)),

      Entry{"finetune", "encoders",
            [](RunConfig& c, const std::string& p, const std::string& v) {
              try {
                c.finetune->encoders = parse_encoder_subset(v);
              } catch (const ValidationError& e) {
                throw ConfigError(p, e.what());
              }
            },
            [](const RunConfig& c) {
              std::vector<std::string> names;
              for (EncoderSlot s : c.finetune->encoders) names.emplace_back(to_string(s));
              return join(names);
            }},
      Entry{"finetune", "merge",
            [](RunConfig& c, const std::string& p, const std::string& v) {
              try {
                c.finetune->merge = parse_merge_mode(trim(v));
              } catch (const ValidationError& e) {
                throw ConfigError(p, e.what());
              }
            },
            [](const RunConfig& c) { return std::string(to_string(c.finetune->merge)); }},
      INT_ENTRY("finetune", "hidden_factor", FIN(hidden_factor)),
      DBL_ENTRY("finetune", "dropout", FIN(dropout)),
      DBL_ENTRY("finetune", "lr", FIN(lr)),
      DBL_ENTRY("finetune", "min_lr", FIN(min_lr)),
      INT_ENTRY("finetune", "epochs", FIN(epochs)),
      INT_ENTRY("finetune", "batch_size", FIN(batch_size)),
      DBL_ENTRY("finetune", "label_smoothing", FIN(label_smoothing)),
      DBL_ENTRY("finetune", "weight_decay", FIN(weight_decay)),
      DBL_ENTRY("finetune", "beta1", FIN(beta1)),
      DBL_ENTRY("finetune", "beta2", FIN(beta2)),
      DBL_ENTRY("finetune", "grad_clip", FIN(grad_clip)),
      Entry{"finetune", "seeds",
            [](RunConfig& c, const std::string& p, const std::string& v) {
              c.finetune->seeds = parse_numbers<std::uint64_t>(p, v);
            },
            [](const RunConfig& c) { return join(c.finetune->seeds); }},
      BOOL_ENTRY("finetune", "freeze_encoders", FIN(freeze_encoders)),
      BOOL_ENTRY("finetune", "reset_pos_embed", FIN(reset_pos_embed)),
      DBL_ENTRY("finetune", "window_s", c.finetune_window_s),

      Entry{"synth", "states",
            [](RunConfig& c, const std::string& p, const std::string& v) {
              c.synth->states.clear();
              try {
                for (const auto& s : split_list(v)) c.synth->states.push_back(parse_state(s));
              } catch (const ValidationError& e) {
                throw ConfigError(p, e.what());
              }
              if (c.synth->states.empty()) throw ConfigError(p, "expected a non-empty list");
            },
            [](const RunConfig& c) {
              std::vector<std::string> names;
              for (BrainState s : c.synth->states) names.emplace_back(to_string(s));
              return join(names);
            }},
      Entry{"synth", "montages",
            [](RunConfig& c, const std::string& p, const std::string& v) {
              c.synth->montages.clear();
              for (const auto& m : split_list(v)) {
                if (m == "synth60") c.synth->montages.push_back(synth::full_montage());
                else if (m == "synth22") c.synth->montages.push_back(synth::montage_22());
                else throw ConfigError(p, "unknown montage '" + m + "' (synth60, synth22)");
              }
              if (c.synth->montages.empty()) throw ConfigError(p, "expected a non-empty list");
            },
            [](const RunConfig& c) {
              std::vector<std::string> names;
              for (const auto& m : c.synth->montages) names.push_back(m.dataset);
              if (names.empty()) names.push_back("synth60");
              return join(names);
            }},
      INT_ENTRY("synth", "segments_per_state", SYN(segments_per_state)),
      DBL_ENTRY("synth", "snr", SYN(snr)),
      U64_ENTRY("synth", "seed", SYN(seed)),
      DBL_ENTRY("synth", "window_s", SYN(window_s)),
      DBL_ENTRY("synth", "background_rms", SYN(background_rms)),
      DBL_ENTRY("synth", "pink_exponent", SYN(pink_exponent)),
      DBL_ENTRY("synth", "sensor_noise", SYN(sensor_noise)),
      DBL_ENTRY("synth", "train_fraction", SYN(train_fraction)),
      DBL_ENTRY("synth", "val_fraction", SYN(val_fraction)),
  };
  return entries;
}

#undef ENC
#undef DEC
#undef PRE
#undef FIN
#undef SYN
#undef INT_ENTRY
#undef DBL_ENTRY
#undef U64_ENTRY
#undef INTS_ENTRY
#undef BOOL_ENTRY

const std::vector<std::string>& section_order() {
  static const std::vector<std::string> s{"encoder", "decoder", "pretrain", "finetune", "synth"};
  return s;
}

void engage(RunConfig& c, const std::string& section) {
  if ((section == "encoder" || section == "decoder") && !c.model) c.model.emplace();
  if (section == "pretrain" && !c.pretrain) c.pretrain.emplace();
  if (section == "finetune" && !c.finetune) c.finetune.emplace();
  if (section == "synth" && !c.synth) c.synth.emplace();
}

bool engaged(const RunConfig& c, const std::string& section) {
  if (section == "encoder" || section == "decoder") return c.model.has_value();
  if (section == "pretrain") return c.pretrain.has_value();
  if (section == "finetune") return c.finetune.has_value();
  return c.synth.has_value();
}

}  // namespace

std::vector<std::string> schema_keys() {
  std::vector<std::string> out;
  for (const Entry& e : schema()) out.push_back(e.section + "." + e.key);
  return out;
}

RunConfig parse_config(const std::string& text, const std::set<std::string>& required) {
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("<file>", "line " + std::to_string(e.line()) + ": " + e.message());
  }
  std::set<std::string> known_sections(section_order().begin(), section_order().end());
  for (const auto& [name, sub] : tree) {
    if (!known_sections.count(name)) throw ConfigError(name, "unknown section");
    if (sub.empty() && !sub.data().empty()) throw ConfigError(name, "key outside any section");
  }
  for (const auto& s : required)
    if (tree.find(s) == tree.not_found()) throw ConfigError(s, "missing section");
  if ((tree.find("encoder") == tree.not_found()) != (tree.find("decoder") == tree.not_found()))
    throw ConfigError(tree.find("encoder") == tree.not_found() ? "encoder" : "decoder",
                      "missing section (encoder and decoder go together)");

  RunConfig c;
  std::set<std::string> seen;
  for (const Entry& e : schema()) {
    auto sec = tree.find(e.section);
    if (sec == tree.not_found()) continue;
    engage(c, e.section);
    const std::string path = e.section + "." + e.key;
    auto val = sec->second.find(e.key);
    if (val == sec->second.not_found()) throw ConfigError(path, "missing key");
    e.set(c, path, val->second.data());
    seen.insert(path);
  }
  for (const auto& [name, sub] : tree)
    for (const auto& [key, val] : sub)
      if (!seen.count(name + "." + key)) throw ConfigError(name + "." + key, "unknown key");

  try {
    if (c.model) c.model->validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("encoder", e.what());
  }
  try {
    if (c.finetune) c.finetune->validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("finetune", e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::set<std::string>& required) {
  std::ifstream is(path);
  if (!is) throw ConfigError("<file>", "cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), required);
}

std::string render_config(const RunConfig& config) {
  std::ostringstream os;
  std::string current;
  for (const Entry& e : schema()) {
    if (!engaged(config, e.section)) continue;
    if (e.section != current) {
      if (!current.empty()) os << '\n';
      os << '[' << e.section << "]\n";
      current = e.section;
    }
    os << e.key << " = " << e.get(config) << '\n';
  }
  return os.str();
}

RunConfig default_config() {
  RunConfig c;
  c.model.emplace();
  c.pretrain.emplace();
  c.finetune.emplace();
  c.synth.emplace();
  return c;
}

}  // namespace eegstate
