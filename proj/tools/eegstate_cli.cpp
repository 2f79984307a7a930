// eegstate command-line entry points. One command per process; every report
// line on stdout is a JSON object.
#include "eegstate/checkpoint.hpp"
#include "eegstate/config.hpp"
#include "eegstate/gradcheck.hpp"
#include "eegstate/metrics.hpp"
#include "eegstate/recording_io.hpp"
#include "eegstate/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eegstate;

namespace {

enum Exit : int { kOk = 0, kRuntime = 1, kConfig = 2, kAcceptance = 3 };

// Paths only: flag value first, then the environment variable.
std::string path_or_env(const std::string& flag, const char* env) {
  if (!flag.empty()) return flag;
  if (const char* v = std::getenv(env)) return v;
  return {};
}

std::string require_path(const std::string& flag, const char* env, const std::string& what) {
  std::string p = path_or_env(flag, env);
  if (p.empty()) throw ConfigError(what, std::string("no path given (flag or ") + env + ")");
  return p;
}

void emit(const json& j) { std::cout << j.dump() << "\n" << std::flush; }

// Reproducibility record; also written next to `out` when given.
void run_record(const std::string& command, const RunConfig& cfg, const std::string& out,
                json extra = json::object()) {
  json r = {{"event", "run"}, {"command", command}, {"version", std::string(version())}};
  if (cfg.model) r["config_hash"] = hex64(config_hash(*cfg.model));
  json seeds = json::object();
  seeds["init_seed"] = cfg.init_seed;
  if (cfg.pretrain) seeds["pretrain"] = cfg.pretrain->seed;
  if (cfg.finetune) seeds["finetune"] = cfg.finetune->seeds;
  if (cfg.synth) seeds["synth"] = cfg.synth->seed;
  r["seeds"] = seeds;
  r["config"] = render_config(cfg);
  for (auto& [k, v] : extra.items()) r[k] = v;
  emit(r);
  if (!out.empty()) {
    std::ofstream f(out + ".run.json");
    f << r.dump(2) << "\n";
  }
}

std::vector<Segment> with_split(const LoadedCorpus& c, const std::string& split) {
  std::vector<Segment> out;
  for (size_t i = 0; i < c.segments.size(); ++i)
    if (c.splits[i] == split) out.push_back(c.segments[i]);
  return out;
}

// --- synth ---------------------------------------------------------------

int cmd_synth(const std::string& config_path, const std::string& out_flag) {
  const RunConfig cfg = load_config(config_path, {"synth"});
  const std::string out = require_path(out_flag, "EEGSTATE_OUT", "synth.out");
  run_record("synth", cfg, (fs::path(out) / "synth").string());
  const auto items = synth::generate_corpus(*cfg.synth);
  synth::write_corpus(out, items);
  emit({{"event", "synth"}, {"segments", items.size()}, {"dir", out}});
  return kOk;
}

// --- pretrain ------------------------------------------------------------

int cmd_pretrain(const std::string& config_path, const std::string& data_flag,
                 const std::string& out_flag, const std::string& resume) {
  const RunConfig cfg = load_config(config_path, {"encoder", "decoder", "pretrain"});
  const std::string data = require_path(data_flag, "EEGSTATE_DATA", "pretrain.data");
  const std::string out = require_path(out_flag, "EEGSTATE_CHECKPOINT", "pretrain.out");
  run_record("pretrain", cfg, out, {{"data", data}, {"resume", resume}});

  LoadedCorpus corpus = load_corpus(data, cfg.pretrain->window_s);
  emit({{"event", "corpus"}, {"segments", corpus.segments.size()},
        {"rejected_amplitude", corpus.rejected_amplitude},
        {"rejected_non_finite", corpus.rejected_non_finite}});

  std::unique_ptr<PretrainModel> model;
  std::optional<LoadedCheckpoint> ckpt;
  if (!resume.empty()) {
    ckpt = load_checkpoint(resume, &*cfg.model);
    model = std::move(ckpt->model);
  } else {
    model = std::make_unique<PretrainModel>(*cfg.model, cfg.init_seed);
  }
  Pretrainer trainer(*model, *cfg.pretrain, corpus.segments);
  if (ckpt) {
    trainer.optimizer() = ckpt->optimizer;
    trainer.state() = ckpt->state;
  }
  trainer.set_log(&std::cout);
  while (!trainer.finished()) {
    const int epoch = trainer.state().epoch;
    const auto records = trainer.run_epoch();
    double total = 0, rec = 0, dec = 0;
    for (const auto& r : records) {
      total += r.loss.total;
      rec += r.loss.rec;
      dec += r.loss.dec;
    }
    const double n = std::max<size_t>(records.size(), 1);
    save_checkpoint(out, *model, trainer.optimizer(), trainer.state(), trainer.config());
    emit({{"event", "epoch"}, {"epoch", epoch}, {"steps", records.size()}, {"loss_total", total / n},
          {"loss_rec", rec / n}, {"loss_dec", dec / n}, {"checkpoint", out}});
  }
  return kOk;
}

// --- finetune ------------------------------------------------------------

int cmd_finetune(const std::string& config_path, const std::string& ckpt_flag,
                 const std::string& data_flag, const std::string& report_path) {
  const RunConfig cfg = load_config(config_path, {"finetune"});
  const std::string ckpt_path = require_path(ckpt_flag, "EEGSTATE_CHECKPOINT", "finetune.checkpoint");
  const std::string data = require_path(data_flag, "EEGSTATE_DATA", "finetune.data");
  LoadedCheckpoint ckpt = load_checkpoint(ckpt_path, cfg.model ? &*cfg.model : nullptr);
  RunConfig record_cfg = cfg;
  record_cfg.model = ckpt.model->config();
  record_cfg.init_seed = ckpt.model->init_seed();
  run_record("finetune", record_cfg, report_path, {{"checkpoint", ckpt_path}, {"data", data}});

  LoadedCorpus corpus = load_corpus(data, cfg.finetune_window_s);
  const auto train = with_split(corpus, "train"), val = with_split(corpus, "val"),
             test = with_split(corpus, "test");
  const FinetuneReport report = finetune_loop(*ckpt.model, train, val, test, *cfg.finetune, &std::cout);
  json agg = json::object();
  for (const auto& [k, v] : report.aggregate) agg[k] = {{"mean", v.first}, {"std", v.second}};
  json out = {{"event", "finetune_report"}, {"aggregate", agg}, {"seeds", json::array()}};
  for (const auto& r : report.runs)
    out["seeds"].push_back({{"seed", r.seed}, {"best_epoch", r.best_epoch}, {"best_val", r.best_val},
                            {"test", r.test}});
  emit(out);
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    f << out.dump(2) << "\n";
    // predictions of the first seed, in the format `eval` reads
    if (!report.runs.empty()) {
      std::ofstream p(report_path + ".predictions.tsv");
      const SeedResult& r = report.runs.front();
      p << "y_true\ty_pred";
      for (Eigen::Index k = 0; k < r.probabilities.cols(); ++k) p << "\tp" << k;
      p << "\n";
      p.precision(17);
      for (size_t i = 0; i < r.y_true.size(); ++i) {
        p << r.y_true[i] << "\t" << r.y_pred[i];
        for (Eigen::Index k = 0; k < r.probabilities.cols(); ++k) p << "\t" << r.probabilities(i, k);
        p << "\n";
      }
    }
  }
  return kOk;
}

// --- eval ----------------------------------------------------------------

// TSV with header: y_true, y_pred and optional probability columns p0..pK.
// For two classes the p1 column is the positive score.
int cmd_eval(const std::string& predictions) {
  std::ifstream in(predictions);
  if (!in) throw std::runtime_error("cannot open " + predictions);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    std::string col;
    while (std::getline(h, col, '\t')) header.push_back(col);
  }
  if (header.size() < 2 || header[0] != "y_true" || header[1] != "y_pred")
    throw ValidationError("predictions: header must start with y_true, y_pred");
  int p1 = -1;
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == "p1") p1 = static_cast<int>(i);
  std::vector<int> y_true, y_pred;
  std::vector<double> score;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream r(line);
    std::vector<std::string> f;
    std::string v;
    while (std::getline(r, v, '\t')) f.push_back(v);
    if (f.size() != header.size()) throw ValidationError("predictions: ragged row");
    y_true.push_back(std::stoi(f[0]));
    y_pred.push_back(std::stoi(f[1]));
    if (p1 >= 0) score.push_back(std::stod(f[p1]));
  }
  const bool binary = header.size() == 4 && p1 >= 0;
  emit({{"event", "eval"}, {"n", y_true.size()},
        {"metrics", metrics::evaluate(y_true, y_pred, binary ? score : std::vector<double>{})}});
  return kOk;
}

// --- gradcheck -----------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed) {
  GradCheckOptions opts;
  opts.seed = seed;
  RunConfig cfg;
  cfg.model = gradcheck_model_config(opts);
  cfg.init_seed = seed;
  run_record("gradcheck", cfg, "");
  int failed = 0;
  double worst = 0.0;
  for (const auto& r : run_gradcheck(opts)) {
    emit({{"event", "gradcheck"}, {"group", r.group}, {"name", r.name}, {"entries", r.entries},
          {"rel_error", r.rel_error}, {"analytic_norm", r.analytic_norm}, {"passed", r.passed}});
    failed += !r.passed;
    worst = std::max(worst, r.rel_error);
  }
  emit({{"event", "gradcheck_summary"}, {"failed", failed}, {"worst_rel_error", worst},
        {"tolerance", opts.tolerance}});
  return failed == 0 ? kOk : kAcceptance;
}

// --- export-filters ------------------------------------------------------

struct Rgb {
  unsigned char r, g, b;
};

// blue - white - red for v in [-1, 1]
Rgb diverging(double v) {
  v = std::clamp(v, -1.0, 1.0);
  const auto ch = [](double x) { return static_cast<unsigned char>(std::lround(255.0 * x)); };
  if (v >= 0) return {255, ch(1.0 - v), ch(1.0 - v)};
  return {ch(1.0 + v), ch(1.0 + v), 255};
}

// Azimuthal equidistant projection of the upper sphere onto the unit disc.
Eigen::RowVector2d project(const Eigen::RowVector3d& p) {
  const double polar = std::acos(std::clamp(p.z(), -1.0, 1.0));
  const double r = polar / (std::numbers::pi / 2.0) * 0.85;
  const double az = std::atan2(p.y(), p.x());
  return {r * std::cos(az), r * std::sin(az)};
}

// One tile per channel filter, inverse-distance interpolated between sites.
void write_topography(const fs::path& path, const Matrix& bank, const UniversalTemplate& tmpl) {
  constexpr int tile = 48, cols = 8;
  const int filters = static_cast<int>(bank.cols());
  const int rows = (filters + cols - 1) / cols;
  const int width = cols * tile, height = rows * tile;
  std::vector<Rgb> img(static_cast<size_t>(width) * height, Rgb{255, 255, 255});
  std::vector<Eigen::RowVector2d> sites;
  for (int c = 0; c < tmpl.num_channels(); ++c) sites.push_back(project(tmpl.coords().row(c)));
  for (int f = 0; f < filters; ++f) {
    const double scale = std::max(bank.col(f).cwiseAbs().maxCoeff(), 1e-12);
    const int ox = (f % cols) * tile, oy = (f / cols) * tile;
    for (int py = 0; py < tile; ++py)
      for (int px = 0; px < tile; ++px) {
        // x to the right, nasion (+y) up
        const Eigen::RowVector2d q{-1.0 + 2.0 * (px + 0.5) / tile, 1.0 - 2.0 * (py + 0.5) / tile};
        if (q.norm() > 1.0) continue;
        double num = 0, den = 0;
        for (int c = 0; c < tmpl.num_channels(); ++c) {
          const double w = 1.0 / (1e-6 + (sites[c] - q).squaredNorm());
          num += w * bank(c, f);
          den += w;
        }
        img[static_cast<size_t>(oy + py) * width + ox + px] = diverging(num / den / scale);
      }
  }
  std::ofstream out(path, std::ios::binary);
  out << "P6\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size() * 3));
}

int cmd_export_filters(const std::string& ckpt_flag, const std::string& out_flag, bool image) {
  const std::string ckpt_path = require_path(ckpt_flag, "EEGSTATE_CHECKPOINT", "export.checkpoint");
  const std::string out = require_path(out_flag, "EEGSTATE_OUT", "export.out");
  LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig cfg;
  cfg.model = ckpt.model->config();
  cfg.init_seed = ckpt.model->init_seed();
  fs::create_directories(out);
  run_record("export-filters", cfg, (fs::path(out) / "export").string(), {{"checkpoint", ckpt_path}});
  const UniversalTemplate& tmpl = UniversalTemplate::builtin();
  std::vector<const Encoder*> encoders{&ckpt.model->shared};
  for (const auto& e : ckpt.model->state_encoders) encoders.push_back(&e);
  for (const Encoder* enc : encoders) {
    const fs::path table = fs::path(out) / (enc->name() + "_filters.tsv");
    std::ofstream f(table);
    f.precision(17);
    f << "bank\tsite\tfilter\tweight\n";
    long rows = 0;
    const Matrix& wc = enc->channel_bank.value;
    for (int c = 0; c < wc.rows(); ++c)
      for (int k = 0; k < wc.cols(); ++k, ++rows)
        f << "channel\t" << tmpl.channel_names()[c] << "\t" << k << "\t" << wc(c, k) << "\n";
    const Matrix& wr = enc->region_bank.value;
    for (int r = 0; r < wr.rows(); ++r)
      for (int k = 0; k < wr.cols(); ++k, ++rows)
        f << "region\t" << tmpl.region_names()[r] << "\t" << k << "\t" << wr(r, k) << "\n";
    json line = {{"event", "export"}, {"encoder", enc->name()}, {"table", table.string()}, {"rows", rows}};
    if (image) {
      const fs::path ppm = fs::path(out) / (enc->name() + "_channel_topography.ppm");
      write_topography(ppm, wc, tmpl);
      line["image"] = ppm.string();
    }
    emit(line);
  }
  return kOk;
}

// --- print-config --------------------------------------------------------

int cmd_print_config(const std::string& config_path) {
  const RunConfig cfg = config_path.empty() ? default_config() : load_config(config_path);
  std::cout << render_config(cfg);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eegstate: state-aware EEG pre-training and adaptation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));

  std::string config, data, out, ckpt, resume, report, predictions;
  std::uint64_t seed = 0;
  bool image = false;

  auto* synth_cmd = app.add_subcommand("synth", "generate a labelled synthetic corpus");
  synth_cmd->add_option("-c,--config", config, "config file with a [synth] section")->required();
  synth_cmd->add_option("-o,--out", out, "output directory (env EEGSTATE_OUT)");

  auto* pre = app.add_subcommand("pretrain", "state-aware masked pre-training");
  pre->add_option("-c,--config", config, "config with [encoder] [decoder] [pretrain]")->required();
  pre->add_option("-d,--data", data, "corpus manifest.tsv (env EEGSTATE_DATA)");
  pre->add_option("-o,--out", out, "checkpoint path (env EEGSTATE_CHECKPOINT)");
  pre->add_option("--resume", resume, "checkpoint to resume from");

  auto* fine = app.add_subcommand("finetune", "adapt pre-trained encoders to a labelled task");
  fine->add_option("-c,--config", config, "config with a [finetune] section")->required();
  fine->add_option("-k,--checkpoint", ckpt, "pre-trained checkpoint (env EEGSTATE_CHECKPOINT)");
  fine->add_option("-d,--data", data, "labelled manifest.tsv with splits (env EEGSTATE_DATA)");
  fine->add_option("-r,--report", report, "write the JSON report here");

  auto* eval = app.add_subcommand("eval", "recompute metrics from a predictions file");
  eval->add_option("-p,--predictions", predictions, "TSV: y_true y_pred [p0 p1 ...]")->required();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grad->add_option("--seed", seed, "seed for the model and inputs");

  auto* exp = app.add_subcommand("export-filters", "write spatial filter tables");
  exp->add_option("-k,--checkpoint", ckpt, "checkpoint (env EEGSTATE_CHECKPOINT)");
  exp->add_option("-o,--out", out, "output directory (env EEGSTATE_OUT)");
  exp->add_flag("--image", image, "also render channel-filter topographies (PPM)");

  auto* print = app.add_subcommand("print-config", "print a config (defaults when none given)");
  print->add_option("-c,--config", config, "config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*synth_cmd) return cmd_synth(config, out);
    if (*pre) return cmd_pretrain(config, data, out, resume);
    if (*fine) return cmd_finetune(config, ckpt, data, report);
    if (*eval) return cmd_eval(predictions);
    if (*grad) return cmd_gradcheck(seed);
    if (*exp) return cmd_export_filters(ckpt, out, image);
    if (*print) return cmd_print_config(config);
  } catch (const ConfigError& e) {
    emit({{"event", "error"}, {"class", "config"}, {"key", e.key()}, {"message", e.what()}});
    return kConfig;
  } catch (const std::exception& e) {
    emit({{"event", "error"}, {"class", "runtime"}, {"message", e.what()}});
    return kRuntime;
  }
  return kRuntime;
}
