// End-to-end acceptance run. Prints one line per criterion:
//   CRITERION <n> PASS|FAIL: <detail>
// and writes the measurements to acceptance_report.json (or argv[1]).

#include "eegstate/checkpoint.hpp"
#include "eegstate/config.hpp"
#include "eegstate/gradcheck.hpp"
#include "eegstate/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace eegstate;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  json data = json::object();
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

fs::path source_dir() { return fs::path(EEGSTATE_SOURCE_DIR); }
fs::path work_dir() {
  const fs::path d = fs::temp_directory_path() / "eegstate_acceptance";
  fs::create_directories(d);
  return d;
}

// --- 1 ---------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  GradCheckOptions opts;  // C=8, T=200, d=16, float64
  const auto results = run_gradcheck(opts);
  const double elapsed = seconds_since(t0);
  std::set<std::string> groups;
  double worst = 0.0;
  std::string worst_name;
  bool all = true;
  for (const auto& r : results) {
    groups.insert(r.group);
    all = all && r.passed;
    if (r.rel_error >= worst) {
      worst = r.rel_error;
      worst_name = r.group + "/" + r.name;
    }
  }
  const bool covered = groups.count("encode") && groups.count("decode_reconstruct") &&
                       groups.count("loss_rec") && groups.count("loss_dec");
  Outcome o;
  o.pass = all && covered && worst <= 1e-4 && elapsed < 300.0;
  o.detail = std::to_string(results.size()) + " blocks, max rel error " + fmt(worst) + " (" + worst_name +
             "), " + fmt(elapsed, 3) + " s";
  o.data = {{"blocks", results.size()}, {"max_rel_error", worst}, {"seconds", elapsed},
            {"groups", std::vector<std::string>(groups.begin(), groups.end())}};
  return o;
}

// --- 2 ---------------------------------------------------------------------

Outcome gradient_routing() {
  PretrainModel model(fixture::tiny_model(), 21);
  AdamW opt;
  nn::Rng mask_rng(4);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 0.5);
  const auto map = fixture::eight_channels();
  int violations = 0;
  double min_shared = 1e300;
  std::set<int> states;
  for (int b = 0; b < 20; ++b) {
    const BrainState y = kAllStates[b % kNumStates];
    states.insert(static_cast<int>(y));
    std::vector<Segment> segs(2 + b % 3);
    Batch batch;
    for (auto& s : segs) {
      s.data = Matrix(map->num_channels(), 200);
      for (Eigen::Index k = 0; k < s.data.size(); ++k) s.data.data()[k] = n(rng);
      s.montage = map;
      s.state = y;
      s.dataset = "routing";
      batch.segments.push_back(&s);
    }
    pretrain_step(batch, model, opt, 1e-3, 3.0, 0.5, 0.1, mask_rng);
    for (BrainState s : kAllStates) {
      if (s == y) continue;
      if (fixture::param_norm(model.state_encoder(s).params(), true) != 0.0) ++violations;
      nn::ParamList dec;
      model.decoder(s).collect(dec);
      if (fixture::param_norm(dec, true) != 0.0) ++violations;
    }
    min_shared = std::min(min_shared, fixture::param_norm(model.shared.params(), true));
  }
  Outcome o;
  o.pass = violations == 0 && min_shared > 0.0 && states.size() == 3;
  o.detail = "20 batches over " + std::to_string(states.size()) + " states, " + std::to_string(violations) +
             " non-zero inactive gradients, min shared grad norm " + fmt(min_shared);
  o.data = {{"violations", violations}, {"min_shared_grad_norm", min_shared}};
  return o;
}

// --- 3 ---------------------------------------------------------------------

Outcome shape_formulas() {
  std::mt19937_64 rng(3);
  int patch_ok = 0, rows_ok = 0, width_ok = 0, width_total = 0;
  const auto map = fixture::eight_channels();
  for (int trial = 0; trial < 50; ++trial) {
    const int p = 4 + static_cast<int>(rng() % 37);
    const int s = 1 + static_cast<int>(rng() % 40);
    const int t = p + static_cast<int>(rng() % 300);
    ModelConfig mc = fixture::tiny_model();
    mc.encoder.patch_len = p;
    mc.encoder.patch_stride = s;
    mc.encoder.max_patches = 512;
    nn::Rng init(trial);
    Encoder enc(mc.encoder, "shape", init);
    const Matrix x = Matrix::Random(map->num_channels(), t);
    const Matrix z = enc.encode(x, *map);
    // count windows by enumeration
    int windows = 0;
    for (int start = 0; start + p <= t; start += s) ++windows;
    patch_ok += z.rows() == windows && num_patches(t, p, s) == (t - p) / s + 1 && z.cols() == mc.encoder.dim;

    const Matrix h_flat = flatten_temporal(enc.temporal_encode(x), map->num_channels(), t);
    const Matrix hs = assemble_spatial(enc.channel_spatial(h_flat, *map), enc.region_spatial(h_flat, *map),
                                       mc.encoder.temporal_depth());
    const auto& e = mc.encoder;
    rows_ok += hs.rows() == e.temporal_depth() * (e.channel_filters + e.region_filters) && hs.cols() == t;
  }
  // every non-empty encoder subset
  PretrainModel model(fixture::tiny_model(), 5);
  const std::vector<EncoderSlot> slots{EncoderSlot::shared, EncoderSlot::affect, EncoderSlot::motor,
                                       EncoderSlot::others};
  const Matrix x = Matrix::Random(map->num_channels(), 200);
  for (int mask = 1; mask < 16; ++mask) {
    AdaptConfig cfg;
    cfg.encoders.clear();
    for (int i = 0; i < 4; ++i)
      if (mask & (1 << i)) cfg.encoders.push_back(slots[i]);
    Classifier clf(model, cfg, 3, num_patches(200, 20, 20), 0);
    const Matrix z = clf.tokens(x, *map);
    ++width_total;
    width_ok += z.cols() == static_cast<Eigen::Index>(cfg.encoders.size()) * 16 && z.rows() == 10;
  }
  Outcome o;
  o.pass = patch_ok == 50 && rows_ok == 50 && width_ok == 15;
  o.detail = "N_p " + std::to_string(patch_ok) + "/50, H_spatial rows " + std::to_string(rows_ok) +
             "/50, Z width " + std::to_string(width_ok) + "/" + std::to_string(width_total);
  o.data = {{"patch_ok", patch_ok}, {"rows_ok", rows_ok}, {"width_ok", width_ok}};
  return o;
}

// --- 4 ---------------------------------------------------------------------

Outcome weight_schedule_check() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uw(0.0, 1.0);
  double closed = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double w = uw(rng);
    const int e = 1 + static_cast<int>(rng() % 200);
    closed = std::max(closed, std::abs(weight_schedule(w, e) - (0.5 + oracle::logistic(e * (w - 0.5)))));
  }
  bool half = true, monotone = true;
  for (int e = 1; e <= 1000; e += 37) {
    half = half && weight_schedule(0.5, e) == 1.0;
    double prev = -1.0;
    for (int k = 0; k <= 100; ++k) {
      const double v = weight_schedule(k / 100.0, e);
      monotone = monotone && v >= prev;
      prev = v;
    }
  }
  double limit = 0.0;
  for (double w : {0.0, 0.1, 0.3, 0.49}) limit = std::max(limit, std::abs(weight_schedule(w, 1000) - 0.5));
  for (double w : {0.51, 0.7, 0.9, 1.0}) limit = std::max(limit, std::abs(weight_schedule(w, 1000) - 1.5));
  Outcome o;
  o.pass = closed <= 1e-12 && half && monotone && limit <= 1e-3;
  o.detail = "closed-form max err " + fmt(closed) + ", w=0.5 -> 1 " + (half ? "yes" : "no") + ", monotone " +
             (monotone ? "yes" : "no") + ", epoch-1000 deviation " + fmt(limit);
  o.data = {{"closed_form_error", closed}, {"limit_deviation", limit}};
  return o;
}

// --- 5 ---------------------------------------------------------------------

Outcome mask_semantics() {
  nn::Rng rng(5);
  std::mt19937_64 g(5);
  int count_ok = 0;
  for (int i = 0; i < 100; ++i) {
    const int p = 5 + static_cast<int>(g() % 30), s = 1 + static_cast<int>(g() % 30);
    const int t = p + static_cast<int>(g() % 500);
    const MaskPlan plan = plan_mask(t, p, s, 0.5, rng);
    const int np = num_patches(t, p, s);
    std::set<int> unique(plan.masked_patches.begin(), plan.masked_patches.end());
    count_ok += static_cast<int>(plan.masked_patches.size()) == np / 2 &&
                unique.size() == plan.masked_patches.size();
  }
  // loss_rec ignores predictions outside the masked samples
  const Matrix x = Matrix::Random(8, 400);
  const MaskPlan plan = plan_mask(400, 20, 20, 0.5, rng);
  const IndexList times = plan.masked_times();
  std::vector<char> masked(400, 0);
  for (auto t : times) masked[t] = 1;
  const Vector w = weight_schedule(Vector::Random(8).cwiseAbs(), 3);
  Matrix x_hat = Matrix::Random(8, 400);
  const double before = loss_rec(x, x_hat, times, w).value;
  for (int t = 0; t < 400; ++t)
    if (!masked[t]) x_hat.col(t).setConstant(1e6);
  const double after = loss_rec(x, x_hat, times, w).value;
  const MaskPlan none = plan_mask(400, 20, 20, 0.0, rng);
  const double zero = loss_rec(x, Matrix::Random(8, 400), none.masked_times(), w).value;
  Outcome o;
  o.pass = count_ok == 100 && before == after && none.empty() && zero == 0.0;
  o.detail = "count " + std::to_string(count_ok) + "/100, outside-mask change " + fmt(after - before) +
             ", rho=0 loss " + fmt(zero);
  o.data = {{"count_ok", count_ok}, {"outside_delta", after - before}, {"rho0_loss", zero}};
  return o;
}

// --- 6 ---------------------------------------------------------------------

Outcome decoupling_drive() {
  PretrainModel model(fixture::tiny_model(), 6);
  const BrainState y = BrainState::affect;
  Encoder& active = model.state_encoder(y);
  // start the active encoder as a near copy of the shared one
  {
    nn::Rng r(60);
    std::normal_distribution<double> n(0.0, 1e-4);
    auto ps = model.shared.params(), pa = active.params();
    for (size_t i = 0; i < ps.size(); ++i) {
      pa[i]->value = ps[i]->value;
      for (Eigen::Index k = 0; k < pa[i]->value.size(); ++k) pa[i]->value.data()[k] += n(r);
    }
  }
  const auto map = fixture::eight_channels();
  const Matrix x = fixture::random_corpus(1, 8, 200, 66).front().data;
  std::vector<RowVector> inactive;
  for (BrainState s : kAllStates)
    if (s != y) inactive.push_back(pool_tokens(model.state_encoder(s).encode(x, *map)));

  nn::ParamList params = model.shared.params();
  active.collect(params);
  AdamW opt(AdamWConfig{0.9, 0.98, 1e-8, 0.0});
  double first_cos = 0.0, last_cos = 1.0;
  int reached = -1;
  for (int step = 1; step <= 500; ++step) {
    for (auto* p : params) p->grad.setZero();
    const Matrix zs = model.shared.encode(x, *map), za = active.encode(x, *map);
    const DecLoss l = loss_dec(pool_tokens(zs), pool_tokens(za), inactive, 0.1);
    if (step == 1) first_cos = l.cosines.front();
    last_cos = l.cosines.front();
    if (reached < 0 && last_cos <= 0.101) reached = step - 1;
    model.shared.backward(l.grad_shared.replicate(zs.rows(), 1) / static_cast<double>(zs.rows()));
    active.backward(l.grad_active.replicate(za.rows(), 1) / static_cast<double>(za.rows()));
    opt.step(params, 1e-4);
  }
  {
    const Matrix zs = model.shared.encode(x, *map), za = active.encode(x, *map);
    last_cos = cosine(pool_tokens(zs), pool_tokens(za));
    if (reached < 0 && last_cos <= 0.101) reached = 500;
  }
  Outcome o;
  o.pass = first_cos > 0.99 && reached >= 0 && reached <= 500 && last_cos <= 0.101;
  o.detail = "cos " + fmt(first_cos, 6) + " -> " + fmt(last_cos) +
             (reached >= 0 ? ", <= 0.101 after " + std::to_string(reached) + " steps" : ", threshold not reached");
  o.data = {{"initial_cos", first_cos}, {"final_cos", last_cos}, {"steps_to_threshold", reached}};
  return o;
}

// --- 7, 8 ------------------------------------------------------------------

Outcome synthetic_end_to_end(const fs::path& checkpoint) {
  const RunConfig pre = load_config(source_dir() / "configs" / "desk_pretrain.cfg",
                                    {"encoder", "decoder", "pretrain", "synth"});
  const RunConfig fine = load_config(source_dir() / "configs" / "desk_finetune.cfg", {"finetune", "synth"});
  Outcome o;

  auto t0 = Clock::now();
  const auto corpus = synth::to_segments(synth::generate_corpus(*pre.synth), pre.pretrain->window_s).all();
  PretrainModel model(*pre.model, pre.init_seed);
  Pretrainer trainer(model, *pre.pretrain, corpus);
  std::vector<double> epoch_loss;
  while (!trainer.finished()) {
    const auto recs = trainer.run_epoch();
    double sum = 0.0;
    for (const auto& r : recs) sum += r.loss.total;
    epoch_loss.push_back(sum / static_cast<double>(recs.size()));
    std::cerr << "  pretrain epoch " << epoch_loss.size() << " loss_total " << epoch_loss.back() << " ("
              << fmt(seconds_since(t0), 4) << " s)\n";
  }
  const double pretrain_s = seconds_since(t0);
  save_checkpoint(checkpoint, model, trainer.optimizer(), trainer.state(), trainer.config());
  const bool loss_ok = epoch_loss.size() >= 2 && epoch_loss.back() < 0.5 * epoch_loss.front();

  t0 = Clock::now();
  const auto split = synth::to_segments(synth::generate_corpus(*fine.synth), fine.finetune_window_s);
  AdaptConfig with_state = *fine.finetune;
  with_state.encoders = {EncoderSlot::shared, EncoderSlot::affect};
  AdaptConfig shared_only = with_state;
  shared_only.encoders = {EncoderSlot::shared};
  const auto a = finetune_loop(model, split.train, split.val, split.test, with_state);
  const auto b = finetune_loop(model, split.train, split.val, split.test, shared_only);
  const double acc = a.aggregate.at("balanced_accuracy").first;
  const double acc_shared = b.aggregate.at("balanced_accuracy").first;
  // at high SNR both subsets can saturate; a quarter of the SNR shows the margin
  synth::SynthSpec hard = *fine.synth;
  hard.snr /= 4.0;
  hard.seed += 1;
  const auto hard_split = synth::to_segments(synth::generate_corpus(hard), fine.finetune_window_s);
  const double hard_acc = finetune_loop(model, hard_split.train, hard_split.val, hard_split.test, with_state)
                              .aggregate.at("balanced_accuracy")
                              .first;
  const double hard_acc_shared =
      finetune_loop(model, hard_split.train, hard_split.val, hard_split.test, shared_only)
          .aggregate.at("balanced_accuracy")
          .first;
  const double finetune_s = seconds_since(t0);

  o.pass = corpus.size() == 600 && corpus.front().data.rows() == 60 && corpus.front().data.cols() == 2000 &&
           pre.pretrain->batch_size == 8 && epoch_loss.size() == 3 && pretrain_s <= 1800.0 && loss_ok &&
           acc >= 0.90;
  std::string losses;
  for (double l : epoch_loss) losses += (losses.empty() ? "" : ", ") + fmt(l);
  o.detail = "epoch loss_total [" + losses + "] (final/first " + fmt(epoch_loss.back() / epoch_loss.front()) +
             (loss_ok ? ", < 0.5" : ", NOT < 0.5") + "), pretrain " + fmt(pretrain_s, 4) +
             " s; balanced accuracy {shared,affect} " + fmt(acc) + ", {shared} " + fmt(acc_shared) + " (change " +
             fmt(acc_shared - acc) + "); at snr " + fmt(hard.snr) + ": " + fmt(hard_acc) + " vs " +
             fmt(hard_acc_shared) + " (change " + fmt(hard_acc_shared - hard_acc) + ")";
  o.data = {{"segments", corpus.size()},
            {"epoch_loss_total", epoch_loss},
            {"pretrain_seconds", pretrain_s},
            {"finetune_seconds", finetune_s},
            {"balanced_accuracy_shared_affect", acc},
            {"balanced_accuracy_shared", acc_shared},
            {"accuracy_change_without_state_encoder", acc_shared - acc},
            {"low_snr", hard.snr},
            {"low_snr_balanced_accuracy_shared_affect", hard_acc},
            {"low_snr_balanced_accuracy_shared", hard_acc_shared},
            {"low_snr_accuracy_change_without_state_encoder", hard_acc_shared - hard_acc}};
  return o;
}

Outcome montage_flexibility(const fs::path& checkpoint) {
  Outcome o;
  if (!fs::exists(checkpoint)) {
    o.detail = "no checkpoint from criterion 7";
    return o;
  }
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const RunConfig fine = load_config(source_dir() / "configs" / "desk_finetune.cfg", {"finetune", "synth"});
  synth::SynthSpec spec = *fine.synth;
  spec.montages = {synth::montage_22(), synth::full_montage()};
  spec.segments_per_state = 5;
  spec.seed += 1000;
  const auto split = synth::to_segments(synth::generate_corpus(spec), fine.finetune_window_s);
  AdaptConfig cfg = *fine.finetune;
  cfg.epochs = 1;
  cfg.seeds = {0};
  const int np = num_patches(split.train.front().data.cols(), ck.model->config().encoder.patch_len,
                             ck.model->config().encoder.patch_stride);
  std::map<int, std::pair<Eigen::Index, Eigen::Index>> shapes;
  std::map<int, double> accuracy;
  for (int channels : {22, 60}) {
    auto pick = [&](const std::vector<Segment>& v) {
      std::vector<Segment> out;
      for (const auto& s : v)
        if (s.data.rows() == channels) out.push_back(s);
      return out;
    };
    const auto train = pick(split.train), val = pick(split.val), test = pick(split.test);
    Classifier clf(*ck.model, cfg, 3, np, 0);
    const Matrix z = clf.tokens(train.front().data, *train.front().montage);
    shapes[channels] = {z.rows(), z.cols()};
    accuracy[channels] = finetune_seed(*ck.model, train, val, test, cfg, 0).test.at("balanced_accuracy");
  }
  o.pass = shapes[22] == shapes[60] && shapes[22].first == np;
  o.detail = "tokens 22ch " + std::to_string(shapes[22].first) + "x" + std::to_string(shapes[22].second) +
             ", 60ch " + std::to_string(shapes[60].first) + "x" + std::to_string(shapes[60].second) +
             "; one-epoch balanced accuracy 22ch " + fmt(accuracy[22]) + ", 60ch " + fmt(accuracy[60]);
  o.data = {{"tokens_22", {shapes[22].first, shapes[22].second}},
            {"tokens_60", {shapes[60].first, shapes[60].second}},
            {"accuracy_22", accuracy[22]},
            {"accuracy_60", accuracy[60]}};
  return o;
}

// --- 9 ---------------------------------------------------------------------

Outcome metrics_oracles() {
  namespace m = metrics;
  std::mt19937_64 rng(9);
  int agree = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 150);
    const int k = 2 + static_cast<int>(rng() % 4);
    std::vector<int> y(n), p(n), yb(n);
    std::vector<double> s(n);
    for (int i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() % k);
      p[i] = rng() % 2 ? y[i] : static_cast<int>(rng() % k);
      yb[i] = static_cast<int>(rng() % 2);
      s[i] = static_cast<double>(rng() % 25) / 25.0 + 0.15 * yb[i];
    }
    yb[0] = 0;
    yb[1] = 1;
    agree += m::balanced_accuracy(y, p) == oracle::balanced_accuracy(y, p) &&
             std::abs(m::cohens_kappa(y, p) - oracle::cohens_kappa(y, p)) <= 1e-12 &&
             std::abs(m::weighted_f1(y, p) - oracle::weighted_f1(y, p)) <= 1e-12 &&
             m::auroc(yb, s) == oracle::auroc(yb, s) &&
             std::abs(m::auc_pr(yb, s) - oracle::auc_pr(yb, s)) <= 1e-12;
  }
  const std::vector<int> y{0, 0, 1, 1}, p{0, 1, 1, 1};
  const std::vector<int> y6{1, 0, 1, 0, 0, 1};
  const std::vector<double> s6{0.9, 0.8, 0.7, 0.7, 0.2, 0.1};
  const bool fixtures = m::balanced_accuracy(y, p) == 0.75 && m::cohens_kappa(y, p) == 0.5 &&
                        std::abs(m::weighted_f1(y, p) - (1.0 / 3 + 0.4)) <= 1e-15 &&
                        m::auroc(y6, s6) == 4.5 / 9.0 &&
                        std::abs(m::auc_pr(y6, s6) - 2.0 / 3.0) <= 1e-15;
  Outcome o;
  o.pass = agree == 100 && fixtures;
  o.detail = std::to_string(agree) + "/100 random instances agree with the oracles, hand fixtures " +
             (fixtures ? "exact" : "differ");
  o.data = {{"agree", agree}, {"fixtures", fixtures}};
  return o;
}

// --- 10 --------------------------------------------------------------------

std::vector<double> run_steps(Pretrainer& t, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(t.step().loss.total);
  return out;
}

Outcome reproducibility() {
  const auto corpus = fixture::random_corpus(6, 8, 200, 10);
  PretrainConfig pc;
  pc.batch_size = 2;
  pc.epochs = 4;
  pc.warmup_epochs = 1;
  pc.peak_lr = 1e-3;
  pc.seed = 17;

  PretrainModel m1(fixture::tiny_model(), 3), m2(fixture::tiny_model(), 3);
  Pretrainer t1(m1, pc, corpus), t2(m2, pc, corpus);
  const auto a = run_steps(t1, 15), b = run_steps(t2, 15);
  bool same_params = true;
  auto p1 = m1.all_params(), p2 = m2.all_params();
  for (size_t i = 0; i < p1.size(); ++i) same_params = same_params && p1[i]->value == p2[i]->value;

  const fs::path path = work_dir() / "resume.ckpt";
  save_checkpoint(path, m1, t1.optimizer(), t1.state(), t1.config());
  const auto next = run_steps(t1, 10);
  LoadedCheckpoint ck = load_checkpoint(path);
  Pretrainer t3(*ck.model, ck.pretrain, corpus);
  t3.optimizer() = ck.optimizer;
  t3.state() = ck.state;
  const auto resumed = run_steps(t3, 10);
  Outcome o;
  o.pass = a == b && same_params && next == resumed;
  int matches = 0;
  for (size_t i = 0; i < next.size(); ++i) matches += next[i] == resumed[i];
  o.detail = std::string("two fixed-seed runs ") + (a == b && same_params ? "bit-identical" : "differ") +
             ", resumed " + std::to_string(matches) + "/10 step losses bit-exact";
  o.data = {{"runs_identical", a == b && same_params}, {"resume_matches", matches}};
  return o;
}

// --- 11 --------------------------------------------------------------------

Outcome preprocessing_fixtures() {
  const auto map = fixture::eight_channels();
  auto seg_with = [&](double peak) {
    Segment s;
    s.data = Matrix::Constant(8, 2000, 0.1);
    s.data(3, 700) = peak;
    s.unit = Unit::scaled;
    s.montage = map;
    return s;
  };
  const bool reject = !scale_and_reject(seg_with(10.0001)).segment && scale_and_reject(seg_with(10.0)).segment &&
                      !scale_and_reject(seg_with(-10.5)).segment &&
                      scale_and_reject(seg_with(10.5)).reason == RejectReason::amplitude;

  // three datasets x two states, uneven sizes
  std::vector<Segment> corpus;
  for (int d = 0; d < 3; ++d)
    for (BrainState s : {BrainState::affect, BrainState::motor})
      for (int i = 0; i < 3 + d; ++i) {
        Segment seg = seg_with(0.0);
        seg.dataset = "set" + std::to_string(d);
        seg.state = s;
        corpus.push_back(seg);
      }
  bool homogeneous = true;
  size_t covered = 0;
  for (const Batch& b : batch_by_dataset(corpus, 4, 11)) {
    covered += b.size();
    for (const Segment* s : b.segments)
      homogeneous = homogeneous && s->dataset == b.segments.front()->dataset &&
                    s->state == b.segments.front()->state && s->montage == b.segments.front()->montage;
  }
  homogeneous = homogeneous && covered == corpus.size();

  // 25 s at 250 Hz -> two 10 s windows of 2000 samples
  Recording rec;
  rec.rate = 250.0;
  rec.unit = Unit::scaled;
  rec.channels = {"FP1", "F3", "FZ", "C3", "CZ", "C4", "PZ", "O2"};
  rec.data = Matrix::Constant(8, 25 * 250, 0.2);
  const auto windows = segment(rec, 10.0);
  bool seg_ok = windows.size() == 2;
  for (const auto& w : windows) seg_ok = seg_ok && w.data.cols() == 2000 && w.rate == 200.0;
  rec.rate = 200.0;
  rec.data = Matrix::Constant(8, 35 * 200 - 1, 0.2);
  seg_ok = seg_ok && segment(rec, 10.0).size() == 3;

  Outcome o;
  o.pass = reject && homogeneous && seg_ok;
  o.detail = std::string("amplitude rule ") + (reject ? "ok" : "wrong") + ", batch homogeneity " +
             (homogeneous ? "ok" : "wrong") + ", 10 s / 200 Hz segmentation " + (seg_ok ? "ok" : "wrong");
  o.data = {{"reject", reject}, {"homogeneous", homogeneous}, {"segmentation", seg_ok}};
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  // usage: eegstate_acceptance [report.json] [--only=1,4,9] [--expect-fail=7]
  // --expect-fail lists known failures: they are still reported as FAIL but
  // do not change the exit status.
  fs::path report_path = "acceptance_report.json";
  std::set<int> only, expect_fail;
  auto parse_ids = [](const std::string& list, std::set<int>& out) {
    std::istringstream in(list);
    std::string id;
    while (std::getline(in, id, ',')) out.insert(std::stoi(id));
  };
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg.rfind("--only=", 0) == 0) {
      parse_ids(arg.substr(7), only);
    } else if (arg.rfind("--expect-fail=", 0) == 0) {
      parse_ids(arg.substr(14), expect_fail);
    } else {
      report_path = arg;
    }
  }
  const fs::path checkpoint = work_dir() / "desk.ckpt";
  std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, gradient_suite},
      {2, gradient_routing},
      {3, shape_formulas},
      {4, weight_schedule_check},
      {5, mask_semantics},
      {6, decoupling_drive},
      {7, [&] { return synthetic_end_to_end(checkpoint); }},
      {8, [&] { return montage_flexibility(checkpoint); }},
      {9, metrics_oracles},
      {10, reproducibility},
      {11, preprocessing_fixtures},
  };
  json report = json::object();
  int failures = 0, passed = 0, run_count = 0;
  std::vector<int> failed_ids;
  for (auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    ++run_count;
    passed += o.pass;
    if (!o.pass) failed_ids.push_back(id);
    failures += !o.pass && !expect_fail.count(id);
    std::cout << "CRITERION " << id << " " << (o.pass ? "PASS" : "FAIL") << ": " << o.detail << std::endl;
    o.data["pass"] = o.pass;
    o.data["detail"] = o.detail;
    o.data["seconds"] = seconds_since(t0);
    report[std::to_string(id)] = o.data;
  }
  std::ofstream(report_path) << report.dump(2) << "\n";
  std::cout << "SUMMARY " << passed << "/" << run_count << " PASS";
  if (!failed_ids.empty()) {
    std::cout << "; FAIL:";
    for (int id : failed_ids) std::cout << " " << id << (expect_fail.count(id) ? " (known)" : "");
  }
  std::cout << std::endl;
  return failures == 0 ? 0 : 1;
}
