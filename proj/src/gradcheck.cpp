#include "eegstate/gradcheck.hpp"

#include "eegstate/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace eegstate {
namespace {

const std::vector<std::string> kChannels = {"CZ", "FP1", "O2", "T7", "P3", "F4", "C4", "PZ",
                                            "FC5", "CP2", "AF3", "PO8"};

Matrix random_matrix(Eigen::Index r, Eigen::Index c, nn::Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

class Checker {
 public:
  Checker(const GradCheckOptions& opts, nn::Rng& rng) : opts_(opts), rng_(rng) {}

  /// Perturbs sampled coordinates of `value` and compares with `analytic`.
  void check(const std::string& group, const std::string& name, Matrix& value, const Matrix& analytic,
             const std::function<double()>& f) {
    const Eigen::Index n = value.size();
    std::vector<Eigen::Index> idx;
    if (n <= opts_.entries_per_block) {
      for (Eigen::Index i = 0; i < n; ++i) idx.push_back(i);
    } else {
      // the largest-gradient coordinate plus uniform samples
      Eigen::Index arg = 0;
      analytic.cwiseAbs().reshaped<Eigen::RowMajor>().maxCoeff(&arg);
      idx.push_back(arg);
      std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
      while (static_cast<int>(idx.size()) < opts_.entries_per_block) idx.push_back(pick(rng_));
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (Eigen::Index i : idx) {
      double& v = value.data()[i];
      const double saved = v;
      const double h = opts_.step;
      auto at = [&](double delta) {
        v = saved + delta;
        return f();
      };
      // fourth-order central stencil
      const double num = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      v = saved;
      const double ana = analytic.data()[i];
      diff2 += (num - ana) * (num - ana);
      a2 += ana * ana;
      n2 += num * num;
    }
    GradCheckResult r;
    r.group = group;
    r.name = name;
    r.entries = static_cast<int>(idx.size());
    r.analytic_norm = std::sqrt(a2);
    const double scale = std::max(std::sqrt(a2), std::sqrt(n2));
    r.rel_error = scale < 1e-10 ? 0.0 : std::sqrt(diff2) / scale;
    r.passed = r.rel_error <= opts_.tolerance;
    results.push_back(r);
  }

  std::vector<GradCheckResult> results;

 private:
  const GradCheckOptions& opts_;
  nn::Rng& rng_;
};

std::map<std::string, Matrix> snapshot_grads(const nn::ParamList& params) {
  std::map<std::string, Matrix> out;
  for (nn::Param* p : params) out[p->name] = p->grad;
  return out;
}

}  // namespace

ModelConfig gradcheck_model_config(const GradCheckOptions& opts) {
  ModelConfig c;
  c.encoder.conv_in = {1, 4, 4};
  c.encoder.conv_out = {4, 4, 4};
  c.encoder.conv_kernel = {15, 3, 3};
  c.encoder.conv_stride = {1, 1, 1};
  c.encoder.conv_padding = {7, 1, 1};
  c.encoder.channel_filters = 4;
  c.encoder.region_filters = 4;
  c.encoder.patch_len = 20;
  c.encoder.patch_stride = 20;
  c.encoder.dim = opts.dim;
  c.encoder.layers = 2;
  c.encoder.heads = 4;
  c.encoder.ff_dim = 2 * opts.dim;
  c.encoder.norm_groups = 2;
  c.encoder.max_patches = 64;
  c.decoder.layers = 2;
  c.decoder.heads = 4;
  c.decoder.ff_dim = 2 * opts.dim;
  return c;
}

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& opts) {
  if (opts.channels < 1 || opts.channels > static_cast<int>(kChannels.size()))
    throw ValidationError("gradcheck: channels must be in [1, 12]");
  nn::Rng rng(opts.seed);
  Checker chk(opts, rng);
  const ModelConfig cfg = gradcheck_model_config(opts);
  const std::vector<std::string> names(kChannels.begin(), kChannels.begin() + opts.channels);
  const MontageMap map = resolve_montage(names);
  const int c = opts.channels, t = opts.length;
  const int np = num_patches(t, cfg.encoder.patch_len, cfg.encoder.patch_stride);

  // encode: f = <R, encode(X)>
  {
    Encoder enc(cfg.encoder, "enc", rng);
    Matrix x = random_matrix(c, t, rng);
    const Matrix r = random_matrix(np, cfg.encoder.dim, rng);
    auto f = [&] { return enc.encode(x, map).cwiseProduct(r).sum(); };
    enc.encode(x, map);
    const Matrix dx = enc.backward(r);
    const auto grads = snapshot_grads(enc.params());
    for (nn::Param* p : enc.params()) chk.check("encode", p->name, p->value, grads.at(p->name), f);
    chk.check("encode", "input X", x, dx, f);
  }

  // decode_reconstruct: f = <R, D(Z_state, Z_shared)>
  {
    Decoder dec(cfg.encoder, cfg.decoder, "dec", rng);
    Matrix zs = random_matrix(np, cfg.encoder.dim, rng), zsh = random_matrix(np, cfg.encoder.dim, rng);
    // the output head starts near zero; scale it up so every path carries signal
    dec.head.weight.value *= 20.0;
    const Matrix r = random_matrix(c, t, rng);
    auto f = [&] { return dec.forward(zs, zsh, map, t).cwiseProduct(r).sum(); };
    dec.forward(zs, zsh, map, t);
    auto [d_state, d_shared] = dec.backward(r);
    const auto grads = snapshot_grads(dec.params());
    for (nn::Param* p : dec.params()) chk.check("decode_reconstruct", p->name, p->value, grads.at(p->name), f);
    chk.check("decode_reconstruct", "Z_state", zs, d_state, f);
    chk.check("decode_reconstruct", "Z_shared", zsh, d_shared, f);
  }

  // loss_rec over X_hat
  {
    const Matrix x = random_matrix(c, t, rng);
    Matrix x_hat = random_matrix(c, t, rng);
    const MaskPlan plan = plan_mask(t, cfg.encoder.patch_len, cfg.encoder.patch_stride, 0.5, rng);
    const Vector w = weight_schedule(state_prior(BrainState::motor, map), 3);
    auto f = [&] { return loss_rec(x, x_hat, plan.masked_times(), w).value; };
    const RecLoss l = loss_rec(x, x_hat, plan.masked_times(), w);
    GradCheckOptions dense = opts;
    dense.entries_per_block = static_cast<int>(x_hat.size());
    Checker all(dense, rng);
    all.check("loss_rec", "X_hat", x_hat, l.grad, f);
    chk.results.insert(chk.results.end(), all.results.begin(), all.results.end());
  }

  // loss_dec over the pooled shared / active vectors, every hinge active
  {
    const int d = cfg.encoder.dim;
    const RowVector base = random_matrix(1, d, rng).row(0);
    Matrix shared = (base + 0.3 * random_matrix(1, d, rng).row(0));
    Matrix active = (base + 0.3 * random_matrix(1, d, rng).row(0));
    const std::vector<RowVector> inactive = {base + 0.5 * random_matrix(1, d, rng).row(0),
                                             base + 0.5 * random_matrix(1, d, rng).row(0)};
    auto f = [&] { return loss_dec(shared.row(0), active.row(0), inactive, 0.1).value; };
    const DecLoss l = loss_dec(shared.row(0), active.row(0), inactive, 0.1);
    chk.check("loss_dec", "pooled shared", shared, Matrix(l.grad_shared), f);
    chk.check("loss_dec", "pooled active", active, Matrix(l.grad_active), f);
  }

  // loss_total through masking, fusion, both losses and the weight schedule
  {
    PretrainModel model(cfg, opts.seed + 1);
    for (auto& dcd : model.decoders) dcd.head.weight.value *= 20.0;
    const Matrix x = random_matrix(c, t, rng);
    const MaskPlan plan = plan_mask(t, cfg.encoder.patch_len, cfg.encoder.patch_stride, 0.5, rng);
    const BrainState y = BrainState::affect;
    const int epoch = 3;
    model.zero_grad();
    // inactive encoders are detached: hold their pooled outputs fixed
    const std::vector<RowVector> inactive = segment_loss(model, x, map, y, plan, epoch, 0.1, 1.0).inactive_pooled;
    auto f = [&] { return segment_loss_detached(model, x, map, y, plan, epoch, 0.1, inactive).total; };
    const auto grads = snapshot_grads(model.trainable_for(y));
    for (nn::Param* p : model.trainable_for(y)) chk.check("loss_total", p->name, p->value, grads.at(p->name), f);
  }

  // classifier: cross-entropy through head, aggr5 merge and the encoders
  {
    PretrainModel model(cfg, opts.seed + 2);
    AdaptConfig ac;
    ac.encoders = {EncoderSlot::shared, EncoderSlot::motor};
    ac.merge = MergeMode::aggr5;
    ac.hidden_factor = 2;
    ac.dropout = 0.0;
    Classifier clf(model, ac, 3, np, opts.seed + 3);
    const Matrix x = random_matrix(c, t, rng);
    const std::vector<int> label{1};
    auto f = [&] { return cross_entropy(Matrix(clf.forward(x, map, false)), label, 0.1).value; };
    clf.zero_grad();
    const CrossEntropy ce = cross_entropy(Matrix(clf.forward(x, map, false)), label, 0.1);
    clf.backward(ce.grad.row(0));
    const auto grads = snapshot_grads(clf.all_params());
    for (nn::Param* p : clf.all_params()) chk.check("classifier", p->name, p->value, grads.at(p->name), f);
  }
  return chk.results;
}

}  // namespace eegstate
