#include "eegstate/finetune.hpp"

#include "eegstate/checkpoint.hpp"
#include "eegstate/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

namespace eegstate {

std::string_view to_string(EncoderSlot s) {
  switch (s) {
    case EncoderSlot::shared:
      return "shared";
    case EncoderSlot::affect:
      return "affect";
    case EncoderSlot::motor:
      return "motor";
    case EncoderSlot::others:
      return "others";
  }
  return "shared";
}

EncoderSlot parse_encoder_slot(std::string_view name) {
  if (name == "shared") return EncoderSlot::shared;
  return static_cast<EncoderSlot>(static_cast<int>(parse_state(name)) + 1);
}

std::vector<EncoderSlot> parse_encoder_subset(std::string_view list) {
  std::set<EncoderSlot> slots;
  size_t start = 0;
  while (start <= list.size()) {
    size_t end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    std::string_view tok = list.substr(start, end - start);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    if (!tok.empty()) slots.insert(parse_encoder_slot(tok));
    start = end + 1;
  }
  if (slots.empty()) throw ValidationError("encoder subset is empty");
  return {slots.begin(), slots.end()};
}

std::string_view to_string(MergeMode m) {
  switch (m) {
    case MergeMode::mean:
      return "mean";
    case MergeMode::aggr5:
      return "aggr5";
    case MergeMode::all:
      return "all";
  }
  return "mean";
}

MergeMode parse_merge_mode(std::string_view name) {
  if (name == "mean") return MergeMode::mean;
  if (name == "aggr5") return MergeMode::aggr5;
  if (name == "all") return MergeMode::all;
  throw ValidationError("unknown merge mode '" + std::string(name) + "' (mean, aggr5, all)");
}

void AdaptConfig::validate() const {
  if (encoders.empty()) throw ValidationError("finetune: encoder subset is empty");
  if (!std::is_sorted(encoders.begin(), encoders.end()) ||
      std::adjacent_find(encoders.begin(), encoders.end()) != encoders.end())
    throw ValidationError("finetune: encoder subset must be canonical and unique");
  if (hidden_factor < 1) throw ValidationError("finetune: hidden_factor must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("finetune: dropout must be in [0, 1)");
  if (epochs < 1) throw ValidationError("finetune: epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("finetune: batch_size must be >= 1");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ValidationError("finetune: label_smoothing must be in [0, 1)");
  if (!(lr > 0.0) || min_lr < 0.0 || min_lr > lr) throw ValidationError("finetune: need 0 <= min_lr <= lr");
  if (seeds.empty()) throw ValidationError("finetune: no seeds");
}

Matrix select_and_concat(const std::vector<std::pair<EncoderSlot, Matrix>>& outputs,
                         const std::vector<EncoderSlot>& subset) {
  if (subset.empty()) throw ValidationError("select_and_concat: empty encoder subset");
  std::set<EncoderSlot> wanted(subset.begin(), subset.end());
  std::map<EncoderSlot, const Matrix*> by_slot;
  for (const auto& [slot, z] : outputs)
    if (wanted.count(slot)) by_slot[slot] = &z;
  if (by_slot.size() != wanted.size()) throw ValidationError("select_and_concat: a selected encoder has no output");
  const Eigen::Index rows = by_slot.begin()->second->rows();
  Eigen::Index width = 0;
  for (const auto& [slot, z] : by_slot) {
    if (z->rows() != rows) throw ShapeError("select_and_concat: token counts differ");
    width += z->cols();
  }
  Matrix out(rows, width);
  Eigen::Index col = 0;
  for (const auto& [slot, z] : by_slot) {  // std::map iterates in canonical order
    out.middleCols(col, z->cols()) = *z;
    col += z->cols();
  }
  return out;
}

int merged_rows(int n_tokens, MergeMode mode) {
  switch (mode) {
    case MergeMode::mean:
      return 1;
    case MergeMode::aggr5:
      return (n_tokens + 4) / 5;
    case MergeMode::all:
      return n_tokens;
  }
  return n_tokens;
}

Matrix merge_tokens(const Matrix& z, MergeMode mode) {
  const int n = static_cast<int>(z.rows());
  if (n < 1) throw ShapeError("merge_tokens: no tokens");
  if (mode == MergeMode::all) return z;
  if (mode == MergeMode::mean) return z.colwise().mean();
  Matrix out(merged_rows(n, mode), z.cols());
  for (int g = 0; g < out.rows(); ++g) {
    const int start = 5 * g, count = std::min(5, n - start);
    out.row(g) = z.middleRows(start, count).colwise().mean();
  }
  return out;
}

Matrix merge_tokens_backward(const Matrix& d, int n, MergeMode mode) {
  if (d.rows() != merged_rows(n, mode)) throw ShapeError("merge_tokens_backward: row count mismatch");
  if (mode == MergeMode::all) return d;
  Matrix out(n, d.cols());
  if (mode == MergeMode::mean) {
    out.rowwise() = d.row(0) / static_cast<double>(n);
    return out;
  }
  for (int g = 0; g < d.rows(); ++g) {
    const int start = 5 * g, count = std::min(5, n - start);
    for (int i = 0; i < count; ++i) out.row(start + i) = d.row(g) / static_cast<double>(count);
  }
  return out;
}

double reset_temporal_pos_embed(Encoder& encoder, nn::Rng& rng) {
  Matrix& pe = encoder.pos_embed.value;
  const double a = std::sqrt(6.0 / static_cast<double>(pe.rows() + pe.cols()));
  nn::init_uniform(pe, a, rng);
  return a;
}

ClassifierHead::ClassifierHead(int in, int hidden_factor, int classes, double p, nn::Rng& rng)
    : fc1("head.fc1", in, hidden_factor * in, rng), fc2("head.fc2", hidden_factor * in, classes, rng), dropout(p) {}

Matrix ClassifierHead::forward(const Matrix& x, bool training, nn::Rng* rng) {
  if (x.cols() != in_features())
    throw ShapeError("classifier head expects width " + std::to_string(in_features()) + ", got " +
                     std::to_string(x.cols()));
  pre_ = fc1.forward(x);
  Matrix h = nn::gelu(pre_);
  keep_ = Matrix::Ones(h.rows(), h.cols());
  if (training && dropout > 0.0) {
    if (!rng) throw ValidationError("classifier head: dropout needs an RNG");
    std::bernoulli_distribution drop(dropout);
    const double scale = 1.0 / (1.0 - dropout);
    for (Eigen::Index i = 0; i < keep_.size(); ++i) keep_.data()[i] = drop(*rng) ? 0.0 : scale;
    h = h.cwiseProduct(keep_);
  }
  return fc2.forward(h);
}

Matrix ClassifierHead::backward(const Matrix& d_logits) {
  Matrix dh = fc2.backward(d_logits).cwiseProduct(keep_);
  for (Eigen::Index i = 0; i < dh.size(); ++i) dh.data()[i] *= nn::gelu_grad(pre_.data()[i]);
  return fc1.backward(dh);
}

void ClassifierHead::collect(nn::ParamList& out) {
  fc1.collect(out);
  fc2.collect(out);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const RowVector e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

CrossEntropy cross_entropy(const Matrix& logits, const std::vector<int>& labels, double smoothing) {
  if (static_cast<size_t>(logits.rows()) != labels.size()) throw ShapeError("cross_entropy: label count");
  const auto k = logits.cols();
  CrossEntropy out;
  const Matrix p = softmax_rows(logits);
  out.grad = p;
  const double b = static_cast<double>(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= k) throw ValidationError("cross_entropy: label out of range");
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    for (Eigen::Index c = 0; c < k; ++c) {
      const double q = smoothing / k + (c == y ? 1.0 - smoothing : 0.0);
      out.value -= q * (logits(i, c) - lse);
      out.grad(i, c) -= q;
    }
  }
  out.value /= b;
  out.grad /= b;
  return out;
}

Classifier::Classifier(const PretrainModel& pretrained, const AdaptConfig& config, int num_classes,
                       int num_patches, std::uint64_t seed)
    : config_(config), num_patches_(num_patches) {
  config_.validate();
  if (num_classes < 2) throw ValidationError("classifier needs at least two classes");
  const auto& enc = pretrained.config().encoder;
  if (num_patches < 1 || num_patches > enc.max_patches)
    throw ValidationError("classifier: patch count outside the positional embedding");
  nn::Rng rng(seed);
  for (EncoderSlot s : config_.encoders) {
    encoders.push_back(s == EncoderSlot::shared
                           ? pretrained.shared
                           : pretrained.state_encoder(static_cast<BrainState>(static_cast<int>(s) - 1)));
    encoders.back().release();
    if (config_.reset_pos_embed) reset_temporal_pos_embed(encoders.back(), rng);
  }
  const int width = static_cast<int>(encoders.size()) * enc.dim;
  head = ClassifierHead(merged_rows(num_patches, config_.merge) * width, config_.hidden_factor, num_classes,
                        config_.dropout, rng);
}

Matrix Classifier::tokens(const Matrix& x, const MontageMap& map) {
  std::vector<std::pair<EncoderSlot, Matrix>> outs;
  for (size_t i = 0; i < encoders.size(); ++i) outs.emplace_back(config_.encoders[i], encoders[i].encode(x, map));
  return select_and_concat(outs, config_.encoders);
}

RowVector Classifier::forward(const Matrix& x, const MontageMap& map, bool training, nn::Rng* rng) {
  const Matrix z = tokens(x, map);
  if (z.rows() != num_patches_ && config_.merge == MergeMode::all)
    throw ShapeError("classifier: 'all' merge needs a constant patch count");
  const Matrix merged = merge_tokens(z, config_.merge);
  const Matrix flat = Eigen::Map<const Matrix>(merged.data(), 1, merged.size());
  return head.forward(flat, training, rng).row(0);
}

void Classifier::backward(const RowVector& d_logits) {
  const Matrix d_flat = head.backward(Matrix(d_logits));
  if (config_.freeze_encoders) return;
  const int width = static_cast<int>(encoders.size()) * encoders.front().config().dim;
  const int rows = static_cast<int>(d_flat.size()) / width;
  const Matrix d_merged = Eigen::Map<const Matrix>(d_flat.data(), rows, width);
  // n_tokens of the last forward: recover from the merge mode
  const int n = config_.merge == MergeMode::all ? rows : num_patches_;
  const Matrix dz = merge_tokens_backward(d_merged, n, config_.merge);
  const int d = encoders.front().config().dim;
  for (size_t i = 0; i < encoders.size(); ++i) encoders[i].backward(dz.middleCols(static_cast<Eigen::Index>(i) * d, d));
}

nn::ParamList Classifier::all_params() {
  nn::ParamList out;
  for (auto& e : encoders) e.collect(out);
  head.collect(out);
  return out;
}

nn::ParamList Classifier::trainable() {
  nn::ParamList out;
  if (!config_.freeze_encoders)
    for (auto& e : encoders) e.collect(out);
  head.collect(out);
  return out;
}

void Classifier::zero_grad() {
  for (nn::Param* p : all_params()) p->zero_grad();
}

namespace {

std::uint64_t window_hash(const Segment& s) {
  std::string bytes = s.dataset;
  bytes.append(reinterpret_cast<const char*>(s.data.data()), s.data.size() * sizeof(double));
  return fnv1a64(bytes);
}

int count_classes(const std::vector<const std::vector<Segment>*>& splits) {
  int k = 0;
  for (const auto* split : splits)
    for (const Segment& s : *split) {
      if (s.label < 0) throw ValidationError("finetune: window without a label");
      k = std::max(k, s.label + 1);
    }
  return k;
}

struct Evaluation {
  std::vector<int> y_true, y_pred;
  Matrix probabilities;
};

Evaluation evaluate(Classifier& clf, const std::vector<Segment>& split, int classes) {
  Evaluation ev;
  ev.probabilities.resize(static_cast<Eigen::Index>(split.size()), classes);
  for (size_t i = 0; i < split.size(); ++i) {
    const RowVector logits = clf.forward(split[i].data, *split[i].montage, false);
    ev.probabilities.row(static_cast<Eigen::Index>(i)) = softmax_rows(Matrix(logits)).row(0);
    Eigen::Index arg;
    logits.maxCoeff(&arg);
    ev.y_true.push_back(split[i].label);
    ev.y_pred.push_back(static_cast<int>(arg));
  }
  return ev;
}

}  // namespace

void check_disjoint(const std::vector<Segment>& train, const std::vector<Segment>& val,
                    const std::vector<Segment>& test) {
  std::map<std::uint64_t, int> owner;
  const std::vector<const std::vector<Segment>*> splits{&train, &val, &test};
  for (int k = 0; k < 3; ++k)
    for (const Segment& s : *splits[k]) {
      auto [it, inserted] = owner.emplace(window_hash(s), k);
      if (!inserted && it->second != k) throw ValidationError("finetune: a window appears in more than one split");
    }
}

SeedResult finetune_seed(const PretrainModel& pretrained, const std::vector<Segment>& train,
                         const std::vector<Segment>& val, const std::vector<Segment>& test,
                         const AdaptConfig& config, std::uint64_t seed, std::ostream* log) {
  if (train.empty() || val.empty() || test.empty()) throw ValidationError("finetune: every split needs windows");
  const int classes = std::max(2, count_classes({&train, &val, &test}));
  const auto& enc = pretrained.config().encoder;
  const int n_patches = num_patches(static_cast<int>(train.front().data.cols()), enc.patch_len, enc.patch_stride);

  Classifier clf(pretrained, config, classes, n_patches, seed);
  AdamW opt(AdamWConfig{config.beta1, config.beta2, 1e-8, config.weight_decay});
  const CosineAnnealing schedule{config.lr, config.min_lr, static_cast<double>(config.epochs)};
  const double smoothing = classes > 2 ? config.label_smoothing : 0.0;
  nn::Rng rng(seed ^ 0x66696e65ULL);

  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const size_t steps = (train.size() + config.batch_size - 1) / config.batch_size;

  SeedResult result;
  result.seed = seed;
  result.best_val = -1.0;
  std::vector<Matrix> best;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (size_t step = 0; step < steps; ++step) {
      const size_t begin = step * config.batch_size;
      const size_t end = std::min(train.size(), begin + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - begin);
      clf.zero_grad();
      for (size_t i = begin; i < end; ++i) {
        const Segment& s = train[order[i]];
        const RowVector logits = clf.forward(s.data, *s.montage, true, &rng);
        const CrossEntropy ce = cross_entropy(Matrix(logits), {s.label}, smoothing);
        epoch_loss += ce.value;
        clf.backward(ce.grad.row(0) * scale);
      }
      const nn::ParamList params = clf.trainable();
      clip_grad_norm(params, config.grad_clip);
      const double progress = (epoch - 1) + static_cast<double>(step) / static_cast<double>(steps);
      opt.step(params, schedule.at(progress));
    }
    const Evaluation ev = evaluate(clf, val, classes);
    const double val_bacc = metrics::balanced_accuracy(ev.y_true, ev.y_pred);
    if (log) {
      nlohmann::json j{{"event", "finetune_epoch"}, {"seed", seed}, {"epoch", epoch},
                       {"train_loss", epoch_loss / static_cast<double>(train.size())},
                       {"val_balanced_accuracy", val_bacc}};
      *log << j.dump() << '\n';
    }
    if (val_bacc > result.best_val) {
      result.best_val = val_bacc;
      result.best_epoch = epoch;
      best.clear();
      for (nn::Param* p : clf.all_params()) best.push_back(p->value);
    }
  }
  const nn::ParamList params = clf.all_params();
  for (size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];

  Evaluation ev = evaluate(clf, test, classes);
  std::vector<double> positive;
  if (classes == 2)
    for (Eigen::Index i = 0; i < ev.probabilities.rows(); ++i) positive.push_back(ev.probabilities(i, 1));
  result.test = metrics::evaluate(ev.y_true, ev.y_pred, positive);
  result.y_true = std::move(ev.y_true);
  result.y_pred = std::move(ev.y_pred);
  result.probabilities = std::move(ev.probabilities);
  return result;
}

FinetuneReport finetune_loop(const PretrainModel& pretrained, const std::vector<Segment>& train,
                             const std::vector<Segment>& val, const std::vector<Segment>& test,
                             const AdaptConfig& config, std::ostream* log) {
  config.validate();
  check_disjoint(train, val, test);
  FinetuneReport report;
  for (std::uint64_t seed : config.seeds)
    report.runs.push_back(finetune_seed(pretrained, train, val, test, config, seed, log));
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : report.runs)
    for (const auto& [k, v] : r.test) values[k].push_back(v);
  for (const auto& [k, vs] : values) {
    const double mean = std::accumulate(vs.begin(), vs.end(), 0.0) / static_cast<double>(vs.size());
    double var = 0.0;
    for (double v : vs) var += (v - mean) * (v - mean);
    const double sd = vs.size() > 1 ? std::sqrt(var / static_cast<double>(vs.size() - 1)) : 0.0;
    report.aggregate[k] = {mean, sd};
  }
  return report;
}

}  // namespace eegstate
