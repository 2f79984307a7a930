#include "eegstate/pretrain.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <ostream>
#include <sstream>

namespace eegstate {

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate(encoder.dim);
}

PretrainModel::PretrainModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.validate();
  nn::Rng rng(seed);
  shared = Encoder(config_.encoder, "shared", rng);
  for (BrainState s : kAllStates) {
    const std::string name(to_string(s));
    state_encoders[static_cast<int>(s)] = Encoder(config_.encoder, name, rng);
  }
  for (BrainState s : kAllStates) {
    const std::string name = "decoder_" + std::string(to_string(s));
    decoders[static_cast<int>(s)] = Decoder(config_.encoder, config_.decoder, name, rng);
  }
  mask_embedding = nn::Param("mask_embedding", Matrix(1, config_.encoder.patch_len), false);
  nn::init_trunc_normal(mask_embedding.value, 0.02, rng);
}

nn::ParamList PretrainModel::all_params() {
  nn::ParamList out;
  shared.collect(out);
  for (auto& e : state_encoders) e.collect(out);
  for (auto& d : decoders) d.collect(out);
  out.push_back(&mask_embedding);
  return out;
}

nn::ParamList PretrainModel::trainable_for(BrainState y) {
  nn::ParamList out;
  shared.collect(out);
  state_encoder(y).collect(out);
  decoder(y).collect(out);
  out.push_back(&mask_embedding);
  return out;
}

void PretrainModel::zero_grad() {
  for (nn::Param* p : all_params()) p->zero_grad();
}

ParallelOutputs forward_parallel(PretrainModel& model, const Matrix& x_masked,
                                 const MontageMap& map, BrainState y) {
  const int yi = static_cast<int>(y);
  if (yi < 0 || yi >= kNumStates) throw ValidationError("forward_parallel: unknown state");
  ParallelOutputs out;
  out.active_state = y;
  out.shared = model.shared.encode(x_masked, map);
  for (BrainState s : kAllStates) {
    Encoder& enc = model.state_encoder(s);
    out.states[static_cast<int>(s)] = enc.encode(x_masked, map);
    if (s != y) enc.release();
  }
  out.active = out.states[yi];
  return out;
}

namespace {

LossBreakdown segment_loss_impl(PretrainModel& model, const Matrix& x, const MontageMap& map, BrainState y,
                                const MaskPlan& plan, int epoch, double margin, double grad_scale,
                                const std::vector<RowVector>* frozen, const UniversalTemplate& tmpl) {
  const Matrix x_masked = apply_mask(x, plan, model.mask_embedding.value.row(0));
  Matrix z_shared, z_active;
  std::vector<RowVector> inactive;
  if (frozen) {
    z_shared = model.shared.encode(x_masked, map);
    z_active = model.state_encoder(y).encode(x_masked, map);
    inactive = *frozen;
  } else {
    ParallelOutputs z = forward_parallel(model, x_masked, map, y);
    z_shared = std::move(z.shared);
    z_active = std::move(z.active);
    for (BrainState s : kAllStates)
      if (s != y) inactive.push_back(pool_tokens(z.states[static_cast<int>(s)]));
  }
  Decoder& dec = model.decoder(y);
  const Matrix x_hat = dec.forward(z_active, z_shared, map, static_cast<int>(x.cols()));

  const Vector weights = weight_schedule(state_prior(y, map, tmpl), epoch);
  const RecLoss rec = loss_rec(x, x_hat, plan.masked_times(), weights);
  const DecLoss dl = loss_dec(pool_tokens(z_shared), pool_tokens(z_active), inactive, margin);

  LossBreakdown out{rec.value + dl.value, rec.value, dl.value, std::move(inactive)};
  if (grad_scale == 0.0) return out;

  auto [d_active, d_shared] = dec.backward(rec.grad * grad_scale);
  const double pool_scale = grad_scale / static_cast<double>(z_shared.rows());
  d_shared.rowwise() += dl.grad_shared * pool_scale;
  d_active.rowwise() += dl.grad_active * pool_scale;
  Matrix dx = model.shared.backward(d_shared);
  dx += model.state_encoder(y).backward(d_active);
  model.mask_embedding.grad.row(0) += mask_embedding_grad(dx, plan);
  return out;
}

}  // namespace

LossBreakdown segment_loss(PretrainModel& model, const Matrix& x, const MontageMap& map,
                           BrainState y, const MaskPlan& plan, int epoch, double margin,
                           double grad_scale, const UniversalTemplate& tmpl) {
  return segment_loss_impl(model, x, map, y, plan, epoch, margin, grad_scale, nullptr, tmpl);
}

LossBreakdown segment_loss_detached(PretrainModel& model, const Matrix& x, const MontageMap& map,
                                    BrainState y, const MaskPlan& plan, int epoch, double margin,
                                    const std::vector<RowVector>& inactive_pooled,
                                    const UniversalTemplate& tmpl) {
  if (inactive_pooled.size() != kNumStates - 1)
    throw ShapeError("segment_loss_detached: expected one pooled vector per inactive state");
  return segment_loss_impl(model, x, map, y, plan, epoch, margin, 0.0, &inactive_pooled, tmpl);
}

Matrix reconstruct(PretrainModel& model, const Matrix& x, const MontageMap& map, BrainState y,
                   const MaskPlan& plan) {
  const Matrix x_masked = apply_mask(x, plan, model.mask_embedding.value.row(0));
  Matrix zs = model.shared.encode(x_masked, map);
  Matrix za = model.state_encoder(y).encode(x_masked, map);
  return model.decoder(y).forward(za, zs, map, static_cast<int>(x.cols()));
}

StepRecord pretrain_step(const Batch& batch, PretrainModel& model, AdamW& optimizer, double lr,
                         double grad_clip, double mask_ratio, double margin, nn::Rng& mask_rng,
                         const UniversalTemplate& tmpl) {
  if (batch.segments.empty()) throw ValidationError("pretrain_step: empty batch");
  const Segment& first = *batch.segments.front();
  for (const Segment* s : batch.segments) {
    if (s->state != first.state || s->dataset != first.dataset)
      throw ValidationError("pretrain_step: batch mixes datasets or brain states");
  }
  const BrainState y = first.state;
  const auto& enc = model.config().encoder;
  const double scale = 1.0 / static_cast<double>(batch.size());

  model.zero_grad();
  StepRecord rec;
  rec.epoch = batch.epoch_index;
  rec.lr = lr;
  rec.state = y;
  rec.dataset = first.dataset;
  for (const Segment* s : batch.segments) {
    const MaskPlan plan = plan_mask(static_cast<int>(s->data.cols()), enc.patch_len,
                                    enc.patch_stride, mask_ratio, mask_rng);
    const LossBreakdown l = segment_loss(model, s->data, *s->montage, y, plan, batch.epoch_index,
                                         margin, scale, tmpl);
    rec.loss.total += l.total * scale;
    rec.loss.rec += l.rec * scale;
    rec.loss.dec += l.dec * scale;
  }
  if (!std::isfinite(rec.loss.total)) {
    nlohmann::json dump;
    dump["error"] = "non-finite loss";
    dump["epoch"] = batch.epoch_index;
    dump["dataset"] = first.dataset;
    dump["state"] = std::string(to_string(y));
    dump["loss_rec"] = std::to_string(rec.loss.rec);
    dump["loss_dec"] = std::to_string(rec.loss.dec);
    nlohmann::json bad = nlohmann::json::array();
    for (nn::Param* p : model.trainable_for(y))
      if (!p->value.allFinite() || !p->grad.allFinite()) bad.push_back(p->name);
    dump["non_finite_params"] = bad;
    throw TrainingDiverged(dump.dump());
  }
  const nn::ParamList params = model.trainable_for(y);
  rec.grad_norm = clip_grad_norm(params, grad_clip);
  optimizer.step(params, lr);
  return rec;
}

Pretrainer::Pretrainer(PretrainModel& model, PretrainConfig config,
                       const std::vector<Segment>& corpus, const UniversalTemplate& tmpl)
    : model_(model),
      config_(config),
      corpus_(corpus),
      tmpl_(tmpl),
      optimizer_(config.adamw) {
  state_.mask_rng.seed(config_.seed ^ 0x6d61736bULL);
  if (corpus_.empty()) throw ValidationError("pre-training corpus is empty");
}

const std::vector<Batch>& Pretrainer::batches_for(int epoch) {
  if (cached_epoch_ != epoch) {
    batches_ = batch_by_dataset(corpus_, config_.batch_size,
                                config_.seed * 1000003ULL + static_cast<std::uint64_t>(epoch), epoch);
    cached_epoch_ = epoch;
  }
  return batches_;
}

int Pretrainer::steps_in_epoch(int epoch) {
  return static_cast<int>(batches_for(epoch).size());
}

StepRecord Pretrainer::step() {
  if (finished()) throw std::logic_error("pre-training already finished");
  const auto& batches = batches_for(state_.epoch);
  const double progress =
      (state_.epoch - 1) + static_cast<double>(state_.step_in_epoch) / static_cast<double>(batches.size());
  const double lr = config_.schedule().at(progress);
  StepRecord rec = pretrain_step(batches[state_.step_in_epoch], model_, optimizer_, lr,
                                 config_.grad_clip, config_.mask_ratio, config_.margin,
                                 state_.mask_rng, tmpl_);
  rec.step = state_.global_step;
  if (log_) *log_ << format_step_record(rec) << '\n';
  ++state_.global_step;
  if (++state_.step_in_epoch == static_cast<int>(batches.size())) {
    ++state_.epoch;
    state_.step_in_epoch = 0;
  }
  return rec;
}

std::vector<StepRecord> Pretrainer::run_epoch() {
  std::vector<StepRecord> out;
  const int epoch = state_.epoch;
  while (!finished() && state_.epoch == epoch) out.push_back(step());
  return out;
}

std::string format_step_record(const StepRecord& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["loss_rec"] = r.loss.rec;
  j["loss_dec"] = r.loss.dec;
  j["loss_total"] = r.loss.total;
  j["grad_norm"] = r.grad_norm;
  j["state"] = std::string(to_string(r.state));
  j["dataset"] = r.dataset;
  return j.dump();
}

}  // namespace eegstate
