#pragma once

#include "eegstate/decoder.hpp"
#include "eegstate/objectives.hpp"
#include "eegstate/optim.hpp"
#include "eegstate/signal.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <memory>

namespace eegstate {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct PretrainConfig {
  double peak_lr = 1e-4;
  double min_lr = 1e-5;
  double warmup_epochs = 2;
  int epochs = 30;
  AdamWConfig adamw{0.9, 0.98, 1e-8, 0.05};
  double grad_clip = 3.0;
  double mask_ratio = 0.5;
  double margin = 0.1;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double window_s = 10.0;

  WarmupCosine schedule() const { return {peak_lr, min_lr, warmup_epochs, static_cast<double>(epochs)}; }
};

/// Shared encoder, one encoder and one decoder per brain state, and the
/// learned mask embedding.
class PretrainModel {
 public:
  PretrainModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::uint64_t init_seed() const { return seed_; }

  Encoder& state_encoder(BrainState s) { return state_encoders[static_cast<int>(s)]; }
  const Encoder& state_encoder(BrainState s) const { return state_encoders[static_cast<int>(s)]; }
  Decoder& decoder(BrainState s) { return decoders[static_cast<int>(s)]; }

  /// Every parameter in a fixed order (shared, states, decoders, mask).
  nn::ParamList all_params();
  /// Parameters a batch of state `y` may update: shared encoder, E_y, D_y,
  /// mask embedding.
  nn::ParamList trainable_for(BrainState y);
  void zero_grad();

  Encoder shared;
  std::array<Encoder, kNumStates> state_encoders;
  std::array<Decoder, kNumStates> decoders;
  nn::Param mask_embedding;  // 1 x P

 private:
  ModelConfig config_;
  std::uint64_t seed_ = 0;
};

struct ParallelOutputs {
  Matrix shared;
  Matrix active;
  std::array<Matrix, kNumStates> states;  // all state encoders, values only
  BrainState active_state = BrainState::others;
};

/// Runs every encoder on the masked input. The shared and active encoders
/// keep their activations for backward; inactive encoders run value-only and
/// release theirs, so no gradient can reach them.
ParallelOutputs forward_parallel(PretrainModel& model, const Matrix& x_masked,
                                 const MontageMap& map, BrainState y);

struct LossBreakdown {
  double total = 0.0;
  double rec = 0.0;
  double dec = 0.0;
  std::vector<RowVector> inactive_pooled;  // detached inputs of the decoupling loss
};

/// Masked reconstruction + decoupling loss for one segment under a fixed
/// mask. With grad_scale != 0 the gradients of grad_scale * loss are
/// accumulated into the shared encoder, E_y, D_y and the mask embedding.
LossBreakdown segment_loss(PretrainModel& model, const Matrix& x, const MontageMap& map,
                           BrainState y, const MaskPlan& plan, int epoch, double margin,
                           double grad_scale,
                           const UniversalTemplate& tmpl = UniversalTemplate::builtin());

/// segment_loss with the inactive pooled vectors supplied instead of
/// evaluated: the loss as a function of the trainable parameters only, which
/// is what finite differences must see under stop-gradient.
LossBreakdown segment_loss_detached(PretrainModel& model, const Matrix& x, const MontageMap& map,
                                    BrainState y, const MaskPlan& plan, int epoch, double margin,
                                    const std::vector<RowVector>& inactive_pooled,
                                    const UniversalTemplate& tmpl = UniversalTemplate::builtin());

/// Reconstruction X_hat of the masked input (no gradients kept).
Matrix reconstruct(PretrainModel& model, const Matrix& x, const MontageMap& map, BrainState y,
                   const MaskPlan& plan);

/// Raised when a step produces a non-finite loss. what() carries the dump.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepRecord {
  long step = 0;
  int epoch = 1;
  double lr = 0.0;
  double grad_norm = 0.0;
  LossBreakdown loss;
  BrainState state = BrainState::others;
  std::string dataset;
};

/// One optimisation step on a dataset-homogeneous, single-state batch: mask,
/// parallel encode, fusion decode, loss, clip, AdamW on the routed subset.
StepRecord pretrain_step(const Batch& batch, PretrainModel& model, AdamW& optimizer, double lr,
                         double grad_clip, double mask_ratio, double margin, nn::Rng& mask_rng,
                         const UniversalTemplate& tmpl = UniversalTemplate::builtin());

/// Position in the training schedule; everything needed to resume.
struct TrainState {
  int epoch = 1;  // 1-based
  int step_in_epoch = 0;
  long global_step = 0;
  nn::Rng mask_rng;
};

/// Epoch loop over an in-memory corpus. Batch order for epoch e is a pure
/// function of (seed, e); the mask stream lives in TrainState.
class Pretrainer {
 public:
  Pretrainer(PretrainModel& model, PretrainConfig config, const std::vector<Segment>& corpus,
             const UniversalTemplate& tmpl = UniversalTemplate::builtin());

  /// Runs the next batch. Advances to the next epoch when this one is done.
  StepRecord step();
  /// Runs the remaining steps of the current epoch.
  std::vector<StepRecord> run_epoch();
  bool finished() const { return state_.epoch > config_.epochs; }
  int steps_in_epoch(int epoch);

  TrainState& state() { return state_; }
  AdamW& optimizer() { return optimizer_; }
  const PretrainConfig& config() const { return config_; }
  void set_log(std::ostream* log) { log_ = log; }

 private:
  const std::vector<Batch>& batches_for(int epoch);

  PretrainModel& model_;
  PretrainConfig config_;
  const std::vector<Segment>& corpus_;
  const UniversalTemplate& tmpl_;
  AdamW optimizer_;
  TrainState state_;
  int cached_epoch_ = 0;
  std::vector<Batch> batches_;
  std::ostream* log_ = nullptr;
};

/// One line-delimited JSON record.
std::string format_step_record(const StepRecord& r);

}  // namespace eegstate
