#pragma once

#include "eegstate/pretrain.hpp"

#include <map>
#include <optional>

namespace eegstate {

/// Encoders a downstream model can draw on, in canonical concatenation order.
enum class EncoderSlot : int { shared = 0, affect = 1, motor = 2, others = 3 };

std::string_view to_string(EncoderSlot s);
EncoderSlot parse_encoder_slot(std::string_view name);
/// "shared,affect" -> canonical, de-duplicated list; empty -> ValidationError.
std::vector<EncoderSlot> parse_encoder_subset(std::string_view list);

enum class MergeMode { mean, aggr5, all };

std::string_view to_string(MergeMode m);
MergeMode parse_merge_mode(std::string_view name);

struct AdaptConfig {
  std::vector<EncoderSlot> encoders{EncoderSlot::shared, EncoderSlot::affect};
  MergeMode merge = MergeMode::mean;
  int hidden_factor = 4;
  double dropout = 0.1;
  double lr = 5e-4;
  double min_lr = 1e-6;
  int epochs = 10;
  int batch_size = 8;
  double label_smoothing = 0.1;  // applied only with more than two classes
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double grad_clip = 1.0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  bool freeze_encoders = false;
  bool reset_pos_embed = true;

  void validate() const;
};

/// Per-token concatenation of the selected encoder outputs in canonical
/// order, whatever order `outputs` lists them in. Width |S| * d.
Matrix select_and_concat(const std::vector<std::pair<EncoderSlot, Matrix>>& outputs,
                         const std::vector<EncoderSlot>& subset);

/// mean -> 1 row; aggr5 -> ceil(N_p/5) rows, each the mean of up to five
/// consecutive tokens (the tail group may be shorter); all -> unchanged.
Matrix merge_tokens(const Matrix& z, MergeMode mode);
Matrix merge_tokens_backward(const Matrix& d_merged, int n_tokens, MergeMode mode);
/// Rows produced by merge_tokens for N_p tokens.
int merged_rows(int n_tokens, MergeMode mode);

/// Replaces the positional embedding with U(-a, a), a = sqrt(6 / (rows + cols)).
/// Returns a.
double reset_temporal_pos_embed(Encoder& encoder, nn::Rng& rng);

/// Linear(in -> hidden_factor*in), GELU, dropout, Linear(-> classes).
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(int in, int hidden_factor, int classes, double dropout, nn::Rng& rng);

  /// x: (B x in) -> logits (B x classes). `rng` drives dropout when training.
  Matrix forward(const Matrix& x, bool training, nn::Rng* rng = nullptr);
  Matrix backward(const Matrix& d_logits);
  void collect(nn::ParamList& out);

  int in_features() const { return fc1.in_features(); }
  int hidden() const { return fc1.out_features(); }
  int classes() const { return fc2.out_features(); }

  nn::Linear fc1, fc2;
  double dropout = 0.0;

 private:
  Matrix pre_, keep_;
};

struct CrossEntropy {
  double value = 0.0;
  Matrix grad;  // d mean-loss / d logits
};

/// Mean cross-entropy against (1 - eps) one-hot + eps / K targets.
CrossEntropy cross_entropy(const Matrix& logits, const std::vector<int>& labels, double smoothing);

Matrix softmax_rows(const Matrix& logits);

/// Selected pre-trained encoders, token merge and head.
class Classifier {
 public:
  Classifier(const PretrainModel& pretrained, const AdaptConfig& config, int num_classes,
             int num_patches, std::uint64_t seed);

  /// Z_* for one window (N_p x |S|*d).
  Matrix tokens(const Matrix& x, const MontageMap& map);
  /// Logits (1 x classes) for one window.
  RowVector forward(const Matrix& x, const MontageMap& map, bool training, nn::Rng* rng = nullptr);
  /// Backward of the last forward; accumulates gradients.
  void backward(const RowVector& d_logits);

  nn::ParamList all_params();
  nn::ParamList trainable();
  void zero_grad();

  const AdaptConfig& config() const { return config_; }
  std::vector<Encoder> encoders;  // canonical order of config.encoders
  ClassifierHead head;

 private:
  AdaptConfig config_;
  int num_patches_ = 0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  int best_epoch = 0;
  double best_val = 0.0;
  std::map<std::string, double> test;
  std::vector<int> y_true, y_pred;
  Matrix probabilities;  // test windows x classes
};

struct FinetuneReport {
  std::vector<SeedResult> runs;
  std::map<std::string, std::pair<double, double>> aggregate;  // metric -> (mean, sample std)
};

/// Full training for one seed: AdamW, cosine annealing to min_lr, gradient
/// clipping, model selection on validation balanced accuracy, one test pass.
SeedResult finetune_seed(const PretrainModel& pretrained, const std::vector<Segment>& train,
                         const std::vector<Segment>& val, const std::vector<Segment>& test,
                         const AdaptConfig& config, std::uint64_t seed, std::ostream* log = nullptr);

/// Runs every seed of the config. Throws ValidationError when a window
/// appears in more than one split.
FinetuneReport finetune_loop(const PretrainModel& pretrained, const std::vector<Segment>& train,
                             const std::vector<Segment>& val, const std::vector<Segment>& test,
                             const AdaptConfig& config, std::ostream* log = nullptr);

/// Throws ValidationError when the same window occurs in two splits.
void check_disjoint(const std::vector<Segment>& train, const std::vector<Segment>& val,
                    const std::vector<Segment>& test);

}  // namespace eegstate
