#pragma once

#include "eegstate/montage.hpp"
#include "eegstate/nn/layers.hpp"

#include <utility>
#include <vector>

namespace eegstate {

/// Architecture of one hierarchical encoder. Defaults are the full-size
/// pre-training values.
struct EncoderConfig {
  std::vector<int> conv_in{1, 32, 32};
  std::vector<int> conv_out{32, 32, 32};
  std::vector<int> conv_kernel{15, 3, 3};
  std::vector<int> conv_stride{1, 1, 1};
  std::vector<int> conv_padding{7, 1, 1};
  int channel_filters = 32;  // K_C
  int region_filters = 32;   // K_R
  int patch_len = 20;        // P
  int patch_stride = 20;     // s_P
  int dim = 32;              // d
  int layers = 4;
  int heads = 32;
  int ff_dim = 64;
  int norm_groups = 4;
  int max_patches = 512;

  int temporal_depth() const { return conv_out.back(); }
  int total_filters() const { return channel_filters + region_filters; }
  int spatial_rows() const { return temporal_depth() * total_filters(); }
  int patch_features() const { return spatial_rows() * patch_len; }
  int min_length() const;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// floor((T - P) / stride) + 1; ShapeError when T < P.
int num_patches(int length, int patch_len, int patch_stride);

/// Stacks H_C over H_R and views the (K_total x K_T*T) block as
/// (K_T*K_total x T). Row f*K_T + k holds filter f at temporal depth k.
Matrix assemble_spatial(const Matrix& h_channel, const Matrix& h_region, int temporal_depth);

/// Inverse of assemble_spatial.
std::pair<Matrix, Matrix> split_spatial(const Matrix& h_spatial, int channel_filters,
                                        int temporal_depth);

/// Row i is patch i flattened row-major over (rows x P).
Matrix patchify(const Matrix& h_spatial, int patch_len, int patch_stride);

/// (K_T x C*T) temporal map -> (C x K_T*T); column k*T + t.
Matrix flatten_temporal(const Matrix& h_temp, int channels, int length);
Matrix unflatten_temporal(const Matrix& h_flat, int temporal_depth, int length);

/// Copy of `map` with channels renumbered in template order.
MontageMap canonical_montage(const MontageMap& map);

/// One hierarchical encoder: temporal CNN, retrieval-based spatial filters,
/// patch embedding and a pre-norm transformer.
///
/// Stage methods cache what backward() needs; backward() must follow a call
/// to encode() on the same object.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, const std::string& name, nn::Rng& rng);

  const EncoderConfig& config() const { return config_; }
  const std::string& name() const { return name_; }

  /// X (C x T) -> H_temp laid out as (K_T x C*T).
  Matrix temporal_encode(const Matrix& x);
  /// H_flat (C x K_T*T) -> H_C (K_C x K_T*T).
  Matrix channel_spatial(const Matrix& h_flat, const MontageMap& map);
  /// H_flat (C x K_T*T) -> H_R (K_R x K_T*T).
  Matrix region_spatial(const Matrix& h_flat, const MontageMap& map);
  /// H_spatial (K_T*K_total x T) -> tokens (N_p x d), positional embedding added.
  Matrix patchify_embed(const Matrix& h_spatial);
  Matrix transformer_encode(const Matrix& tokens);

  /// Full forward pass. Channels are processed in template order so the
  /// result does not depend on the order rows arrive in.
  Matrix encode(const Matrix& x, const MontageMap& map);

  /// Gradient of the tokens from the last encode() -> gradient of X in the
  /// caller's row order. Parameter gradients accumulate.
  Matrix backward(const Matrix& d_tokens);

  /// Drops cached activations.
  void release();

  void collect(nn::ParamList& out);
  nn::ParamList params();

  std::vector<nn::ChannelConv1d> convs;
  std::vector<nn::GroupNorm> conv_norms;
  nn::Param channel_bank;  // W_C, 60 x K_C
  nn::Param region_bank;   // W_R, 24 x K_R
  nn::GroupNorm channel_norm;
  nn::GroupNorm region_norm;
  nn::Param embed_weight;  // E, d x (K_T*K_total*P)
  nn::Param embed_bias;    // 1 x d
  nn::Param pos_embed;     // max_patches x d
  nn::TransformerStack transformer;

 private:
  Matrix backward_temporal(const Matrix& d_temp);
  Matrix backward_channel(const Matrix& d_hc);
  Matrix backward_region(const Matrix& d_hr);
  Matrix backward_patchify(const Matrix& d_tokens);

  EncoderConfig config_;
  std::string name_;

  // caches
  int channels_ = 0, length_ = 0;
  std::vector<Matrix> conv_pre_act_;
  Matrix h_flat_;
  IndexList channel_rows_, region_rows_;
  std::vector<IndexList> region_members_;
  Matrix region_mean_;
  Matrix channel_pre_act_, region_pre_act_;
  Matrix patches_;
  int n_patches_ = 0;
  IndexList order_;
};

}  // namespace eegstate
