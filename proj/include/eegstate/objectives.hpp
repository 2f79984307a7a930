#pragma once

#include "eegstate/core.hpp"
#include "eegstate/nn/param.hpp"

#include <vector>

namespace eegstate {

/// Patches chosen for masking and the time samples they cover.
struct MaskPlan {
  IndexList masked_patches;  // ascending
  double ratio = 0.0;
  int num_patches = 0;
  int patch_len = 0;
  int patch_stride = 0;
  int length = 0;

  /// For each time sample, the offset inside the mask embedding written
  /// there, or -1 when unmasked. Later patches win where windows overlap.
  IndexList time_offsets() const;
  /// Sorted time samples covered by masked patches.
  IndexList masked_times() const;
  bool empty() const { return masked_patches.empty(); }
};

/// Draws floor(ratio * N_p) patches uniformly without replacement.
MaskPlan plan_mask(int length, int patch_len, int patch_stride, double ratio, nn::Rng& rng);

/// Replaces every channel's samples inside masked windows by the mask
/// embedding (length P, broadcast over channels).
Matrix apply_mask(const Matrix& x, const MaskPlan& plan, const RowVector& mask_embedding);

/// Gradient of apply_mask with respect to the mask embedding.
RowVector mask_embedding_grad(const Matrix& d_masked, const MaskPlan& plan);

/// 0.5 + logistic(epoch * (w - 0.5)).
double weight_schedule(double w, int epoch);
Vector weight_schedule(const Vector& w, int epoch);

struct RecLoss {
  double value = 0.0;
  Matrix grad;  // d loss / d X_hat
};

/// Weighted MSE over all channels at the masked time samples; 0 when nothing
/// is masked. `channel_weights` are already passed through weight_schedule.
RecLoss loss_rec(const Matrix& x, const Matrix& x_hat, const IndexList& masked_times,
                 const Vector& channel_weights);

/// Cosine similarity; 0 when either vector has zero norm.
double cosine(const RowVector& a, const RowVector& b);

struct DecLoss {
  double value = 0.0;
  RowVector grad_shared;
  RowVector grad_active;
  std::vector<double> cosines;  // shared-active first, then active-inactive
};

/// Margin hinge on the shared/active cosine and on each active/inactive
/// cosine. Inactive vectors are constants.
DecLoss loss_dec(const RowVector& shared, const RowVector& active,
                 const std::vector<RowVector>& inactive, double margin);

/// Token-mean pooling.
RowVector pool_tokens(const Matrix& tokens);

}  // namespace eegstate
