#pragma once

#include "eegstate/encoder.hpp"

namespace eegstate {

struct DecoderConfig {
  int layers = 2;
  int heads = 32;
  int ff_dim = 64;

  void validate(int dim) const;
  bool operator==(const DecoderConfig&) const = default;
};

/// Fusion decoder: concat(Z_state, Z_shared) -> affine 2d->d -> pre-norm
/// transformer -> per-token head emitting 60 x P template samples. Rows are
/// gathered onto the montage and patches placed at their windows; samples
/// covered by several windows are averaged, uncovered samples stay zero.
class Decoder {
 public:
  Decoder() = default;
  Decoder(const EncoderConfig& enc, const DecoderConfig& dec, const std::string& name, nn::Rng& rng);

  Matrix forward(const Matrix& z_state, const Matrix& z_shared, const MontageMap& map, int length);

  /// Returns (dZ_state, dZ_shared).
  std::pair<Matrix, Matrix> backward(const Matrix& d_x_hat);

  void collect(nn::ParamList& out);
  nn::ParamList params();

  nn::Linear fusion;
  nn::TransformerStack transformer;
  nn::Linear head;

 private:
  int dim_ = 0, patch_len_ = 0, patch_stride_ = 0;
  int n_patches_ = 0, length_ = 0;
  IndexList rows_;
  std::vector<double> inv_cover_;
};

}  // namespace eegstate
