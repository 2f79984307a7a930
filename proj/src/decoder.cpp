#include "eegstate/decoder.hpp"

namespace eegstate {

void DecoderConfig::validate(int dim) const {
  if (layers < 0 || ff_dim <= 0) throw ValidationError("decoder config: counts must be positive");
  if (heads <= 0 || dim % heads != 0) throw ValidationError("decoder config: heads must divide dim");
}

Decoder::Decoder(const EncoderConfig& enc, const DecoderConfig& dec, const std::string& name,
                 nn::Rng& rng)
    : fusion(name + ".fusion", 2 * enc.dim, enc.dim, rng),
      transformer(name + ".transformer", dec.layers, enc.dim, dec.heads, dec.ff_dim, rng),
      head(name + ".head", enc.dim, kTemplateChannels * enc.patch_len, rng),
      dim_(enc.dim),
      patch_len_(enc.patch_len),
      patch_stride_(enc.patch_stride) {
  dec.validate(enc.dim);
}

Matrix Decoder::forward(const Matrix& z_state, const Matrix& z_shared, const MontageMap& map,
                        int length) {
  if (z_state.rows() != z_shared.rows() || z_state.cols() != dim_ || z_shared.cols() != dim_)
    throw ShapeError("decoder: token shapes of the fused encoders differ");
  n_patches_ = static_cast<int>(z_state.rows());
  if (num_patches(length, patch_len_, patch_stride_) != n_patches_)
    throw ShapeError("decoder: token count does not match the output length");
  length_ = length;
  rows_ = map.template_indices;

  Matrix comb(n_patches_, 2 * dim_);
  comb << z_state, z_shared;
  Matrix out = head.forward(transformer.forward(fusion.forward(comb)));

  std::vector<int> cover(length, 0);
  for (int n = 0; n < n_patches_; ++n)
    for (int p = 0; p < patch_len_; ++p) ++cover[n * patch_stride_ + p];
  inv_cover_.assign(length, 0.0);
  for (int t = 0; t < length; ++t)
    if (cover[t] > 0) inv_cover_[t] = 1.0 / cover[t];

  const int channels = map.num_channels();
  Matrix x_hat = Matrix::Zero(channels, length);
  for (int n = 0; n < n_patches_; ++n)
    for (int c = 0; c < channels; ++c)
      x_hat.row(c).segment(n * patch_stride_, patch_len_) +=
          out.row(n).segment(static_cast<Eigen::Index>(rows_[c]) * patch_len_, patch_len_);
  if (patch_stride_ < patch_len_) {
    for (int t = 0; t < length; ++t) x_hat.col(t) *= inv_cover_[t];
  }
  return x_hat;
}

std::pair<Matrix, Matrix> Decoder::backward(const Matrix& d_x_hat) {
  Matrix d_scaled = d_x_hat;
  if (patch_stride_ < patch_len_) {
    for (int t = 0; t < length_; ++t) d_scaled.col(t) *= inv_cover_[t];
  }
  Matrix d_out = Matrix::Zero(n_patches_, head.out_features());
  for (int n = 0; n < n_patches_; ++n)
    for (size_t c = 0; c < rows_.size(); ++c)
      d_out.row(n).segment(static_cast<Eigen::Index>(rows_[c]) * patch_len_, patch_len_) +=
          d_scaled.row(static_cast<Eigen::Index>(c)).segment(n * patch_stride_, patch_len_);
  Matrix d_comb = fusion.backward(transformer.backward(head.backward(d_out)));
  return {d_comb.leftCols(dim_), d_comb.rightCols(dim_)};
}

void Decoder::collect(nn::ParamList& out) {
  fusion.collect(out);
  transformer.collect(out);
  head.collect(out);
}

nn::ParamList Decoder::params() {
  nn::ParamList out;
  collect(out);
  return out;
}

}  // namespace eegstate
