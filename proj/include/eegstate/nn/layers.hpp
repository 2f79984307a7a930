#pragma once

#include "eegstate/nn/param.hpp"

namespace eegstate::nn {

// Every layer keeps the activations of its most recent forward call; backward
// consumes them, accumulates parameter gradients and returns the input
// gradient. Rows of token matrices are sequence positions.

double gelu(double x);
double gelu_grad(double x);
Matrix gelu(const Matrix& x);

/// y = x W^T + b
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng, bool bias = true);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  void collect(ParamList& out);

  int in_features() const { return static_cast<int>(weight.value.cols()); }
  int out_features() const { return static_cast<int>(weight.value.rows()); }

  Param weight;
  Param bias;
  bool has_bias = true;

 private:
  Matrix x_;
};

/// Normalises each row over its columns.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  void collect(ParamList& out);

  Param gamma;
  Param beta;
  double eps = 1e-5;

 private:
  Matrix xhat_;
  Vector inv_std_;
};

/// Group normalisation of a (K x S*W) feature map: S independent samples laid
/// side by side, each W columns wide; rows form `groups` contiguous groups.
/// Statistics run over (K/groups rows) x W columns; affine per row.
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(const std::string& name, int channels, int groups);

  Matrix forward(const Matrix& x, int sample_width);
  Matrix backward(const Matrix& dy);
  void collect(ParamList& out);

  Param gamma;
  Param beta;
  int groups = 1;
  double eps = 1e-5;

 private:
  Matrix xhat_;
  Matrix inv_std_;  // samples x groups
  int width_ = 0;
};

/// 1-D convolution along time applied independently to every EEG channel.
/// Input layout: (in_channels x C*T), channel c occupies columns [c*T, c*T+T).
class ChannelConv1d {
 public:
  ChannelConv1d() = default;
  ChannelConv1d(const std::string& name, int in, int out, int kernel, int padding, Rng& rng);

  Matrix forward(const Matrix& x, int length);
  Matrix backward(const Matrix& dy);
  void collect(ParamList& out);

  /// Output length for an input of the given length.
  int output_length(int length) const { return length + 2 * padding_ - kernel_ + 1; }
  void release() { x_.resize(0, 0); }

  Param weight;  // out x (in*kernel), column ci*kernel + j
  Param bias;    // 1 x out

 private:
  int in_ = 0, kernel_ = 0, padding_ = 0;
  int length_ = 0, out_length_ = 0, n_channels_ = 0;
  Matrix x_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int dim, int heads, Rng& rng);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  void collect(ParamList& out);

  Linear q, k, v, o;
  int heads = 1;

 private:
  Matrix qm_, km_, vm_;
  std::vector<Matrix> attn_;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, int dim, int hidden, Rng& rng);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  void collect(ParamList& out);

  Linear fc1, fc2;

 private:
  Matrix pre_;
};

/// x' = x + MSA(LN(x)); y = x' + MLP(LN(x'))
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, int dim, int heads, int hidden, Rng& rng);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  void collect(ParamList& out);

  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Mlp mlp;
};

class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(const std::string& name, int layers, int dim, int heads, int hidden, Rng& rng);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  void collect(ParamList& out);

  std::vector<TransformerBlock> blocks;
};

}  // namespace eegstate::nn
