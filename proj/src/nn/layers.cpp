#include "eegstate/nn/layers.hpp"

#include <cmath>
#include <numbers>

namespace eegstate::nn {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

Matrix gelu(const Matrix& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

namespace {

Matrix gelu_backward(const Matrix& pre, const Matrix& dy) {
  return dy.cwiseProduct(pre.unaryExpr([](double v) { return gelu_grad(v); }));
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string& name, int in, int out, Rng& rng, bool bias_on)
    : weight(name + ".weight", Matrix(out, in)),
      bias(name + ".bias", Matrix::Zero(1, bias_on ? out : 0), false),
      has_bias(bias_on) {
  init_trunc_normal(weight.value, 0.02, rng);
}

Matrix Linear::forward(const Matrix& x) {
  if (x.cols() != weight.value.cols())
    throw ShapeError(weight.name + ": expected width " + std::to_string(weight.value.cols()) +
                     ", got " + std::to_string(x.cols()));
  x_ = x;
  Matrix y = x * weight.value.transpose();
  if (has_bias) y.rowwise() += bias.value.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& dy) {
  weight.grad.noalias() += dy.transpose() * x_;
  if (has_bias) bias.grad.row(0) += dy.colwise().sum();
  return dy * weight.value;
}

void Linear::collect(ParamList& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(const std::string& name, int dim)
    : gamma(name + ".gamma", Matrix::Ones(1, dim), false),
      beta(name + ".beta", Matrix::Zero(1, dim), false) {}

Matrix LayerNorm::forward(const Matrix& x) {
  const auto n = x.cols();
  xhat_.resize(x.rows(), n);
  inv_std_.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().sum() / static_cast<double>(n);
    inv_std_[r] = 1.0 / std::sqrt(var + eps);
    xhat_.row(r) = (x.row(r).array() - mu) * inv_std_[r];
  }
  Matrix y = xhat_.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  return y;
}

Matrix LayerNorm::backward(const Matrix& dy) {
  gamma.grad.row(0) += dy.cwiseProduct(xhat_).colwise().sum();
  beta.grad.row(0) += dy.colwise().sum();
  Matrix dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).mean();
    const double m2 = dxhat.row(r).cwiseProduct(xhat_.row(r)).mean();
    dx.row(r) = inv_std_[r] * (dxhat.row(r).array() - m1 - xhat_.row(r).array() * m2);
  }
  return dx;
}

void LayerNorm::collect(ParamList& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

// ---------------------------------------------------------------- GroupNorm

GroupNorm::GroupNorm(const std::string& name, int channels, int g)
    : gamma(name + ".gamma", Matrix::Ones(1, channels), false),
      beta(name + ".beta", Matrix::Zero(1, channels), false),
      groups(g) {
  if (g <= 0 || channels % g != 0)
    throw ValidationError(name + ": group count must divide the channel count");
}

Matrix GroupNorm::forward(const Matrix& x, int sample_width) {
  const auto k = x.rows();
  if (k != gamma.value.cols()) throw ShapeError(gamma.name + ": channel count mismatch");
  if (sample_width <= 0 || x.cols() % sample_width != 0)
    throw ShapeError(gamma.name + ": width is not a multiple of the sample width");
  width_ = sample_width;
  const auto samples = x.cols() / sample_width;
  const auto cg = k / groups;
  const double n = static_cast<double>(cg * sample_width);
  xhat_.resize(k, x.cols());
  inv_std_.resize(samples, groups);
  for (Eigen::Index s = 0; s < samples; ++s) {
    for (int g = 0; g < groups; ++g) {
      auto blk = x.block(g * cg, s * sample_width, cg, sample_width);
      const double mu = blk.sum() / n;
      const double var = (blk.array() - mu).square().sum() / n;
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std_(s, g) = inv;
      xhat_.block(g * cg, s * sample_width, cg, sample_width) = (blk.array() - mu) * inv;
    }
  }
  Matrix y = xhat_.array().colwise() * gamma.value.row(0).transpose().array();
  y.colwise() += beta.value.row(0).transpose();
  return y;
}

Matrix GroupNorm::backward(const Matrix& dy) {
  gamma.grad.row(0) += dy.cwiseProduct(xhat_).rowwise().sum().transpose();
  beta.grad.row(0) += dy.rowwise().sum().transpose();
  Matrix dxhat = dy.array().colwise() * gamma.value.row(0).transpose().array();
  const auto k = dy.rows();
  const auto cg = k / groups;
  const auto samples = dy.cols() / width_;
  Matrix dx(k, dy.cols());
  for (Eigen::Index s = 0; s < samples; ++s) {
    for (int g = 0; g < groups; ++g) {
      auto dh = dxhat.block(g * cg, s * width_, cg, width_);
      auto xh = xhat_.block(g * cg, s * width_, cg, width_);
      const double m1 = dh.mean();
      const double m2 = dh.cwiseProduct(xh).mean();
      dx.block(g * cg, s * width_, cg, width_) =
          inv_std_(s, g) * (dh.array() - m1 - xh.array() * m2);
    }
  }
  return dx;
}

void GroupNorm::collect(ParamList& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

// ---------------------------------------------------------------- ChannelConv1d

ChannelConv1d::ChannelConv1d(const std::string& name, int in, int out, int kernel, int padding,
                             Rng& rng)
    : weight(name + ".weight", Matrix(out, in * kernel)),
      bias(name + ".bias", Matrix::Zero(1, out), false),
      in_(in),
      kernel_(kernel),
      padding_(padding) {
  init_normal(weight.value, std::sqrt(2.0 / (in * kernel)), rng);
}

namespace {

// im2col block of one EEG channel: row ci*kernel + j holds input row ci
// shifted by j - padding, zero outside the signal.
void fill_columns(Matrix& cols, const Matrix& x, int c, int in, int kernel, int padding, int length,
                  int out_length) {
  cols.setZero();
  for (int ci = 0; ci < in; ++ci) {
    for (int j = 0; j < kernel; ++j) {
      const int shift = j - padding;
      const int t0 = std::max(0, -shift);
      const int t1 = std::min(out_length, length - shift);
      if (t1 <= t0) continue;
      cols.row(ci * kernel + j).segment(t0, t1 - t0) = x.row(ci).segment(c * length + t0 + shift, t1 - t0);
    }
  }
}

}  // namespace

Matrix ChannelConv1d::forward(const Matrix& x, int length) {
  if (x.rows() != in_) throw ShapeError(weight.name + ": input channel mismatch");
  if (length <= 0 || x.cols() % length != 0) throw ShapeError(weight.name + ": bad length");
  length_ = length;
  out_length_ = output_length(length);
  if (out_length_ <= 0) throw ShapeError(weight.name + ": signal shorter than the kernel");
  n_channels_ = static_cast<int>(x.cols() / length);
  x_ = x;

  const auto out = weight.value.rows();
  Matrix y(out, static_cast<Eigen::Index>(n_channels_) * out_length_);
  Matrix cols(static_cast<Eigen::Index>(in_) * kernel_, out_length_);
  for (int c = 0; c < n_channels_; ++c) {
    fill_columns(cols, x_, c, in_, kernel_, padding_, length_, out_length_);
    y.middleCols(static_cast<Eigen::Index>(c) * out_length_, out_length_).noalias() = weight.value * cols;
  }
  y.colwise() += bias.value.row(0).transpose();
  return y;
}

Matrix ChannelConv1d::backward(const Matrix& dy) {
  if (x_.size() == 0) throw ShapeError(weight.name + ": backward without a cached forward");
  bias.grad.row(0) += dy.rowwise().sum().transpose();
  Matrix dx = Matrix::Zero(in_, static_cast<Eigen::Index>(n_channels_) * length_);
  Matrix cols(static_cast<Eigen::Index>(in_) * kernel_, out_length_);
  Matrix dcols(cols.rows(), cols.cols());
  for (int c = 0; c < n_channels_; ++c) {
    fill_columns(cols, x_, c, in_, kernel_, padding_, length_, out_length_);
    const auto dyc = dy.middleCols(static_cast<Eigen::Index>(c) * out_length_, out_length_);
    weight.grad.noalias() += dyc * cols.transpose();
    dcols.noalias() = weight.value.transpose() * dyc;
    for (int ci = 0; ci < in_; ++ci) {
      for (int j = 0; j < kernel_; ++j) {
        const int shift = j - padding_;
        const int t0 = std::max(0, -shift);
        const int t1 = std::min(out_length_, length_ - shift);
        if (t1 <= t0) continue;
        dx.row(ci).segment(c * length_ + t0 + shift, t1 - t0) += dcols.row(ci * kernel_ + j).segment(t0, t1 - t0);
      }
    }
  }
  return dx;
}

void ChannelConv1d::collect(ParamList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------- attention

MultiHeadAttention::MultiHeadAttention(const std::string& name, int dim, int h, Rng& rng)
    : q(name + ".q", dim, dim, rng),
      k(name + ".k", dim, dim, rng),
      v(name + ".v", dim, dim, rng),
      o(name + ".o", dim, dim, rng),
      heads(h) {
  if (h <= 0 || dim % h != 0) throw ValidationError(name + ": heads must divide the width");
}

Matrix MultiHeadAttention::forward(const Matrix& x) {
  qm_ = q.forward(x);
  km_ = k.forward(x);
  vm_ = v.forward(x);
  const auto n = x.rows();
  const int dk = static_cast<int>(x.cols()) / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  attn_.assign(heads, Matrix());
  Matrix out(n, x.cols());
  for (int h = 0; h < heads; ++h) {
    auto qh = qm_.middleCols(h * dk, dk);
    auto kh = km_.middleCols(h * dk, dk);
    auto vh = vm_.middleCols(h * dk, dk);
    Matrix s = (qh * kh.transpose()) * scale;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double mx = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - mx).exp();
      s.row(r) /= s.row(r).sum();
    }
    out.middleCols(h * dk, dk) = s * vh;
    attn_[h] = std::move(s);
  }
  return o.forward(out);
}

Matrix MultiHeadAttention::backward(const Matrix& dy) {
  Matrix dout = o.backward(dy);
  const auto n = dy.rows();
  const int dk = static_cast<int>(dy.cols()) / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Matrix dq(n, dy.cols()), dk_m(n, dy.cols()), dv(n, dy.cols());
  for (int h = 0; h < heads; ++h) {
    const Matrix& a = attn_[h];
    auto qh = qm_.middleCols(h * dk, dk);
    auto kh = km_.middleCols(h * dk, dk);
    auto vh = vm_.middleCols(h * dk, dk);
    auto doh = dout.middleCols(h * dk, dk);
    Matrix da = doh * vh.transpose();
    dv.middleCols(h * dk, dk) = a.transpose() * doh;
    Vector rs = da.cwiseProduct(a).rowwise().sum();
    Matrix ds = a.cwiseProduct(da - rs.replicate(1, n));
    dq.middleCols(h * dk, dk) = (ds * kh) * scale;
    dk_m.middleCols(h * dk, dk) = (ds.transpose() * qh) * scale;
  }
  Matrix dx = q.backward(dq);
  dx += k.backward(dk_m);
  dx += v.backward(dv);
  return dx;
}

void MultiHeadAttention::collect(ParamList& out) {
  q.collect(out);
  k.collect(out);
  v.collect(out);
  o.collect(out);
}

// ---------------------------------------------------------------- MLP / blocks

Mlp::Mlp(const std::string& name, int dim, int hidden, Rng& rng)
    : fc1(name + ".fc1", dim, hidden, rng), fc2(name + ".fc2", hidden, dim, rng) {}

Matrix Mlp::forward(const Matrix& x) {
  pre_ = fc1.forward(x);
  return fc2.forward(gelu(pre_));
}

Matrix Mlp::backward(const Matrix& dy) {
  return fc1.backward(gelu_backward(pre_, fc2.backward(dy)));
}

void Mlp::collect(ParamList& out) {
  fc1.collect(out);
  fc2.collect(out);
}

TransformerBlock::TransformerBlock(const std::string& name, int dim, int heads, int hidden,
                                   Rng& rng)
    : ln1(name + ".ln1", dim),
      ln2(name + ".ln2", dim),
      attn(name + ".attn", dim, heads, rng),
      mlp(name + ".mlp", dim, hidden, rng) {}

Matrix TransformerBlock::forward(const Matrix& x) {
  Matrix x1 = x + attn.forward(ln1.forward(x));
  return x1 + mlp.forward(ln2.forward(x1));
}

Matrix TransformerBlock::backward(const Matrix& dy) {
  Matrix dx1 = dy + ln2.backward(mlp.backward(dy));
  return dx1 + ln1.backward(attn.backward(dx1));
}

void TransformerBlock::collect(ParamList& out) {
  ln1.collect(out);
  attn.collect(out);
  ln2.collect(out);
  mlp.collect(out);
}

TransformerStack::TransformerStack(const std::string& name, int layers, int dim, int heads,
                                   int hidden, Rng& rng) {
  blocks.reserve(layers);
  for (int l = 0; l < layers; ++l)
    blocks.emplace_back(name + "." + std::to_string(l), dim, heads, hidden, rng);
}

Matrix TransformerStack::forward(const Matrix& x) {
  Matrix h = x;
  for (auto& b : blocks) h = b.forward(h);
  return h;
}

Matrix TransformerStack::backward(const Matrix& dy) {
  Matrix g = dy;
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g = it->backward(g);
  return g;
}

void TransformerStack::collect(ParamList& out) {
  for (auto& b : blocks) b.collect(out);
}

}  // namespace eegstate::nn
