#include "eegstate/objectives.hpp"

#include "eegstate/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace eegstate {

IndexList MaskPlan::time_offsets() const {
  IndexList off(length, -1);
  for (int i : masked_patches) {
    const int start = i * patch_stride;
    for (int p = 0; p < patch_len && start + p < length; ++p) off[start + p] = p;
  }
  return off;
}

IndexList MaskPlan::masked_times() const {
  IndexList out;
  const IndexList off = time_offsets();
  for (int t = 0; t < length; ++t)
    if (off[t] >= 0) out.push_back(t);
  return out;
}

MaskPlan plan_mask(int length, int patch_len, int patch_stride, double ratio, nn::Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ValidationError("mask ratio must lie in [0,1]");
  MaskPlan plan;
  plan.num_patches = num_patches(length, patch_len, patch_stride);
  plan.ratio = ratio;
  plan.patch_len = patch_len;
  plan.patch_stride = patch_stride;
  plan.length = length;
  const int count = static_cast<int>(std::floor(ratio * plan.num_patches + 1e-12));
  // Partial Fisher-Yates; the draw sequence depends only on the rng state.
  IndexList idx(plan.num_patches);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, plan.num_patches - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  plan.masked_patches.assign(idx.begin(), idx.begin() + count);
  std::sort(plan.masked_patches.begin(), plan.masked_patches.end());
  return plan;
}

Matrix apply_mask(const Matrix& x, const MaskPlan& plan, const RowVector& mask_embedding) {
  if (x.cols() != plan.length) throw ShapeError("apply_mask: signal length differs from plan");
  if (mask_embedding.size() != plan.patch_len)
    throw ShapeError("apply_mask: mask embedding length must equal the patch length");
  for (int i : plan.masked_patches)
    if (i < 0 || i >= plan.num_patches) throw ValidationError("apply_mask: patch index out of range");
  Matrix out = x;
  const IndexList off = plan.time_offsets();
  for (int t = 0; t < plan.length; ++t)
    if (off[t] >= 0) out.col(t).setConstant(mask_embedding[off[t]]);
  return out;
}

RowVector mask_embedding_grad(const Matrix& d_masked, const MaskPlan& plan) {
  RowVector g = RowVector::Zero(plan.patch_len);
  const IndexList off = plan.time_offsets();
  for (int t = 0; t < plan.length; ++t)
    if (off[t] >= 0) g[off[t]] += d_masked.col(t).sum();
  return g;
}

double weight_schedule(double w, int epoch) {
  return 0.5 + 1.0 / (1.0 + std::exp(-static_cast<double>(epoch) * (w - 0.5)));
}

Vector weight_schedule(const Vector& w, int epoch) {
  return w.unaryExpr([epoch](double v) { return weight_schedule(v, epoch); });
}

RecLoss loss_rec(const Matrix& x, const Matrix& x_hat, const IndexList& masked_times,
                 const Vector& channel_weights) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols())
    throw ShapeError("loss_rec: target and reconstruction shapes differ");
  if (channel_weights.size() != x.rows()) throw ShapeError("loss_rec: one weight per channel");
  RecLoss out;
  out.grad = Matrix::Zero(x.rows(), x.cols());
  if (masked_times.empty()) return out;
  const double count = static_cast<double>(x.rows()) * static_cast<double>(masked_times.size());
  double sum = 0.0;
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    const double w = channel_weights[c];
    for (int t : masked_times) {
      const double e = x_hat(c, t) - x(c, t);
      sum += w * e * e;
      out.grad(c, t) = 2.0 * w * e / count;
    }
  }
  out.value = sum / count;
  return out;
}

double cosine(const RowVector& a, const RowVector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

namespace {

// d cos(a,b) / d a
RowVector cosine_grad(const RowVector& a, const RowVector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return RowVector::Zero(a.size());
  const double c = a.dot(b) / (na * nb);
  return b / (na * nb) - c * a / (na * na);
}

}  // namespace

DecLoss loss_dec(const RowVector& shared, const RowVector& active,
                 const std::vector<RowVector>& inactive, double margin) {
  if (shared.size() != active.size()) throw ShapeError("loss_dec: pooled widths differ");
  DecLoss out;
  out.grad_shared = RowVector::Zero(shared.size());
  out.grad_active = RowVector::Zero(active.size());

  const double c0 = cosine(shared, active);
  out.cosines.push_back(c0);
  if (c0 - margin > 0.0) {
    out.value += c0 - margin;
    out.grad_shared += cosine_grad(shared, active);
    out.grad_active += cosine_grad(active, shared);
  }
  for (const auto& z : inactive) {
    if (z.size() != active.size()) throw ShapeError("loss_dec: pooled widths differ");
    const double c = cosine(active, z);
    out.cosines.push_back(c);
    if (c - margin > 0.0) {
      out.value += c - margin;
      out.grad_active += cosine_grad(active, z);
    }
  }
  return out;
}

RowVector pool_tokens(const Matrix& tokens) { return tokens.colwise().mean(); }

}  // namespace eegstate
