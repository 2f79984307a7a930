#include "eegstate/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace eegstate {

using nn::gelu;
using nn::gelu_grad;

namespace {

Matrix gelu_backward(const Matrix& pre, const Matrix& dy) {
  return dy.cwiseProduct(pre.unaryExpr([](double v) { return gelu_grad(v); }));
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError("encoder config: " + msg);
}

}  // namespace

int EncoderConfig::min_length() const {
  int k = *std::max_element(conv_kernel.begin(), conv_kernel.end());
  return std::max(k, patch_len);
}

void EncoderConfig::validate() const {
  const size_t n = conv_out.size();
  require(n >= 1, "at least one temporal conv block");
  require(conv_in.size() == n && conv_kernel.size() == n && conv_stride.size() == n &&
              conv_padding.size() == n,
          "temporal block lists must have equal length");
  require(conv_in[0] == 1, "first temporal block takes one input channel");
  for (size_t i = 0; i < n; ++i) {
    require(conv_out[i] > 0 && conv_kernel[i] > 0, "temporal counts must be positive");
    if (i > 0) require(conv_in[i] == conv_out[i - 1], "temporal block widths must chain");
    require(conv_stride[i] == 1, "temporal strides must be 1 to preserve length");
    require(2 * conv_padding[i] == conv_kernel[i] - 1,
            "temporal padding must be (kernel-1)/2 to preserve length");
    require(conv_out[i] % norm_groups == 0, "norm_groups must divide every temporal width");
  }
  require(channel_filters > 0 && region_filters > 0, "filter counts must be positive");
  require(channel_filters % norm_groups == 0 && region_filters % norm_groups == 0,
          "norm_groups must divide the filter counts");
  require(patch_len >= 1 && patch_stride >= 1, "patch length and stride must be >= 1");
  require(dim > 0 && layers >= 0 && ff_dim > 0 && max_patches > 0, "counts must be positive");
  require(heads > 0 && dim % heads == 0, "heads must divide dim");
  require(norm_groups > 0, "norm_groups must be positive");
}

int num_patches(int length, int patch_len, int patch_stride) {
  if (patch_len < 1 || patch_stride < 1) throw ValidationError("patch length/stride must be >= 1");
  if (length < patch_len)
    throw ShapeError("sequence of length " + std::to_string(length) + " is shorter than patch " +
                     std::to_string(patch_len));
  return (length - patch_len) / patch_stride + 1;
}

Matrix assemble_spatial(const Matrix& h_channel, const Matrix& h_region, int temporal_depth) {
  if (h_channel.cols() != h_region.cols())
    throw ShapeError("assemble_spatial: channel and region feature widths differ");
  if (temporal_depth <= 0 || h_channel.cols() % temporal_depth != 0)
    throw ShapeError("assemble_spatial: width is not a multiple of the temporal depth");
  const auto length = h_channel.cols() / temporal_depth;
  const auto filters = h_channel.rows() + h_region.rows();
  Matrix stacked(filters, h_channel.cols());
  stacked << h_channel, h_region;
  // Row-major storage makes (filters x K_T*T) and (filters*K_T x T) the same buffer.
  return Eigen::Map<const Matrix>(stacked.data(), filters * temporal_depth, length);
}

std::pair<Matrix, Matrix> split_spatial(const Matrix& h_spatial, int channel_filters,
                                        int temporal_depth) {
  if (h_spatial.rows() % temporal_depth != 0)
    throw ShapeError("split_spatial: rows are not a multiple of the temporal depth");
  const auto filters = h_spatial.rows() / temporal_depth;
  Eigen::Map<const Matrix> view(h_spatial.data(), filters, h_spatial.cols() * temporal_depth);
  return {view.topRows(channel_filters), view.bottomRows(filters - channel_filters)};
}

Matrix patchify(const Matrix& h_spatial, int patch_len, int patch_stride) {
  const int length = static_cast<int>(h_spatial.cols());
  const int n = num_patches(length, patch_len, patch_stride);
  const auto rows = h_spatial.rows();
  Matrix out(n, rows * patch_len);
  for (int i = 0; i < n; ++i)
    for (Eigen::Index r = 0; r < rows; ++r)
      out.row(i).segment(r * patch_len, patch_len) =
          h_spatial.row(r).segment(static_cast<Eigen::Index>(i) * patch_stride, patch_len);
  return out;
}

Matrix flatten_temporal(const Matrix& h_temp, int channels, int length) {
  const auto depth = h_temp.rows();
  if (h_temp.cols() != static_cast<Eigen::Index>(channels) * length)
    throw ShapeError("flatten_temporal: width mismatch");
  Matrix out(channels, depth * length);
  for (Eigen::Index k = 0; k < depth; ++k)
    for (int c = 0; c < channels; ++c)
      out.row(c).segment(k * length, length) = h_temp.row(k).segment(c * length, length);
  return out;
}

Matrix unflatten_temporal(const Matrix& h_flat, int temporal_depth, int length) {
  const auto channels = h_flat.rows();
  Matrix out(temporal_depth, channels * length);
  for (int k = 0; k < temporal_depth; ++k)
    for (Eigen::Index c = 0; c < channels; ++c)
      out.row(k).segment(c * length, length) = h_flat.row(c).segment(k * length, length);
  return out;
}

MontageMap canonical_montage(const MontageMap& map) {
  const IndexList order = map.canonical_order();
  IndexList new_pos(order.size());
  for (size_t i = 0; i < order.size(); ++i) new_pos[order[i]] = static_cast<int>(i);
  MontageMap out;
  out.unique_regions = map.unique_regions;
  out.dropped = map.dropped;
  for (int old : order) {
    out.template_indices.push_back(map.template_indices[old]);
    out.region_labels.push_back(map.region_labels[old]);
    out.kept.push_back(map.kept[old]);
    out.channel_names.push_back(map.channel_names[old]);
  }
  for (const auto& members : map.region_members) {
    IndexList m;
    for (int c : members) m.push_back(new_pos[c]);
    std::sort(m.begin(), m.end());
    out.region_members.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------- Encoder

Encoder::Encoder(const EncoderConfig& config, const std::string& name, nn::Rng& rng)
    : config_(config), name_(name) {
  config_.validate();
  for (size_t i = 0; i < config_.conv_out.size(); ++i) {
    const std::string p = name + ".temporal." + std::to_string(i);
    convs.emplace_back(p + ".conv", config_.conv_in[i], config_.conv_out[i],
                       config_.conv_kernel[i], config_.conv_padding[i], rng);
    conv_norms.emplace_back(p + ".norm", config_.conv_out[i], config_.norm_groups);
  }
  channel_bank = nn::Param(name + ".spatial.channel_bank",
                           Matrix(kTemplateChannels, config_.channel_filters));
  region_bank = nn::Param(name + ".spatial.region_bank",
                          Matrix(kTemplateRegions, config_.region_filters));
  nn::init_trunc_normal(channel_bank.value, 0.02, rng);
  nn::init_trunc_normal(region_bank.value, 0.02, rng);
  channel_norm = nn::GroupNorm(name + ".spatial.channel_norm", config_.channel_filters,
                               config_.norm_groups);
  region_norm = nn::GroupNorm(name + ".spatial.region_norm", config_.region_filters,
                              config_.norm_groups);
  embed_weight = nn::Param(name + ".embed.weight", Matrix(config_.dim, config_.patch_features()));
  embed_bias = nn::Param(name + ".embed.bias", Matrix::Zero(1, config_.dim), false);
  pos_embed = nn::Param(name + ".embed.pos", Matrix(config_.max_patches, config_.dim), false);
  nn::init_trunc_normal(embed_weight.value, 0.02, rng);
  nn::init_trunc_normal(pos_embed.value, 0.02, rng);
  transformer = nn::TransformerStack(name + ".transformer", config_.layers, config_.dim,
                                     config_.heads, config_.ff_dim, rng);
}

Matrix Encoder::temporal_encode(const Matrix& x) {
  const int length = static_cast<int>(x.cols());
  if (length < *std::max_element(config_.conv_kernel.begin(), config_.conv_kernel.end()))
    throw ShapeError(name_ + ": signal length " + std::to_string(length) +
                     " is below the largest temporal kernel");
  channels_ = static_cast<int>(x.rows());
  length_ = length;
  Matrix h = Eigen::Map<const Matrix>(x.data(), 1, x.size());
  conv_pre_act_.resize(convs.size());
  for (size_t i = 0; i < convs.size(); ++i) {
    Matrix conv = convs[i].forward(h, length);
    conv_pre_act_[i] = conv_norms[i].forward(conv, static_cast<int>(conv.cols()));
    h = gelu(conv_pre_act_[i]);
  }
  return h;
}

Matrix Encoder::channel_spatial(const Matrix& h_flat, const MontageMap& map) {
  if (h_flat.rows() != map.num_channels())
    throw ShapeError(name_ + ": feature rows do not match the montage channel count");
  channel_rows_ = map.template_indices;
  Matrix selected(map.num_channels(), config_.channel_filters);
  for (int c = 0; c < map.num_channels(); ++c) {
    const int idx = channel_rows_[c];
    if (idx < 0 || idx >= kTemplateChannels)
      throw ValidationError(name_ + ": template index out of range");
    selected.row(c) = channel_bank.value.row(idx);
  }
  h_flat_ = h_flat;
  Matrix pre = selected.transpose() * h_flat;
  channel_pre_act_ = channel_norm.forward(pre, static_cast<int>(pre.cols()));
  return gelu(channel_pre_act_);
}

Matrix Encoder::region_spatial(const Matrix& h_flat, const MontageMap& map) {
  region_mean_ = region_reduce(map, h_flat);
  region_rows_ = map.unique_regions;
  region_members_ = map.region_members;
  Matrix selected(map.num_regions(), config_.region_filters);
  for (int j = 0; j < map.num_regions(); ++j) {
    const int idx = region_rows_[j];
    if (idx < 0 || idx >= kTemplateRegions)
      throw ValidationError(name_ + ": region index out of range");
    selected.row(j) = region_bank.value.row(idx);
  }
  Matrix pre = selected.transpose() * region_mean_;
  region_pre_act_ = region_norm.forward(pre, static_cast<int>(pre.cols()));
  return gelu(region_pre_act_);
}

Matrix Encoder::patchify_embed(const Matrix& h_spatial) {
  if (h_spatial.rows() != config_.spatial_rows())
    throw ShapeError(name_ + ": spatial map has " + std::to_string(h_spatial.rows()) +
                     " rows, expected " + std::to_string(config_.spatial_rows()));
  patches_ = patchify(h_spatial, config_.patch_len, config_.patch_stride);
  n_patches_ = static_cast<int>(patches_.rows());
  if (n_patches_ > config_.max_patches)
    throw ShapeError(name_ + ": " + std::to_string(n_patches_) +
                     " patches exceed the positional table of " +
                     std::to_string(config_.max_patches));
  Matrix tokens = patches_ * embed_weight.value.transpose();
  tokens.rowwise() += embed_bias.value.row(0);
  tokens += pos_embed.value.topRows(n_patches_);
  return tokens;
}

Matrix Encoder::transformer_encode(const Matrix& tokens) {
  if (tokens.cols() != config_.dim) throw ShapeError(name_ + ": token width differs from dim");
  return transformer.forward(tokens);
}

Matrix Encoder::encode(const Matrix& x, const MontageMap& map) {
  if (x.rows() != map.num_channels())
    throw ShapeError(name_ + ": signal has " + std::to_string(x.rows()) + " rows, montage has " +
                     std::to_string(map.num_channels()));
  if (x.cols() < config_.min_length())
    throw ShapeError(name_ + ": signal length " + std::to_string(x.cols()) +
                     " below minimum " + std::to_string(config_.min_length()));
  order_ = map.canonical_order();
  const MontageMap canon = canonical_montage(map);
  Matrix xc(x.rows(), x.cols());
  for (size_t i = 0; i < order_.size(); ++i) xc.row(static_cast<Eigen::Index>(i)) = x.row(order_[i]);

  Matrix h_temp = temporal_encode(xc);
  Matrix h_flat = flatten_temporal(h_temp, channels_, length_);
  Matrix hc = channel_spatial(h_flat, canon);
  Matrix hr = region_spatial(h_flat, canon);
  Matrix tokens = patchify_embed(assemble_spatial(hc, hr, config_.temporal_depth()));
  return transformer_encode(tokens);
}

Matrix Encoder::backward_patchify(const Matrix& d_tokens) {
  embed_weight.grad.noalias() += d_tokens.transpose() * patches_;
  embed_bias.grad.row(0) += d_tokens.colwise().sum();
  pos_embed.grad.topRows(n_patches_) += d_tokens;
  Matrix d_patches = d_tokens * embed_weight.value;
  const int rows = config_.spatial_rows();
  const int p_len = config_.patch_len;
  Matrix d_spatial = Matrix::Zero(rows, length_);
  for (int i = 0; i < n_patches_; ++i)
    for (int r = 0; r < rows; ++r)
      d_spatial.row(r).segment(static_cast<Eigen::Index>(i) * config_.patch_stride, p_len) +=
          d_patches.row(i).segment(static_cast<Eigen::Index>(r) * p_len, p_len);
  return d_spatial;
}

Matrix Encoder::backward_channel(const Matrix& d_hc) {
  Matrix d_pre = channel_norm.backward(gelu_backward(channel_pre_act_, d_hc));
  Matrix d_selected = h_flat_ * d_pre.transpose();  // C x K_C
  Matrix selected(channel_rows_.size(), config_.channel_filters);
  for (size_t c = 0; c < channel_rows_.size(); ++c) {
    channel_bank.grad.row(channel_rows_[c]) += d_selected.row(static_cast<Eigen::Index>(c));
    selected.row(static_cast<Eigen::Index>(c)) = channel_bank.value.row(channel_rows_[c]);
  }
  return selected * d_pre;
}

Matrix Encoder::backward_region(const Matrix& d_hr) {
  Matrix d_pre = region_norm.backward(gelu_backward(region_pre_act_, d_hr));
  Matrix d_selected = region_mean_ * d_pre.transpose();  // |R| x K_R
  Matrix selected(region_rows_.size(), config_.region_filters);
  for (size_t j = 0; j < region_rows_.size(); ++j) {
    region_bank.grad.row(region_rows_[j]) += d_selected.row(static_cast<Eigen::Index>(j));
    selected.row(static_cast<Eigen::Index>(j)) = region_bank.value.row(region_rows_[j]);
  }
  Matrix d_mean = selected * d_pre;
  Matrix d_flat = Matrix::Zero(channels_, d_mean.cols());
  for (size_t j = 0; j < region_members_.size(); ++j) {
    const double inv = 1.0 / static_cast<double>(region_members_[j].size());
    for (int c : region_members_[j]) d_flat.row(c) += d_mean.row(static_cast<Eigen::Index>(j)) * inv;
  }
  return d_flat;
}

Matrix Encoder::backward_temporal(const Matrix& d_temp) {
  Matrix g = d_temp;
  for (size_t i = convs.size(); i-- > 0;) {
    g = gelu_backward(conv_pre_act_[i], g);
    g = conv_norms[i].backward(g);
    g = convs[i].backward(g);
  }
  return g;  // 1 x C*T
}

Matrix Encoder::backward(const Matrix& d_tokens) {
  if (d_tokens.rows() != n_patches_ || d_tokens.cols() != config_.dim)
    throw ShapeError(name_ + ": token gradient shape differs from the last forward");
  Matrix d_embedded = transformer.backward(d_tokens);
  Matrix d_spatial = backward_patchify(d_embedded);
  auto [d_hc, d_hr] = split_spatial(d_spatial, config_.channel_filters, config_.temporal_depth());
  Matrix d_flat = backward_channel(d_hc);
  d_flat += backward_region(d_hr);
  Matrix d_temp = unflatten_temporal(d_flat, config_.temporal_depth(), length_);
  Matrix d_x = backward_temporal(d_temp);
  Eigen::Map<const Matrix> dxc(d_x.data(), channels_, length_);
  Matrix out(channels_, length_);
  for (size_t i = 0; i < order_.size(); ++i) out.row(order_[i]) = dxc.row(static_cast<Eigen::Index>(i));
  return out;
}

void Encoder::release() {
  conv_pre_act_.clear();
  h_flat_.resize(0, 0);
  region_mean_.resize(0, 0);
  channel_pre_act_.resize(0, 0);
  region_pre_act_.resize(0, 0);
  patches_.resize(0, 0);
  for (auto& c : convs) c.release();
}

void Encoder::collect(nn::ParamList& out) {
  for (size_t i = 0; i < convs.size(); ++i) {
    convs[i].collect(out);
    conv_norms[i].collect(out);
  }
  out.push_back(&channel_bank);
  out.push_back(&region_bank);
  channel_norm.collect(out);
  region_norm.collect(out);
  out.push_back(&embed_weight);
  out.push_back(&embed_bias);
  out.push_back(&pos_embed);
  transformer.collect(out);
}

nn::ParamList Encoder::params() {
  nn::ParamList out;
  collect(out);
  return out;
}

}  // namespace eegstate
