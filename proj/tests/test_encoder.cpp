#include "eegstate/encoder.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace eegstate;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.conv_in = {1, 4, 4};
  c.conv_out = {4, 4, 4};
  c.channel_filters = 4;
  c.region_filters = 4;
  c.dim = 16;
  c.heads = 4;
  c.ff_dim = 32;
  c.layers = 2;
  c.norm_groups = 2;
  return c;
}

// naive reference: groups of contiguous rows, statistics over the whole block
Matrix group_norm_oracle(const Matrix& x, int groups, double eps = 1e-5) {
  const auto per = x.rows() / groups;
  Matrix out(x.rows(), x.cols());
  for (int g = 0; g < groups; ++g) {
    double mean = 0, var = 0;
    const double n = static_cast<double>(per * x.cols());
    for (Eigen::Index r = g * per; r < (g + 1) * per; ++r)
      for (Eigen::Index t = 0; t < x.cols(); ++t) mean += x(r, t);
    mean /= n;
    for (Eigen::Index r = g * per; r < (g + 1) * per; ++r)
      for (Eigen::Index t = 0; t < x.cols(); ++t) var += (x(r, t) - mean) * (x(r, t) - mean);
    var /= n;
    for (Eigen::Index r = g * per; r < (g + 1) * per; ++r)
      for (Eigen::Index t = 0; t < x.cols(); ++t) out(r, t) = (x(r, t) - mean) / std::sqrt(var + eps);
  }
  return out;
}

std::vector<std::string> template_names(const IndexList& idx) {
  std::vector<std::string> out;
  for (int i : idx) out.push_back(UniversalTemplate::builtin().channel_names()[i]);
  return out;
}

}  // namespace

TEST(Shapes, PatchCountFormula) {
  EXPECT_EQ(num_patches(2000, 20, 20), 100);
  EXPECT_EQ(num_patches(20, 20, 20), 1);
  EXPECT_EQ(num_patches(39, 20, 20), 1);
  EXPECT_THROW(num_patches(19, 20, 20), ShapeError);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const int p = 1 + static_cast<int>(rng() % 50), s = 1 + static_cast<int>(rng() % 50);
    const int t = p + static_cast<int>(rng() % 3000);
    int count = 0;  // enumerate window starts
    for (int start = 0; start + p <= t; start += s) ++count;
    EXPECT_EQ(num_patches(t, p, s), count);
  }
}

TEST(Shapes, FullSizeTemporalAndSpatial) {
  nn::Rng rng(0);
  Encoder enc(EncoderConfig{}, "full", rng);
  const Matrix x = Matrix::Random(22, 800);
  const Matrix h = enc.temporal_encode(x);
  EXPECT_EQ(h.rows(), 32);
  EXPECT_EQ(h.cols(), 22 * 800);
  EXPECT_EQ(EncoderConfig{}.spatial_rows(), 2048);
  const Matrix hs = assemble_spatial(Matrix::Zero(32, 32 * 2000), Matrix::Zero(32, 32 * 2000), 32);
  EXPECT_EQ(hs.rows(), 2048);
  EXPECT_EQ(hs.cols(), 2000);
}

TEST(Temporal, ZeroInputAndChannelIndependence) {
  nn::Rng rng(1);
  Encoder enc(small_config(), "e", rng);
  EXPECT_TRUE(enc.temporal_encode(Matrix::Zero(3, 50)).isZero(0.0));
  Matrix x = Matrix::Random(3, 60);
  x.row(2) = x.row(0);
  const Matrix h = enc.temporal_encode(x);
  EXPECT_EQ(h.middleCols(0, 60), h.middleCols(120, 60));
  EXPECT_THROW(enc.temporal_encode(Matrix::Zero(2, 4)), ShapeError);
}

TEST(Spatial, ChannelRetrievalFixtures) {
  nn::Rng rng(2);
  Encoder enc(small_config(), "e", rng);
  const auto map = resolve_montage({"C3"});
  const int idx = map.template_indices[0];
  Matrix h = Matrix::Random(1, 4 * 30);

  enc.channel_bank.value.setZero();
  EXPECT_TRUE(enc.channel_spatial(h, map).isZero(0.0));

  // one filter sees the raw row; the rest stay zero
  enc.channel_bank.value.setZero();
  enc.channel_bank.value(idx, 1) = 1.0;
  Matrix pre = Matrix::Zero(4, h.cols());
  pre.row(1) = h.row(0);
  EXPECT_TRUE(enc.channel_spatial(h, map).isApprox(nn::gelu(group_norm_oracle(pre, 2)), 1e-12));
}

TEST(Spatial, ChannelPermutationWithIndices) {
  nn::Rng rng(3);
  Encoder enc(small_config(), "e", rng);
  const IndexList pick{4, 17, 29, 33, 50};
  const auto a = resolve_montage(template_names(pick));
  IndexList perm{3, 0, 4, 1, 2};
  IndexList picked;
  for (int p : perm) picked.push_back(pick[p]);
  const auto b = resolve_montage(template_names(picked));
  Matrix h = Matrix::Random(5, 4 * 25), hb(5, h.cols());
  for (int i = 0; i < 5; ++i) hb.row(i) = h.row(perm[i]);
  EXPECT_TRUE(enc.channel_spatial(h, a).isApprox(enc.channel_spatial(hb, b), 1e-12));
  EXPECT_TRUE(enc.region_spatial(h, a).isApprox(enc.region_spatial(hb, b), 1e-12));
}

TEST(Spatial, RegionFixtures) {
  nn::Rng rng(4);
  Encoder enc(small_config(), "e", rng);
  // C3 and C1 both sit in C_L
  const auto map = resolve_montage({"C3", "C1"});
  ASSERT_EQ(map.num_regions(), 1);
  const int r = map.unique_regions[0];
  Matrix h = Matrix::Random(2, 4 * 20);
  const Matrix mean = (h.row(0) + h.row(1)) / 2.0;
  Matrix pre = enc.region_bank.value.row(r).transpose() * mean;  // outer product
  EXPECT_TRUE(enc.region_spatial(h, map).isApprox(nn::gelu(group_norm_oracle(pre, 2)), 1e-12));

  // a third channel equal to the region mean leaves the output unchanged
  const auto map3 = resolve_montage({"C3", "C1", "C5"});
  Matrix h3(3, h.cols());
  h3 << h, mean;
  EXPECT_TRUE(enc.region_spatial(h3, map3).isApprox(enc.region_spatial(h, map), 1e-12));

  // one-hot filters: pre-activation rows are the present regions' means
  const auto map2 = resolve_montage({"FP1", "O2"});
  enc.region_bank.value.setZero();
  enc.region_bank.value(map2.unique_regions[0], 0) = 1.0;
  enc.region_bank.value(map2.unique_regions[1], 2) = 1.0;
  Matrix h2 = Matrix::Random(2, 4 * 20), pre2 = Matrix::Zero(4, h2.cols());
  pre2.row(0) = h2.row(0);
  pre2.row(2) = h2.row(1);
  EXPECT_TRUE(enc.region_spatial(h2, map2).isApprox(nn::gelu(group_norm_oracle(pre2, 2)), 1e-12));
}

TEST(Spatial, AssembleGoldenOrder) {
  // K_C = 2, K_R = 1, K_T = 2, T = 3; value encodes (filter, depth, time)
  Matrix hc(2, 6), hr(1, 6);
  for (int f = 0; f < 3; ++f)
    for (int k = 0; k < 2; ++k)
      for (int t = 0; t < 3; ++t) (f < 2 ? hc(f, k * 3 + t) : hr(0, k * 3 + t)) = 100 * f + 10 * k + t;
  const Matrix hs = assemble_spatial(hc, hr, 2);
  const Matrix golden = (Matrix(6, 3) << 0, 1, 2,  //
                         10, 11, 12,               //
                         100, 101, 102,            //
                         110, 111, 112,            //
                         200, 201, 202,            //
                         210, 211, 212)
                            .finished();
  EXPECT_EQ(hs, golden);
  auto [c, r] = split_spatial(hs, 2, 2);
  EXPECT_EQ(c, hc);
  EXPECT_EQ(r, hr);
  EXPECT_THROW(assemble_spatial(hc, Matrix::Zero(1, 4), 2), ShapeError);
}

TEST(Patchify, GoldenLayout) {
  Matrix hs(2, 7);
  for (int r = 0; r < 2; ++r)
    for (int t = 0; t < 7; ++t) hs(r, t) = 10 * r + t;
  const Matrix p = patchify(hs, 3, 2);  // starts 0, 2, 4
  ASSERT_EQ(p.rows(), 3);
  ASSERT_EQ(p.cols(), 6);
  EXPECT_EQ(p.row(1), (RowVector(6) << 2, 3, 4, 12, 13, 14).finished());
}

TEST(Transformer, SingleTokenAndEquivariance) {
  nn::Rng rng(5);
  Encoder enc(small_config(), "e", rng);
  const Matrix one = Matrix::Random(1, 16);
  EXPECT_EQ(enc.transformer_encode(one).rows(), 1);
  Matrix tokens = Matrix::Random(9, 16);
  const Matrix out = enc.transformer_encode(tokens);
  IndexList perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix pt(9, 16);
  for (int i = 0; i < 9; ++i) pt.row(i) = tokens.row(perm[i]);
  const Matrix pout = enc.transformer_encode(pt);
  for (int i = 0; i < 9; ++i) EXPECT_TRUE(pout.row(i).isApprox(out.row(perm[i]), 1e-12));
  EXPECT_THROW(enc.transformer_encode(Matrix::Zero(2, 8)), ShapeError);
}

TEST(Encode, MontageFlexibleShapes) {
  nn::Rng rng(6);
  Encoder enc(small_config(), "e", rng);
  const auto full = resolve_montage(UniversalTemplate::builtin().channel_names());
  const auto few = resolve_montage({"FP1", "CZ", "O2"});
  EXPECT_EQ(enc.encode(Matrix::Random(60, 200), full).rows(), 10);
  const Matrix z = enc.encode(Matrix::Random(3, 200), few);
  EXPECT_EQ(z.rows(), 10);
  EXPECT_EQ(z.cols(), 16);
  EXPECT_THROW(enc.encode(Matrix::Random(4, 200), few), ShapeError);
}

TEST(Encode, ChannelPermutationBitExact) {
  nn::Rng rng(7);
  Encoder enc(small_config(), "e", rng);
  const IndexList pick{0, 9, 13, 27, 31, 45, 52, 58};
  Matrix x = Matrix::Random(8, 120);
  const Matrix za = enc.encode(x, resolve_montage(template_names(pick)));
  IndexList perm{5, 2, 7, 0, 1, 6, 3, 4};
  IndexList pp;
  Matrix xp(8, 120);
  for (int i = 0; i < 8; ++i) {
    pp.push_back(pick[perm[i]]);
    xp.row(i) = x.row(perm[i]);
  }
  EXPECT_EQ(enc.encode(xp, resolve_montage(template_names(pp))), za);
}

TEST(Encode, RetrievalLocality) {
  nn::Rng rng(8);
  Encoder enc(small_config(), "e", rng);
  const auto map = resolve_montage({"F3", "F4", "CZ", "PZ", "O1"});
  const Matrix z = enc.encode(Matrix::Random(5, 100), map);
  for (auto* p : enc.params()) p->zero_grad();
  enc.backward(Matrix::Random(z.rows(), z.cols()));
  std::vector<bool> used_ch(60, false), used_reg(24, false);
  for (int i : map.template_indices) used_ch[i] = true;
  for (int r : map.unique_regions) used_reg[r] = true;
  for (int c = 0; c < 60; ++c) {
    if (used_ch[c]) EXPECT_GT(enc.channel_bank.grad.row(c).norm(), 0.0);
    else EXPECT_EQ(enc.channel_bank.grad.row(c).norm(), 0.0);
  }
  for (int r = 0; r < 24; ++r) {
    if (used_reg[r]) EXPECT_GT(enc.region_bank.grad.row(r).norm(), 0.0);
    else EXPECT_EQ(enc.region_bank.grad.row(r).norm(), 0.0);
  }
}

TEST(Config, Validation) {
  EncoderConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.heads = 5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config();
  c.conv_stride = {2, 1, 1};
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config();
  c.patch_stride = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_NO_THROW(EncoderConfig{}.validate());
}
