#include "eegstate/config.hpp"
#include "eegstate/synth.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>

#include <filesystem>

using namespace eegstate;
namespace fs = std::filesystem;

namespace {

synth::SynthSpec small_spec(double snr, int per_state = 20) {
  synth::SynthSpec s;
  s.segments_per_state = per_state;
  s.snr = snr;
  s.seed = 3;
  return s;
}

// Welch two-sample t-test p-value.
double welch_p(const std::vector<double>& a, const std::vector<double>& b) {
  auto mv = [](const std::vector<double>& x) {
    double m = 0, v = 0;
    for (double e : x) m += e;
    m /= x.size();
    for (double e : x) v += (e - m) * (e - m);
    return std::pair{m, v / (x.size() - 1)};
  };
  auto [ma, va] = mv(a);
  auto [mb, vb] = mv(b);
  const double sa = va / a.size(), sb = vb / b.size();
  const double t = (ma - mb) / std::sqrt(sa + sb);
  const double df = (sa + sb) * (sa + sb) /
                    (sa * sa / (a.size() - 1) + sb * sb / (b.size() - 1));
  boost::math::students_t dist(df);
  return 2 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

// mean band power over the prior channels of `state`
double prior_band_power(const Segment& s, BrainState state, double lo, double hi) {
  const Vector w = state_prior(state, *s.montage);
  const Vector bp = synth::band_power(s.data, 200, lo, hi);
  return bp.dot(w) / std::max(w.sum(), 1e-12);
}

}  // namespace

TEST(Synth, DeterministicBalancedAndBounded) {
  const auto a = synth::generate_corpus(small_spec(2.0, 10));
  const auto b = synth::generate_corpus(small_spec(2.0, 10));
  ASSERT_EQ(a.size(), 30u);
  int counts[3] = {0, 0, 0};
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].recording.data, b[i].recording.data);
    ++counts[static_cast<int>(a[i].recording.state)];
    EXPECT_LE((a[i].recording.data * scale_factor(Unit::microvolt)).cwiseAbs().maxCoeff(), 10.0);
    EXPECT_EQ(a[i].recording.data.cols(), 2000);
  }
  EXPECT_EQ(counts[0], 10);
  EXPECT_EQ(counts[1], 10);
  EXPECT_EQ(counts[2], 10);
  EXPECT_THROW(synth::generate_corpus(small_spec(0.0)), ValidationError);
  auto bad = small_spec(1.0);
  bad.montages = {{"x", {"CZ", "NOPE"}}};
  EXPECT_THROW(synth::generate_corpus(bad), ValidationError);
}

TEST(Synth, LowSnrIndistinguishable) {
  const auto segs = synth::to_segments(synth::generate_corpus(small_spec(1e-6, 30)), 10).all();
  std::vector<double> affect, motor;
  for (const auto& s : segs) {
    if (s.state == BrainState::affect) affect.push_back(prior_band_power(s, BrainState::affect, 8, 12));
    if (s.state == BrainState::motor) motor.push_back(prior_band_power(s, BrainState::affect, 8, 12));
  }
  EXPECT_GT(welch_p(affect, motor), 0.01);
}

TEST(Synth, HighSnrSeparableByBandPowerProbe) {
  // nearest-centroid probe on log band power over each state's prior channels
  const auto split = synth::to_segments(synth::generate_corpus(small_spec(2.0, 40)), 10);
  auto features = [](const Segment& s) {
    Eigen::Vector3d f;
    f << std::log(prior_band_power(s, BrainState::affect, 8, 12)),
        std::log(prior_band_power(s, BrainState::motor, 10, 14)),
        std::log(prior_band_power(s, BrainState::others, 4, 7));
    return f;
  };
  Eigen::Matrix3d centroid = Eigen::Matrix3d::Zero();
  int n[3] = {0, 0, 0};
  for (const auto& s : split.train) {
    centroid.col(static_cast<int>(s.state)) += features(s);
    ++n[static_cast<int>(s.state)];
  }
  for (int k = 0; k < 3; ++k) centroid.col(k) /= n[k];
  int hit = 0, total = 0;
  for (const auto& s : split.test) {
    const Eigen::Vector3d f = features(s);
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if ((f - centroid.col(k)).norm() < (f - centroid.col(best)).norm()) best = k;
    hit += best == static_cast<int>(s.state);
    ++total;
  }
  ASSERT_GT(total, 0);
  EXPECT_GT(static_cast<double>(hit) / total, 0.95);
}

TEST(Synth, DiskRoundTripAndMontages) {
  auto spec = small_spec(1.0, 3);
  spec.montages = {synth::full_montage(), synth::montage_22()};
  const auto items = synth::generate_corpus(spec);
  EXPECT_EQ(items.size(), 18u);
  const fs::path dir = fs::temp_directory_path() / "eegstate_synth_test";
  fs::remove_all(dir);
  synth::write_corpus(dir, items);
  const LoadedCorpus c = load_corpus(dir / "manifest.tsv", 10);
  EXPECT_EQ(c.segments.size(), 18u);
  EXPECT_EQ(c.rejected_amplitude, 0);
  std::set<int> widths;
  for (const auto& s : c.segments) widths.insert(static_cast<int>(s.data.rows()));
  EXPECT_EQ(widths, (std::set<int>{22, 60}));
}

TEST(Synth, PinkNoiseSlope) {
  nn::Rng rng(0);
  const RowVector x = synth::pink_noise(20000, 200, 2.0, rng);
  EXPECT_NEAR(std::sqrt(x.squaredNorm() / x.size()), 1.0, 1e-12);
  Matrix m(1, x.size());
  m.row(0) = x;
  // band_power is a per-bin mean, i.e. a density: ratio of mean 1/f^2 over
  // 2-4 Hz and 16-32 Hz is (1/4 / 2) / (1/32 / 16) = 64
  const double low = synth::band_power(m, 200, 2, 4)(0);
  const double high = synth::band_power(m, 200, 16, 32)(0);
  EXPECT_GT(low / high, 20.0);
  EXPECT_LT(low / high, 200.0);
}

TEST(Config, DefaultsRoundTrip) {
  const RunConfig d = default_config();
  const RunConfig p = parse_config(render_config(d));
  EXPECT_EQ(*p.model, *d.model);
  EXPECT_EQ(p.pretrain->peak_lr, 1e-4);
  EXPECT_EQ(p.pretrain->epochs, 30);
  EXPECT_EQ(p.pretrain->adamw.beta2, 0.98);
  EXPECT_EQ(p.pretrain->grad_clip, 3.0);
  EXPECT_EQ(p.model->encoder.conv_kernel, (std::vector<int>{15, 3, 3}));
  EXPECT_EQ(p.finetune->seeds, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(render_config(p), render_config(d));
}

TEST(Config, SchemaErrorsCarryKeyPath) {
  const std::string text = render_config(default_config());
  auto drop = [&](const std::string& line) {
    std::string t = text;
    const auto pos = t.find(line);
    EXPECT_NE(pos, std::string::npos) << line;
    t.erase(pos, t.find('\n', pos) - pos + 1);
    return t;
  };
  try {
    parse_config(drop("patch_len"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "encoder.patch_len");
  }
  try {
    parse_config(text + "\n[pretrain_extra]\nx = 1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "pretrain_extra");
  }
  std::string bad = text;
  bad.replace(bad.find("mask_ratio = "), 0, "mask_ratioo = 1\n");
  EXPECT_THROW(parse_config(bad), ConfigError);
  std::string heads = text;
  const auto pos = heads.find("heads = ");
  heads.replace(pos, heads.find('\n', pos) - pos, "heads = 5");
  try {
    parse_config(heads);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key().rfind("encoder", 0), 0u);
  }
  try {
    parse_config("[finetune]\nepochs = 3\n", {"finetune"});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key().rfind("finetune.", 0), 0u);
  }
  EXPECT_THROW(parse_config("", {"pretrain"}), ConfigError);
}
