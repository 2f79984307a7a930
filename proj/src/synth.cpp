#include "eegstate/synth.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>

namespace eegstate::synth {
namespace {

constexpr double kClip = 9.99;
constexpr int kLatentSources = 8;
constexpr double kSourceWidth = 0.5;
constexpr double kLowCut = 0.5;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(splitmix64(splitmix64(seed ^ splitmix64(a)) ^ b) ^ c);
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n), time_(n), freq_(n / 2 + 1) {
    fwd_ = fftw_plan_dft_r2c_1d(n, time_.data(), reinterpret_cast<fftw_complex*>(freq_.data()),
                                FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, reinterpret_cast<fftw_complex*>(freq_.data()), time_.data(),
                                FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::vector<double>& time() { return time_; }
  std::vector<std::complex<double>>& freq() { return freq_; }
  void forward() { fftw_execute(fwd_); }
  void inverse() { fftw_execute(inv_); }  // unnormalised
  int size() const { return n_; }

 private:
  int n_;
  std::vector<double> time_;
  std::vector<std::complex<double>> freq_;
  fftw_plan fwd_, inv_;
};

Eigen::RowVector3d random_direction(nn::Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::RowVector3d v;
  do {
    v << n(rng), n(rng), n(rng);
  } while (v.norm() < 1e-9);
  v.normalize();
  if (v.z() < -0.2) v.z() = -v.z();  // keep sources over the head
  return v;
}

// source geometry is fixed per corpus; only the time courses vary per segment
Matrix source_mixing(const Coords3& sites, std::uint64_t seed) {
  nn::Rng rng(seed);
  const auto c = sites.rows();
  Matrix mix(c, kLatentSources);
  for (int s = 0; s < kLatentSources; ++s) {
    const Eigen::RowVector3d centre = random_direction(rng);
    for (Eigen::Index i = 0; i < c; ++i) {
      const double d2 = (sites.row(i) - centre).squaredNorm();
      mix(i, s) = std::exp(-d2 / (2.0 * kSourceWidth * kSourceWidth));
    }
  }
  return mix;
}

Matrix background(const Matrix& mix, int length, double rate, const SynthSpec& spec, nn::Rng& rng) {
  Matrix sources(kLatentSources, length);
  for (int s = 0; s < kLatentSources; ++s) sources.row(s) = pink_noise(length, rate, spec.pink_exponent, rng);
  Matrix x = mix * sources;
  std::normal_distribution<double> white(0.0, spec.sensor_noise);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += white(rng);
  const double rms = std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
  if (rms > 0.0) x *= spec.background_rms / rms;
  return x;
}

struct Band {
  double lo, hi;
};

Band band_of(BrainState s) {
  switch (s) {
    case BrainState::affect:
      return {8.0, 12.0};
    case BrainState::motor:
      return {10.0, 14.0};
    case BrainState::others:
      return {4.0, 7.0};
  }
  return {4.0, 7.0};
}

RowVector envelope(BrainState s, int length, double rate, nn::Rng& rng) {
  RowVector env = RowVector::Ones(length);
  if (s != BrainState::affect) return env;
  // three Hann bursts of 2-3 s
  env.setZero();
  std::uniform_real_distribution<double> pos(0.0, 1.0), dur(2.0, 3.0);
  for (int b = 0; b < 3; ++b) {
    const int width = static_cast<int>(dur(rng) * rate);
    const int start = static_cast<int>(pos(rng) * std::max(1, length - width));
    for (int t = 0; t < width && start + t < length; ++t) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / (width - 1));
      env(start + t) = std::max(env(start + t), w);
    }
  }
  return env;
}

}  // namespace

RowVector pink_noise(int length, double rate, double exponent, nn::Rng& rng) {
  RealFft fft(length);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : fft.time()) v = n(rng);
  fft.forward();
  auto& f = fft.freq();
  for (size_t k = 0; k < f.size(); ++k) {
    const double hz = static_cast<double>(k) * rate / length;
    f[k] *= k == 0 ? 0.0 : std::pow(std::max(hz, kLowCut), -exponent / 2.0);
  }
  fft.inverse();
  RowVector out = Eigen::Map<const RowVector>(fft.time().data(), length);
  const double rms = std::sqrt(out.squaredNorm() / length);
  if (rms > 0.0) out /= rms;
  return out;
}

Vector band_power(const Matrix& x, double rate, double lo, double hi) {
  const int length = static_cast<int>(x.cols());
  RealFft fft(length);
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::copy(x.row(i).data(), x.row(i).data() + length, fft.time().begin());
    fft.forward();
    double p = 0.0;
    int bins = 0;
    for (size_t k = 1; k < fft.freq().size(); ++k) {
      const double hz = static_cast<double>(k) * rate / length;
      if (hz >= lo && hz <= hi) {
        p += std::norm(fft.freq()[k]);
        ++bins;
      }
    }
    out(i) = bins ? p / (bins * static_cast<double>(length) * length) : 0.0;
  }
  return out;
}

SynthMontage full_montage(const UniversalTemplate& tmpl) { return {"synth60", tmpl.channel_names()}; }

SynthMontage montage_22() {
  return {"synth22", {"Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FCz", "T7", "C3", "Cz",
                      "C4", "T8", "CPz", "P7", "P3", "Pz", "P4", "P8", "O1", "Oz", "O2"}};
}

std::vector<SynthItem> generate_corpus(const SynthSpec& spec, const UniversalTemplate& tmpl) {
  if (!(spec.snr > 0.0)) throw ValidationError("synth: snr must be > 0");
  if (spec.sensor_noise < 0.0) throw ValidationError("synth: sensor_noise must be >= 0");
  if (spec.segments_per_state < 1) throw ValidationError("synth: segments_per_state must be >= 1");
  if (spec.states.empty()) throw ValidationError("synth: no states");
  if (spec.train_fraction < 0 || spec.val_fraction < 0 || spec.train_fraction + spec.val_fraction > 1.0)
    throw ValidationError("synth: split fractions must be non-negative and sum to <= 1");
  const std::vector<SynthMontage> montages =
      spec.montages.empty() ? std::vector<SynthMontage>{full_montage(tmpl)} : spec.montages;
  const int length = static_cast<int>(std::lround(spec.window_s * kModelRate));
  const double rate = kModelRate;
  const int n_train = static_cast<int>(std::floor(spec.train_fraction * spec.segments_per_state));
  const int n_val = static_cast<int>(std::floor(spec.val_fraction * spec.segments_per_state));

  std::vector<SynthItem> out;
  for (size_t mi = 0; mi < montages.size(); ++mi) {
    const SynthMontage& m = montages[mi];
    const MontageMap map = resolve_montage(m.channels, std::nullopt, tmpl);
    if (map.num_channels() != static_cast<int>(m.channels.size()))
      throw ValidationError("synth: montage '" + m.dataset + "' has channels off the template");
    Coords3 sites(map.num_channels(), 3);
    for (int i = 0; i < map.num_channels(); ++i) sites.row(i) = tmpl.coords().row(map.template_indices[i]);
    const Matrix mix = source_mixing(sites, derive_seed(spec.seed, 0x736f75726365ULL, 0, 0));

    for (BrainState state : spec.states) {
      const Vector prior = state_prior(state, map, tmpl);
      const Band band = band_of(state);
      for (int j = 0; j < spec.segments_per_state; ++j) {
        nn::Rng rng(derive_seed(spec.seed, mi, static_cast<std::uint64_t>(state), j));
        Matrix x = background(mix, length, rate, spec, rng);
        std::uniform_real_distribution<double> freq(band.lo, band.hi), phase(0.0, 2.0 * std::numbers::pi);
        const double f0 = freq(rng), phi = phase(rng);
        const RowVector env = envelope(state, length, rate, rng);
        const double amp = spec.snr * spec.background_rms * std::numbers::sqrt2;
        RowVector osc(length);
        for (int t = 0; t < length; ++t)
          osc(t) = amp * env(t) * std::sin(2.0 * std::numbers::pi * f0 * t / rate + phi);
        x += prior * osc;
        x = x.cwiseMax(-kClip).cwiseMin(kClip);

        SynthItem item;
        Recording& r = item.recording;
        r.data = x / scale_factor(Unit::microvolt);
        r.rate = rate;
        r.unit = Unit::microvolt;
        r.channels = m.channels;
        r.state = state;
        r.dataset = m.dataset;
        r.label = static_cast<int>(state);
        r.subject = "syn" + std::to_string(j);
        item.split = j < n_train ? "train" : (j < n_train + n_val ? "val" : "test");
        out.push_back(std::move(item));
      }
    }
  }
  return out;
}

void write_corpus(const std::filesystem::path& dir, const std::vector<SynthItem>& items) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (size_t i = 0; i < items.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seg_%06zu.eegr", i);
    write_recording(dir / name, items[i].recording);
    const Recording& r = items[i].recording;
    entries.push_back({name, r.state, r.dataset, r.label, items[i].split, r.subject});
  }
  write_manifest(dir / "manifest.tsv", entries);
}

std::vector<Segment> SplitSegments::all() const {
  std::vector<Segment> out = train;
  out.insert(out.end(), val.begin(), val.end());
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

SplitSegments to_segments(const std::vector<SynthItem>& items, double window_s, const UniversalTemplate& tmpl) {
  SplitSegments out;
  for (const SynthItem& item : items) {
    for (Segment& s : segment(item.recording, window_s, tmpl)) {
      ScaleOutcome o = scale_and_reject(s);
      if (!o.segment) continue;
      auto& dst = item.split == "train" ? out.train : (item.split == "val" ? out.val : out.test);
      dst.push_back(std::move(*o.segment));
    }
  }
  return out;
}

}  // namespace eegstate::synth
