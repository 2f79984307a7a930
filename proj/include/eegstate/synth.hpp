#pragma once

#include "eegstate/nn/param.hpp"
#include "eegstate/recording_io.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace eegstate::synth {

/// A montage for generated data: a dataset name and channel labels that
/// must resolve on the template.
struct SynthMontage {
  std::string dataset;
  std::vector<std::string> channels;
};

/// All 60 template channels.
SynthMontage full_montage(const UniversalTemplate& tmpl = UniversalTemplate::builtin());
/// Classic 19-site 10-20 layout plus FCz, CPz and Oz.
SynthMontage montage_22();

struct SynthSpec {
  std::vector<BrainState> states{BrainState::affect, BrainState::motor, BrainState::others};
  std::vector<SynthMontage> montages;  // empty -> full_montage()
  int segments_per_state = 200;        // per montage
  double snr = 2.0;
  std::uint64_t seed = 0;
  double window_s = 10.0;
  double background_rms = 0.5;  // in 0.1 mV units
  double pink_exponent = 1.5;   // background power ~ 1/f^exponent
  double sensor_noise = 0.2;    // independent per-channel white noise, relative to the mixed sources
  double train_fraction = 0.6;
  double val_fraction = 0.2;
};

struct SynthItem {
  Recording recording;  // one window, stored in microvolts
  std::string split;    // train / val / test
};

/// Background: a few spatially smooth latent 1/f sources, whose placement
/// over the electrode sphere is fixed per corpus (only their time courses
/// vary per window), plus independent sensor noise, scaled to background_rms.
/// Each state adds an oscillation weighted by that state's channel prior:
///   affect  8-12 Hz bursts, motor 10-14 Hz continuous rhythm,
///   others  4-7 Hz diffuse rhythm;
/// peak amplitude snr * background_rms * sqrt(2) * prior. Values are clipped
/// to +-9.99 so every window survives the amplitude rule. Each window has a
/// seed derived from (seed, montage, state, index); class counts are exact.
std::vector<SynthItem> generate_corpus(const SynthSpec& spec,
                                       const UniversalTemplate& tmpl = UniversalTemplate::builtin());

/// Writes one recording file per item plus manifest.tsv into `dir`.
void write_corpus(const std::filesystem::path& dir, const std::vector<SynthItem>& items);

/// Segments and scales items in memory (same path as loading from disk,
/// without the float32 storage rounding).
struct SplitSegments {
  std::vector<Segment> train, val, test;
  std::vector<Segment> all() const;
};
SplitSegments to_segments(const std::vector<SynthItem>& items, double window_s,
                          const UniversalTemplate& tmpl = UniversalTemplate::builtin());

/// Mean power of each row in [lo, hi] Hz via a periodogram.
Vector band_power(const Matrix& x, double rate, double lo, double hi);

/// 1/f^exponent noise of unit rms, `length` samples at `rate`.
RowVector pink_noise(int length, double rate, double exponent, nn::Rng& rng);

}  // namespace eegstate::synth
