#pragma once

#include "eegstate/montage.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace eegstate {

inline constexpr double kModelRate = 200.0;
inline constexpr double kAmplitudeLimit = 10.0;  // in 0.1 mV units

/// Physical unit of stored samples. `scaled` means 1.0 == 0.1 mV.
enum class Unit { volt, millivolt, microvolt, scaled };

std::string_view to_string(Unit u);
Unit parse_unit(std::string_view name);
/// Multiplier taking a value in `u` to 0.1 mV units.
double scale_factor(Unit u);

/// A raw multichannel recording before segmentation.
struct Recording {
  Matrix data;  // C x T_raw
  double rate = kModelRate;
  Unit unit = Unit::scaled;
  std::vector<std::string> channels;
  std::optional<Coords3> coords;
  BrainState state = BrainState::others;
  std::string dataset;
  int label = -1;
  std::string subject;
};

/// A model-ready window at 200 Hz on the kept montage channels.
struct Segment {
  Matrix data;  // C x T
  double rate = kModelRate;
  Unit unit = Unit::scaled;
  std::shared_ptr<const MontageMap> montage;
  BrainState state = BrainState::others;
  std::string dataset;
  int label = -1;
  std::string subject;
};

struct Batch {
  std::vector<const Segment*> segments;
  int epoch_index = 1;  // 1-based

  size_t size() const { return segments.size(); }
};

/// Polyphase Kaiser-windowed FIR when rate_out/rate_in reduces to L/M with
/// L, M <= 1000; otherwise the same windowed sinc evaluated directly at
/// fractional input positions. Each output sample is
/// normalised by the taps that touched valid input, so constants pass
/// through unchanged.
Matrix resample(const Matrix& x, double rate_in, double rate_out);

/// Resamples to 200 Hz and cuts non-overlapping windows; the remainder is
/// dropped. Returns raw (unscaled) windows.
std::vector<Matrix> segment_signal(const Matrix& x, double rate, double window_s);

/// Resolves the montage, keeps mappable rows, then segments.
std::vector<Segment> segment(const Recording& rec, double window_s,
                             const UniversalTemplate& tmpl = UniversalTemplate::builtin());

enum class RejectReason { none, amplitude, non_finite };

struct ScaleOutcome {
  std::optional<Segment> segment;
  RejectReason reason = RejectReason::none;
};

/// Converts to 0.1 mV units; rejects when any |value| > 10 or any value is
/// not finite.
ScaleOutcome scale_and_reject(const Segment& seg);

/// Seeded global shuffle, then stable grouping into batches that share
/// dataset, state and montage. Trailing short batches are kept.
std::vector<Batch> batch_by_dataset(const std::vector<Segment>& segments, int batch_size,
                                    std::uint64_t seed, int epoch_index = 1);

}  // namespace eegstate
