#include "eegstate/signal.hpp"

#include <boost/math/special_functions/bessel.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace eegstate {

std::string_view to_string(Unit u) {
  switch (u) {
    case Unit::volt:
      return "V";
    case Unit::millivolt:
      return "mV";
    case Unit::microvolt:
      return "uV";
    case Unit::scaled:
      return "scaled";
  }
  return "scaled";
}

Unit parse_unit(std::string_view name) {
  if (name == "V") return Unit::volt;
  if (name == "mV") return Unit::millivolt;
  if (name == "uV") return Unit::microvolt;
  if (name == "scaled") return Unit::scaled;
  throw ValidationError("unknown unit '" + std::string(name) + "' (V, mV, uV, scaled)");
}

double scale_factor(Unit u) {
  switch (u) {
    case Unit::volt:
      return 1e4;
    case Unit::millivolt:
      return 10.0;
    case Unit::microvolt:
      return 0.01;
    case Unit::scaled:
      return 1.0;
  }
  return 1.0;
}

namespace {

constexpr long kMaxPolyphaseFactor = 1000;
constexpr int kTapsPerSide = 10;
constexpr double kKaiserBeta = 5.0;

bool as_integer(double v, long& out) {
  const double r = std::round(v);
  if (std::abs(v - r) > 1e-9 * std::max(1.0, std::abs(v))) return false;
  out = static_cast<long>(r);
  return true;
}

double kaiser(double r, double i0_beta) {
  return boost::math::cyl_bessel_i(0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
}

// The same Kaiser-windowed sinc as the polyphase path, evaluated at
// arbitrary fractional input positions (for ratios without small L/M).
Matrix resample_sinc(const Matrix& x, double rate_in, double rate_out) {
  const auto n_in = static_cast<long>(x.cols());
  const auto n_out = static_cast<Eigen::Index>(std::ceil(n_in * rate_out / rate_in - 1e-9));
  const double step = rate_in / rate_out;             // input samples per output sample
  const double cutoff = 0.5 * std::min(1.0, 1.0 / step);  // cycles per input sample
  const double half = kTapsPerSide * std::max(1.0, step);
  const double i0_beta = boost::math::cyl_bessel_i(0, kKaiserBeta);
  Matrix y = Matrix::Zero(x.rows(), n_out);
  for (Eigen::Index m = 0; m < n_out; ++m) {
    const double pos = static_cast<double>(m) * step;
    const long lo = std::max(0L, static_cast<long>(std::ceil(pos - half)));
    const long hi = std::min(n_in - 1, static_cast<long>(std::floor(pos + half)));
    double weight = 0.0;
    for (long j = lo; j <= hi; ++j) {
      const double t = static_cast<double>(j) - pos;
      const double arg = 2.0 * cutoff * t;
      const double sinc = t == 0.0 ? 1.0 : std::sin(M_PI * arg) / (M_PI * arg);
      const double h = 2.0 * cutoff * sinc * kaiser(t / half, i0_beta);
      y.col(m) += h * x.col(j);
      weight += h;
    }
    if (weight != 0.0) y.col(m) /= weight;
  }
  return y;
}

Matrix resample_polyphase(const Matrix& x, long up, long down) {
  const long factor = std::max(up, down);
  const long half = kTapsPerSide * factor;
  const long taps = 2 * half + 1;
  const double cutoff = 0.5 / static_cast<double>(factor);  // cycles per upsampled sample
  const double i0_beta = boost::math::cyl_bessel_i(0, kKaiserBeta);
  std::vector<double> h(taps);
  for (long n = 0; n < taps; ++n) {
    const double m = static_cast<double>(n - half);
    const double arg = 2.0 * cutoff * m;
    const double sinc = m == 0.0 ? 1.0 : std::sin(M_PI * arg) / (M_PI * arg);
    const double r = m / static_cast<double>(half);
    h[n] = 2.0 * cutoff * sinc * kaiser(r, i0_beta);
  }

  const long n_in = static_cast<long>(x.cols());
  const long n_out = (n_in * up + down - 1) / down;
  Matrix y = Matrix::Zero(x.rows(), n_out);
  for (long m = 0; m < n_out; ++m) {
    // y[m] = sum_k h[k] * xup[m*down + half - k], xup[j] = x[j/up] when up | j
    const long centre = m * down + half;
    long k = centre % up;  // first tap landing on a real sample
    double weight = 0.0;
    for (; k < taps; k += up) {
      const long j = (centre - k) / up;
      if (j < 0) break;
      if (j >= n_in) continue;
      y.col(m) += h[k] * x.col(j);
      weight += h[k];
    }
    if (weight != 0.0) y.col(m) /= weight;
  }
  return y;
}

}  // namespace

Matrix resample(const Matrix& x, double rate_in, double rate_out) {
  if (!(rate_in > 0.0) || !(rate_out > 0.0)) throw ValidationError("resample: rates must be > 0");
  if (rate_in == rate_out) return x;
  long a = 0, b = 0;
  if (as_integer(rate_out, a) && as_integer(rate_in, b)) {
    const long g = std::gcd(a, b);
    const long up = a / g, down = b / g;
    if (up <= kMaxPolyphaseFactor && down <= kMaxPolyphaseFactor)
      return resample_polyphase(x, up, down);
  }
  return resample_sinc(x, rate_in, rate_out);
}

std::vector<Matrix> segment_signal(const Matrix& x, double rate, double window_s) {
  if (!(rate > 0.0)) throw ValidationError("segment: rate must be > 0");
  if (!(window_s > 0.0)) throw ValidationError("segment: window must be > 0");
  const Matrix y = resample(x, rate, kModelRate);
  const auto win = static_cast<Eigen::Index>(std::llround(window_s * kModelRate));
  std::vector<Matrix> out;
  if (win <= 0) return out;
  for (Eigen::Index start = 0; start + win <= y.cols(); start += win)
    out.emplace_back(y.middleCols(start, win));
  return out;
}

std::vector<Segment> segment(const Recording& rec, double window_s, const UniversalTemplate& tmpl) {
  if (rec.data.rows() != static_cast<Eigen::Index>(rec.channels.size()))
    throw ShapeError("recording: channel list and data rows differ");
  auto map = std::make_shared<const MontageMap>(resolve_montage(rec.channels, rec.coords, tmpl));
  std::vector<Segment> out;
  for (auto& w : segment_signal(map->select_rows(rec.data), rec.rate, window_s)) {
    Segment s;
    s.data = std::move(w);
    s.unit = rec.unit;
    s.montage = map;
    s.state = rec.state;
    s.dataset = rec.dataset;
    s.label = rec.label;
    s.subject = rec.subject;
    out.push_back(std::move(s));
  }
  return out;
}

ScaleOutcome scale_and_reject(const Segment& seg) {
  ScaleOutcome out;
  if (!seg.data.allFinite()) {
    out.reason = RejectReason::non_finite;
    return out;
  }
  Segment s = seg;
  s.data *= scale_factor(seg.unit);
  s.unit = Unit::scaled;
  if (s.data.size() > 0 && s.data.cwiseAbs().maxCoeff() > kAmplitudeLimit) {
    out.reason = RejectReason::amplitude;
    return out;
  }
  out.segment = std::move(s);
  return out;
}

std::vector<Batch> batch_by_dataset(const std::vector<Segment>& segments, int batch_size,
                                    std::uint64_t seed, int epoch_index) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (epoch_index < 1) throw ValidationError("epoch_index is 1-based");
  std::vector<size_t> order(segments.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto same_group = [&](const Segment& a, const Segment& b) {
    return a.dataset == b.dataset && a.state == b.state &&
           (a.montage == b.montage || (a.montage && b.montage && *a.montage == *b.montage));
  };

  std::vector<Batch> done;
  std::vector<Batch> open;  // in order of first appearance
  for (size_t idx : order) {
    const Segment& s = segments[idx];
    auto it = std::find_if(open.begin(), open.end(),
                           [&](const Batch& b) { return same_group(*b.segments.front(), s); });
    if (it == open.end()) {
      open.push_back(Batch{{}, epoch_index});
      it = std::prev(open.end());
    }
    it->segments.push_back(&s);
    if (static_cast<int>(it->segments.size()) == batch_size) {
      done.push_back(std::move(*it));
      open.erase(it);
    }
  }
  for (auto& b : open) done.push_back(std::move(b));
  return done;
}

}  // namespace eegstate
