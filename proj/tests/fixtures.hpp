#pragma once
// Small models and random corpora shared by the tests.

#include "eegstate/pretrain.hpp"

#include <random>

namespace fixture {

using namespace eegstate;

inline ModelConfig tiny_model(int dim = 16) {
  ModelConfig c;
  c.encoder.conv_in = {1, 4, 4};
  c.encoder.conv_out = {4, 4, 4};
  c.encoder.channel_filters = 4;
  c.encoder.region_filters = 4;
  c.encoder.dim = dim;
  c.encoder.heads = 4;
  c.encoder.ff_dim = 2 * dim;
  c.encoder.layers = 2;
  c.encoder.norm_groups = 2;
  c.encoder.max_patches = 64;
  c.decoder.layers = 2;
  c.decoder.heads = 4;
  c.decoder.ff_dim = 2 * dim;
  return c;
}

inline std::shared_ptr<const MontageMap> montage(const std::vector<std::string>& names) {
  return std::make_shared<const MontageMap>(resolve_montage(names));
}

inline std::shared_ptr<const MontageMap> eight_channels() {
  return montage({"FP1", "F3", "FZ", "C3", "CZ", "C4", "PZ", "O2"});
}

/// `per_state` random segments of every state, dataset "d<state>".
inline std::vector<Segment> random_corpus(int per_state, int channels_unused, int length,
                                          std::uint64_t seed) {
  (void)channels_unused;
  auto map = eight_channels();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  std::vector<Segment> out;
  for (BrainState s : kAllStates)
    for (int i = 0; i < per_state; ++i) {
      Segment seg;
      seg.data = Matrix(map->num_channels(), length);
      for (Eigen::Index k = 0; k < seg.data.size(); ++k) seg.data.data()[k] = n(rng);
      seg.montage = map;
      seg.state = s;
      seg.dataset = "d" + std::string(to_string(s));
      out.push_back(std::move(seg));
    }
  return out;
}

inline double param_norm(const nn::ParamList& ps, bool grad) {
  double s = 0.0;
  for (const auto* p : ps) s += grad ? p->grad.squaredNorm() : p->value.squaredNorm();
  return std::sqrt(s);
}

}  // namespace fixture
