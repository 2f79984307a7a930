#pragma once

#include "eegstate/nn/param.hpp"

#include <map>
#include <string>

namespace eegstate {

/// Linear warmup from 0 to `peak`, then cosine decay to `min` at `total`.
/// The argument is fractional epochs elapsed (0-based).
struct WarmupCosine {
  double peak = 1e-4;
  double min = 1e-5;
  double warmup_epochs = 2;
  double total_epochs = 30;

  double at(double epochs_elapsed) const;
};

/// Cosine annealing from `base` to `min` over `period` epochs (no warmup).
struct CosineAnnealing {
  double base = 1e-4;
  double min = 1e-6;
  double period = 50;

  double at(double epochs_elapsed) const;
};

/// Rescales gradients so their global norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_grad_norm(const nn::ParamList& params, double max_norm);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.05;

  bool operator==(const AdamWConfig&) const = default;
};

/// AdamW with decoupled weight decay. Moments and step counts are kept per
/// parameter name, so parameters updated on different steps get their own
/// bias correction.
class AdamW {
 public:
  struct Slot {
    Matrix m;
    Matrix v;
    long steps = 0;
  };

  AdamW() = default;
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  void step(const nn::ParamList& params, double lr);

  const AdamWConfig& config() const { return cfg_; }
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }

 private:
  AdamWConfig cfg_;
  std::map<std::string, Slot> slots_;
};

}  // namespace eegstate
