#pragma once

#include "eegstate/pretrain.hpp"

namespace eegstate {

struct GradCheckOptions {
  std::uint64_t seed = 0;
  int channels = 8;
  int length = 200;
  int dim = 16;
  int entries_per_block = 4;  // sampled coordinates per parameter block
  double step = 1e-4;  // fourth-order stencil
  double tolerance = 1e-4;
};

/// One parameter block (or input) compared against finite differences.
/// rel_error = |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|) over
/// the sampled coordinates; 0 when both norms are below 1e-10.
struct GradCheckResult {
  std::string group;  // encode, decode_reconstruct, loss_rec, loss_dec, loss_total, classifier
  std::string name;
  int entries = 0;
  double rel_error = 0.0;
  double analytic_norm = 0.0;
  bool passed = false;
};

/// Small model used by the suite.
ModelConfig gradcheck_model_config(const GradCheckOptions& opts);

/// Runs every group; results in a fixed order.
std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& opts = {});

}  // namespace eegstate
