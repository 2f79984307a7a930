#pragma once

#include "eegstate/core.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace eegstate::nn {

/// A learnable block with its accumulated gradient.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = true;  // AdamW weight decay applies

  Param() = default;
  Param(std::string n, Matrix v, bool wd = true)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())), decay(wd) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

using ParamList = std::vector<Param*>;

using Rng = std::mt19937_64;

/// Normal(0, std) resampled until inside +-2 std.
void init_trunc_normal(Matrix& m, double stddev, Rng& rng);
void init_normal(Matrix& m, double stddev, Rng& rng);
void init_uniform(Matrix& m, double bound, Rng& rng);

double global_grad_norm(const ParamList& params);

}  // namespace eegstate::nn
