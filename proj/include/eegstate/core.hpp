#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eegstate {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using IndexList = std::vector<int>;

/// Input violates a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor dimensions are inconsistent with the operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// No input channel could be placed on the universal template.
class EmptyMontageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BrainState : int { affect = 0, motor = 1, others = 2 };

inline constexpr int kNumStates = 3;
inline constexpr std::array<BrainState, kNumStates> kAllStates = {
    BrainState::affect, BrainState::motor, BrainState::others};

/// Library version string.
std::string_view version();

std::string_view to_string(BrainState s);

/// Parses "affect" / "motor" / "others" (also "other"); throws ValidationError.
BrainState parse_state(std::string_view name);

}  // namespace eegstate
