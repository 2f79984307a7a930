#include "eegstate/core.hpp"

namespace eegstate {

std::string_view version() { return EEGSTATE_VERSION; }

std::string_view to_string(BrainState s) {
  switch (s) {
    case BrainState::affect:
      return "affect";
    case BrainState::motor:
      return "motor";
    case BrainState::others:
      return "others";
  }
  return "unknown";
}

BrainState parse_state(std::string_view name) {
  if (name == "affect") return BrainState::affect;
  if (name == "motor") return BrainState::motor;
  if (name == "others" || name == "other") return BrainState::others;
  throw ValidationError("unknown brain state '" + std::string(name) + "'");
}

}  // namespace eegstate
