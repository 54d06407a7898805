#pragma once

#include <stdexcept>
#include <string>

namespace redsim {

// Internal invariants stay armed in release builds: a breach is a simulator
// bug and must abort with a diagnostic, never corrupt a run silently.
inline void hard_assert(bool cond, const std::string& what) {
  if (!cond) throw std::logic_error("internal invariant violated: " + what);
}

}  // namespace redsim
