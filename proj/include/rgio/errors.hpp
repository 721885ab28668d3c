#pragma once

#include <stdexcept>
#include <string>

namespace rgio {

// Thrown on contract violations: malformed inputs, dimension mismatches,
// unparseable files. Solver outcomes (infeasible, did-not-converge) are
// reported through status fields instead.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rgio
