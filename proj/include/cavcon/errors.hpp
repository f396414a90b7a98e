// errors.hpp
// Exception taxonomy shared by the whole library. The CLI maps these to
// process exit codes (validation -> 2, regime -> 3, numerical -> 4).

#pragma once

#include <stdexcept>
#include <string>

namespace cavcon {

// Bad subsystem layouts: duplicate or unknown labels, dimension mismatches.
class layout_error : public std::invalid_argument {
 public:
  explicit layout_error(const std::string& what) : std::invalid_argument(what) {}
};

// Inputs outside an operation's contract (non-normalized pairs, bad ranges).
class validation_error : public std::invalid_argument {
 public:
  explicit validation_error(const std::string& what) : std::invalid_argument(what) {}
};

// Parameters outside the modeled physical regime (overdamped cavity, 2*delta <= k).
class regime_error : public std::domain_error {
 public:
  explicit regime_error(const std::string& what) : std::domain_error(what) {}
};

// Internal numerical failures: quadrature non-convergence, undefined fidelity,
// root polishing that does not reach tolerance.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cavcon
