#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace psgd {

/// A precondition on caller-supplied data was violated.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative computation produced non-finite values.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, long iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        detail_(what),
        iteration_(iteration) {}

  long iteration() const noexcept { return iteration_; }
  /// Message without the iteration suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  long iteration_;
};

/// An optimizer run left the finite/bounded regime. Carries the seed and
/// the 1-based iteration index at which the loss first exceeded the limit.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::uint64_t seed, long iteration, double loss)
      : std::runtime_error("run diverged: seed " + std::to_string(seed) + ", iteration " +
                           std::to_string(iteration) + ", loss " + std::to_string(loss)),
        seed_(seed),
        iteration_(iteration) {}
  /// Divergence detected analytically rather than along a sampled run.
  explicit DivergenceError(const std::string& what) : std::runtime_error(what), seed_(0), iteration_(0) {}

  std::uint64_t seed() const noexcept { return seed_; }
  long iteration() const noexcept { return iteration_; }

 private:
  std::uint64_t seed_;
  long iteration_;
};

}  // namespace psgd
