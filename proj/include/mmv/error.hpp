#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmv {

// Input or configuration that violates a documented contract. The CLI maps
// these to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure while running an otherwise valid computation (exit code 2).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BlowUpError : public RuntimeFailure {
 public:
  BlowUpError(double time, std::size_t particle, const std::string& where)
      : RuntimeFailure("non-finite or exploding state in " + where + " at t=" +
                       std::to_string(time) + ", particle " +
                       std::to_string(particle)),
        time_(time),
        particle_(particle) {}

  double time() const noexcept { return time_; }
  std::size_t particle() const noexcept { return particle_; }

 private:
  double time_;
  std::size_t particle_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

}  // namespace mmv
