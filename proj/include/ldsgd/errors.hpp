#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ldsgd {

enum class Errc {
  invalid_topology,
  construction_failed,
  invalid_matrix,
  invalid_scheme,
  horizon_too_short,
  size_limit,
  invalid_argument,
  invalid_constants,
  infeasible,
  invalid_config,
  divergence,
  precondition,
  insufficient_data,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::int64_t step, const std::string& msg)
      : Error(Errc::divergence, msg), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace ldsgd
