#pragma once

#include <stdexcept>
#include <string>

namespace dfolio {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or invariant-violating input file. The message names file and line.
class IngestError : public Error {
 public:
  using Error::Error;
};

/// The asset universe cannot be formed (empty intersection, too few assets).
class UniverseError : public Error {
 public:
  using Error::Error;
};

/// Not enough history to cover an indicator's warm-up.
class WarmupError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public SolverError {
 public:
  using SolverError::SolverError;
};

class UnboundedError : public SolverError {
 public:
  using SolverError::SolverError;
};

/// Iterative solver hit its iteration cap; `final_gap` is the last certificate.
class ConvergenceError : public SolverError {
 public:
  ConvergenceError(const std::string& what, double final_gap)
      : SolverError(what), final_gap_(final_gap) {}
  double final_gap() const noexcept { return final_gap_; }

 private:
  double final_gap_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class AccountingError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SpanError : public Error {
 public:
  using Error::Error;
};

}  // namespace dfolio
