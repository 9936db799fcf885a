#ifndef LOWRANK_ERRORS_HPP
#define LOWRANK_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace lowrank {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension or shape mismatch between operands.
class ShapeError : public Error {
public:
  using Error::Error;
};

// A matrix required to be symmetric positive definite is not.
// Carries the pivot index at which a Cholesky-type factorization failed,
// or -1 when the failure is not tied to a single pivot.
class NotPositiveDefinite : public Error {
public:
  explicit NotPositiveDefinite(const std::string& msg, long pivot = -1)
      : Error(msg), pivot_(pivot) {}
  long pivot() const { return pivot_; }

private:
  long pivot_;
};

// Requested rank exceeds what the decomposition can provide.
class RankError : public Error {
public:
  using Error::Error;
};

// An iterative solver failed to reach the requested tolerance.
class IterationError : public Error {
public:
  explicit IterationError(const std::string& msg, std::vector<double> residuals = {})
      : Error(msg), residuals_(std::move(residuals)) {}
  const std::vector<double>& achieved_residuals() const { return residuals_; }

private:
  std::vector<double> residuals_;
};

// A dense factorization or solve failed.
class FactorizationError : public Error {
public:
  using Error::Error;
};

// An input object was produced by the wrong construction path.
class ProvenanceError : public Error {
public:
  using Error::Error;
};

// Invalid problem or experiment configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

// A user-supplied scalar loss function violates the admissibility conditions.
class InvalidLossSpec : public Error {
public:
  using Error::Error;
};

// Result table operations on empty input.
class EmptyResultError : public Error {
public:
  using Error::Error;
};

// The requested exact (dense) computation exceeds the configured size limit.
class UseDenseFallbackError : public Error {
public:
  using Error::Error;
};

// Text input (CSV, Matrix Market) could not be parsed; carries a line number.
class ParseError : public Error {
public:
  explicit ParseError(const std::string& msg, long line = -1)
      : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  long line() const { return line_; }

private:
  long line_;
};

}  // namespace lowrank

#endif
