#pragma once

#include <stdexcept>
#include <string>

namespace snk {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A file could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// A symmetric-only routine received a non-symmetric matrix, or a similar
// precondition on the shape of the input was broken.
class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// The random sketch (or a matrix handed to thin_qr) does not have full column
// rank.  Usually fixed by a larger oversampling parameter.
class DegenerateSketchError : public Error {
 public:
  using Error::Error;
};

class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(const std::string& what, double w_norm)
      : Error(what), w_norm_(w_norm) {}
  double w_norm() const { return w_norm_; }

 private:
  double w_norm_;
};

// The inner r x r system of the Sherman-Morrison-Woodbury solve is singular.
class RegularizationError : public Error {
 public:
  RegularizationError(const std::string& what, double offending_lambda)
      : Error(what), lambda_(offending_lambda) {}
  double offending_lambda() const { return lambda_; }

 private:
  double lambda_;
};

class StepRejectionError : public Error {
 public:
  StepRejectionError(const std::string& what, double alpha, double step_norm)
      : Error(what), alpha_(alpha), step_norm_(step_norm) {}
  double alpha() const { return alpha_; }
  double step_norm() const { return step_norm_; }

 private:
  double alpha_;
  double step_norm_;
};

// Metered sweeps disagree with the cost formulas.
class AccountingError : public Error {
 public:
  using Error::Error;
};

}  // namespace snk
