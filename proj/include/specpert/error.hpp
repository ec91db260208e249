#pragma once

#include <stdexcept>
#include <string>

namespace specpert {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

/// A Gram matrix or pencil right-hand side failed the positive-definiteness test.
class NotPositiveDefinite : public Error {
public:
  NotPositiveDefinite(const std::string& what, double smallest_eigenvalue)
      : Error(what), smallest_eigenvalue_(smallest_eigenvalue) {}
  double smallest_eigenvalue() const { return smallest_eigenvalue_; }

private:
  double smallest_eigenvalue_;
};

/// The perturbation is too large for the asymptotic pipeline to be admitted.
class GateError : public Error {
public:
  using Error::Error;
};

/// Eigenvalue localization around lambda_m produced the wrong count.
class LocalizationError : public Error {
public:
  using Error::Error;
};

} // namespace specpert
