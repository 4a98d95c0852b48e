#ifndef FRAMEBAYES_ERRORS_HPP
#define FRAMEBAYES_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace framebayes {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad input files, schema violations, unknown references. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Nonpositive lengths, coincident nodes, invalid sections.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Parameter outside its admissible domain (fixity outside [0,1], negative mass).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Singular slave block in static condensation (mechanism among slave DOFs).
class ReductionError : public Error {
 public:
  using Error::Error;
};

// Non-symmetric / indefinite inputs, failed factorizations, empty series. Exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Assembled matrices no longer match the parameters they are used with.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Requested subspace order exceeds the numerical rank of the data.
class OrderTooHighError : public Error {
 public:
  OrderTooHighError(const std::string& msg, int detected_rank)
      : Error(msg), detected_rank(detected_rank) {}
  int detected_rank;
};

// Sampler could not adapt (all-divergent burn-in) or chains failed R-hat. Exit code 4.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace framebayes

#endif
