#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace crowd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside an operation's mathematical domain (negative density,
// query outside the grid, zero-mass field, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Scenario or solver input that cannot be run (no exit cell, bad grid).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

// NaN or CFL violation inside a solver step.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, int i = -1, int j = -1)
      : Error(what), i_(i), j_(j) {}
  int i() const { return i_; }
  int j() const { return j_; }

 private:
  int i_;
  int j_;
};

// A velocity profile that does not strictly contain the origin.
class ConsistencyError : public Error {
 public:
  ConsistencyError(const std::string& what, int i, int j)
      : Error(what), i_(i), j_(j) {}
  int i() const { return i_; }
  int j() const { return j_; }

 private:
  int i_;
  int j_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> trace = {})
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

class NonTerminationError : public Error {
 public:
  using Error::Error;
};

// Two separated maximizers tie: the best reply is not a function here.
class MultiplicityError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace crowd
