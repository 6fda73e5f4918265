#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace contactum {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, std::string expected)
      : Error("syntax error at position " + std::to_string(position) +
              ": expected " + expected),
        position_(position),
        expected_(std::move(expected)) {}

  std::size_t position() const noexcept { return position_; }
  const std::string& expected() const noexcept { return expected_; }

 private:
  std::size_t position_;
  std::string expected_;
};

class UnknownIdentifier : public Error {
 public:
  explicit UnknownIdentifier(std::string name)
      : Error("unknown identifier '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t expected, std::size_t got)
      : Error("dimension mismatch: expected " + std::to_string(expected) +
              ", got " + std::to_string(got)) {}
};

class EvalDomainError : public Error {
 public:
  using Error::Error;
};

class RankNotConstant : public Error {
 public:
  RankNotConstant(std::string what, std::vector<int> ranks)
      : Error(what), ranks_(std::move(ranks)) {}
  const std::vector<int>& ranks() const noexcept { return ranks_; }

 private:
  std::vector<int> ranks_;
};

class NotOdd : public Error {
 public:
  explicit NotOdd(int rank)
      : Error("flat map rank " + std::to_string(rank) +
              " is even; rank estimate is unreliable"),
        rank_(rank) {}
  int rank() const noexcept { return rank_; }

 private:
  int rank_;
};

class InconsistentSystem : public Error {
 public:
  InconsistentSystem(std::string what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class SingularHessian : public Error {
 public:
  explicit SingularHessian(std::string what, double time = 0.0)
      : Error(std::move(what)), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class NotOnFiber : public Error {
 public:
  using Error::Error;
};
class NotASolution : public Error {
 public:
  using Error::Error;
};
class NotOnManifold : public Error {
 public:
  using Error::Error;
};
class NoSolution : public Error {
 public:
  using Error::Error;
};
class MaxLevelsExceeded : public Error {
 public:
  using Error::Error;
};
class SingularCMatrix : public Error {
 public:
  SingularCMatrix(std::string what, double condition)
      : Error(std::move(what)), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};
class NonFiniteState : public Error {
 public:
  NonFiniteState(std::string what, double time)
      : Error(std::move(what)), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace contactum
