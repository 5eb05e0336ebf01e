#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rfm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class FactorizationError : public Error {
 public:
  FactorizationError(const std::string& what, std::size_t pivot)
      : Error(what + " (pivot " + std::to_string(pivot) + ")"), pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::size_t count, const std::string& label = "converged")
      : Error(what + " (" + std::to_string(count) + " " + label + ")"), count_(count) {}
  // Converged eigenpairs, or remaining work items for non-spectral loops.
  std::size_t converged() const noexcept { return count_; }
  std::size_t count() const noexcept { return count_; }

 private:
  std::size_t count_;
};

// Raised with the offending point, vertex or face id.
class GeometryError : public Error {
 public:
  GeometryError(const std::string& what, std::size_t id)
      : Error(what + " (id " + std::to_string(id) + ")"), id_(id) {}
  std::size_t id() const noexcept { return id_; }

 private:
  std::size_t id_;
};

}  // namespace rfm
