#ifndef LVMOGP_ERRORS_HPP
#define LVMOGP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lvmogp {

/// Bad shapes, non-positive hyperparameters, malformed configuration.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Factorization failures and non-finite objective values.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, std::string matrix = {}, double jitter = 0.0)
      : std::runtime_error(what), matrix_(std::move(matrix)), jitter_(jitter) {}

  const std::string& matrix() const { return matrix_; }
  double jitter() const { return jitter_; }

 private:
  std::string matrix_;
  double jitter_;
};

/// Malformed input files.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line) : std::runtime_error(what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

}  // namespace lvmogp

#endif  // LVMOGP_ERRORS_HPP
