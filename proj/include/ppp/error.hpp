#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ppp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside a function's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

// Corpus tokens that have no score-dump record.
class CoverageError : public Error {
 public:
  explicit CoverageError(std::vector<std::string> missing)
      : Error(describe(missing)), missing_(std::move(missing)) {}

  const std::vector<std::string>& missing() const noexcept { return missing_; }

 private:
  static std::string describe(const std::vector<std::string>& keys) {
    std::string msg = "score dump misses " + std::to_string(keys.size()) + " corpus token(s):";
    for (const auto& k : keys) msg += " " + k;
    return msg;
  }
  std::vector<std::string> missing_;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class SingularDesignError : public Error {
 public:
  explicit SingularDesignError(std::vector<std::string> collinear)
      : Error(describe(collinear)), collinear_(std::move(collinear)) {}

  const std::vector<std::string>& collinear() const noexcept { return collinear_; }

 private:
  static std::string describe(const std::vector<std::string>& cols) {
    std::string msg = "design matrix is rank deficient; collinear column(s):";
    for (const auto& c : cols) msg += " " + c;
    return msg;
  }
  std::vector<std::string> collinear_;
};

class DegenerateFitError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace ppp
