#pragma once

#include <stdexcept>
#include <string>

namespace icpguard {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class InvalidDataset : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(int epoch)
      : Error("training diverged: non-finite loss at epoch " + std::to_string(epoch)),
        epoch_(epoch) {}

  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

class GenerationFailure : public Error {
 public:
  using Error::Error;
};

class NoView : public Error {
 public:
  using Error::Error;
};

}  // namespace icpguard
