// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace pgn {

/// Bad caller input: malformed files, invalid arguments, failed preconditions.
/// The CLI maps these to exit status 1.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MalformedLexicon : public InvalidInput {
 public:
  MalformedLexicon(std::size_t line, const std::string& what)
      : InvalidInput("lexicon line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Failure while doing the work itself (I/O, divergence, corrupt checkpoint).
/// The CLI maps these to exit status 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class CheckpointError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class TrainingDiverged : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class UnknownMapping : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace pgn
