// SPDX-License-Identifier: Apache-2.0
/**
 * @file   error.hpp
 * @brief  Error codes and the exception type shared by every dyslat module.
 */
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dyslat {

enum class ErrorCode {
  InputTooShort,
  BadFrequencyRange,
  ShapeMismatch,
  BadMagnitude,
  EmptySequence,
  BadProbability,
  NonFiniteInput,
  NumericalDivergence,
  ParseError,
  IoError,
  InsufficientSpeakers,
  DegenerateInput,
  IncompleteMushraSet,
  BadConfig,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::InputTooShort: return "InputTooShort";
  case ErrorCode::BadFrequencyRange: return "BadFrequencyRange";
  case ErrorCode::ShapeMismatch: return "ShapeMismatch";
  case ErrorCode::BadMagnitude: return "BadMagnitude";
  case ErrorCode::EmptySequence: return "EmptySequence";
  case ErrorCode::BadProbability: return "BadProbability";
  case ErrorCode::NonFiniteInput: return "NonFiniteInput";
  case ErrorCode::NumericalDivergence: return "NumericalDivergence";
  case ErrorCode::ParseError: return "ParseError";
  case ErrorCode::IoError: return "IoError";
  case ErrorCode::InsufficientSpeakers: return "InsufficientSpeakers";
  case ErrorCode::DegenerateInput: return "DegenerateInput";
  case ErrorCode::IncompleteMushraSet: return "IncompleteMushraSet";
  case ErrorCode::BadConfig: return "BadConfig";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string &message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code,
                    const std::string &message) {
  if (!condition)
    fail(code, message);
}

} // namespace dyslat
