// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace softcap {

enum class ErrorCode {
  NotIrreducible,
  NotReversible,
  NegativeRate,
  InvalidMeasure,
  DimensionMismatch,
  EmptySet,
  NotACover,
  ConvergenceFailure,
  DegenerateKilling,
  EmptyInterior,
  SingularSystem,
  ConstraintConflict,
  NotAUnitFlow,
  FlowOnZeroEdge,
  EpsilonTooLarge,
  EmptySample,
  WindowOutOfRange,
  ConfigInfeasible,
  BadPotential,
  TooLargeForExact,
  ImplicitOnly,
  ParseError,
  UnknownState,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotIrreducible: return "NotIrreducible";
    case ErrorCode::NotReversible: return "NotReversible";
    case ErrorCode::NegativeRate: return "NegativeRate";
    case ErrorCode::InvalidMeasure: return "InvalidMeasure";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::NotACover: return "NotACover";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::DegenerateKilling: return "DegenerateKilling";
    case ErrorCode::EmptyInterior: return "EmptyInterior";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::ConstraintConflict: return "ConstraintConflict";
    case ErrorCode::NotAUnitFlow: return "NotAUnitFlow";
    case ErrorCode::FlowOnZeroEdge: return "FlowOnZeroEdge";
    case ErrorCode::EpsilonTooLarge: return "EpsilonTooLarge";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::WindowOutOfRange: return "WindowOutOfRange";
    case ErrorCode::ConfigInfeasible: return "ConfigInfeasible";
    case ErrorCode::BadPotential: return "BadPotential";
    case ErrorCode::TooLargeForExact: return "TooLargeForExact";
    case ErrorCode::ImplicitOnly: return "ImplicitOnly";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownState: return "UnknownState";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failures also remember the offending line (1-based).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {
[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }
}  // namespace detail

}  // namespace softcap
