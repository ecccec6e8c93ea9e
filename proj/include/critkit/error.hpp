#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace critkit {

/// Machine-readable failure categories. The CLI serializes these as
/// snake-free identifiers (see to_string) inside its error object.
enum class ErrorCode {
  NonSymmetricWeights,
  NonPositiveMeasure,
  NonPositiveWeight,
  FormNotNonnegative,
  DisconnectedDirichletSpec,
  UnknownVertex,
  DomainMismatch,
  ViolationFound,
  SolverFailure,
  Inconclusive,
  NotCritical,
  NoConvergence,
  InconsistentCertificates,
  GreenDiverges,
  NonPositiveInput,
  NonPositiveH,
  ValidationFailure,
  KernelMismatch,
  BudgetExhausted,
  GridTooCoarse,
  ExcessivityFailure,
  BisectionFailure,
  EmptySelection,
  NotIrreducible,
  ScheduleTooShort,
  NoViolationFound,
  ParseError,
  ValidationError,
  UnknownFamily,
  BadParams,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace critkit
