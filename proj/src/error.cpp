#include "critkit/error.hpp"

namespace critkit {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonSymmetricWeights: return "NonSymmetricWeights";
    case ErrorCode::NonPositiveMeasure: return "NonPositiveMeasure";
    case ErrorCode::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::FormNotNonnegative: return "FormNotNonnegative";
    case ErrorCode::DisconnectedDirichletSpec: return "DisconnectedDirichletSpec";
    case ErrorCode::UnknownVertex: return "UnknownVertex";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::ViolationFound: return "ViolationFound";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::Inconclusive: return "Inconclusive";
    case ErrorCode::NotCritical: return "NotCritical";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InconsistentCertificates: return "InconsistentCertificates";
    case ErrorCode::GreenDiverges: return "GreenDiverges";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::NonPositiveH: return "NonPositiveH";
    case ErrorCode::ValidationFailure: return "ValidationFailure";
    case ErrorCode::KernelMismatch: return "KernelMismatch";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::ExcessivityFailure: return "ExcessivityFailure";
    case ErrorCode::BisectionFailure: return "BisectionFailure";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::NotIrreducible: return "NotIrreducible";
    case ErrorCode::ScheduleTooShort: return "ScheduleTooShort";
    case ErrorCode::NoViolationFound: return "NoViolationFound";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::UnknownFamily: return "UnknownFamily";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace critkit
