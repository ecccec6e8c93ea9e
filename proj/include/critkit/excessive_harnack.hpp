#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "critkit/criticality.hpp"
#include "critkit/form.hpp"

namespace critkit {

// Positive kernel operators between finite measure spaces:
//   (T f)(z) = sum_x k(z, x) f(x) mu(x),   (T* g)(x) = sum_z k(z, x) g(z) nu(z).
// The kernel is stored with targets as rows and sources as columns.
struct KernelOperator {
  Matrix kernel;
  Vector nu;  // target measure, one entry per row
  Vector mu;  // source measure, one entry per column
  double p = 2.0;

  /// Throws NonPositiveInput (kernel entries or measures not strictly
  /// positive), DomainMismatch (sizes) or BadParams (p <= 1).
  void validate() const;

  [[nodiscard]] Vector apply(const Vector& f) const;
  [[nodiscard]] Vector apply_adjoint(const Vector& g) const;
  /// T*((T f)^{p-1}).
  [[nodiscard]] Vector nonlinear(const Vector& f) const;
};

struct LambdaResult {
  double lambda = 0.0;  // upper end: T*(T f)^{p-1} <= lambda f^{p-1} for the witness
  double lower = 0.0;   // Collatz-Wielandt lower bound from the same witness
  Vector witness;       // strictly positive, max entry 1
  int iterations = 0;
};

/// lambda(T) = ||T||^p. Dense eigensolve for p = 2, damped fixed point
/// f <- (T*(T f)^{p-1})^{1/(p-1)} in log coordinates otherwise. Throws
/// NoConvergence (with the bracket in the message).
LambdaResult lambda_of(const KernelOperator& op, double tol = 1e-12, int max_iterations = 20000);

/// max_x T*(T f)^{p-1}(x) - lambda f(x)^{p-1}. Throws NonPositiveInput unless f > 0.
double check_super_eigen(const KernelOperator& op, double lambda, const Vector& f);

/// ktilde(x, y) = sum_z k(z, x) k(z, y) nu(z).
Matrix ktilde(const KernelOperator& op);

struct HarnackCertificate {
  std::vector<Index> set;  // source points, increasing
  double c = 0.0;
  double D = 0.0;
  double lambda = 0.0;
  double mass = 0.0;  // mu(A)
};

/// Greedy set for the weak Harnack inequality
///   sum_{A} f mu <= D min_A f   for every f > 0 with T*(T f)^{p-1} <= lambda f^{p-1}.
/// Starting from all points, the point attaining the smallest coupling is
/// removed while mu(A) stays >= target_mass mu(X). For p = 2 the coupling is
/// ktilde and D = lambda / c with c = min ktilde over A x A. For other p,
/// c = min_{x in A} sum_z k(z, x) nu(z) (min_{y in A} k(z, y))^{p-1} and
/// D = (lambda / c)^{1/(p-1)}. Throws EmptySelection or BadParams.
HarnackCertificate harnack_sets(const KernelOperator& op, double target_mass, double lambda);

/// sum_A f mu - D min_A f; nonpositive when the certificate applies to f.
double harnack_gap(const KernelOperator& op, const HarnackCertificate& cert, const Vector& f);

struct ErgodicityReport {
  std::size_t samples_tried = 0;
  Vector f;        // the violating sample
  Index point = -1;  // where T*(T 1_A f)^{p-1} > 1_A T*(T f)^{p-1}
  double lhs = 0.0;
  double rhs = 0.0;
};

/// Searches nonnegative f (the constant first, then random) for a violation of
///   T*(T 1_A f)^{p-1} <= 1_A T*(T f)^{p-1}.
/// Throws BadParams unless A is nonempty and proper, NoViolationFound if
/// every sample satisfies the inequality.
ErgodicityReport ergodicity_check(const KernelOperator& op, const std::vector<Index>& set, std::size_t n_samples,
                                  std::uint64_t seed);

/// The resolvent G_1 of a form as a kernel operator with respect to mu on
/// both sides (free vertices only). Requires an irreducible form.
KernelOperator resolvent_kernel(const GraphForm& form);

struct ExcessiveOptions {
  std::vector<double> alpha_schedule;  // empty: 1 down to 1e-12, ratio 1/2
  double stabilization = 1e-8;         // relative sup-norm change over the tail
  double harnack_mass = 0.5;           // used when no reference set is given
};

struct ExcessiveConstruction {
  VertexFunction h;             // min over the reference set is 1
  std::vector<std::string> reference;
  double alpha_last = 0.0;
  double tail_change = 0.0;     // relative change of the normalized potentials over the last three points
  double residual = 0.0;        // max(-(L h))^+ / ||h||_inf
};

/// h = lim C_alpha G_alpha g with C_alpha normalizing min_B to 1, realized as
/// the tail infimum at the end of the schedule. g >= 0 must be nonzero; on an
/// irreducible form G_alpha g is then strictly positive. With an empty
/// reference set, B is the greedy Harnack set of the resolvent kernel.
/// Throws NotIrreducible, ScheduleTooShort, NonPositiveInput or EmptySelection.
ExcessiveConstruction construct_excessive(const GraphForm& form, const VertexFunction& g,
                                          const std::vector<std::string>& reference,
                                          const ExcessiveOptions& options = {}, const Tolerances& tol = {});

struct ExcessiveLevel {
  int radius = 0;
  double residual = 0.0;
  double tail_change = 0.0;
};

struct ExhaustionExcessive {
  std::vector<ExcessiveLevel> levels;
  LabeledFunction h;  // largest level, normalized at the reference set
  bool residual_monotone = true;  // nonincreasing up to a factor 2
};

/// Level-by-level construction; the reference set defaults to the root.
ExhaustionExcessive construct_excessive(const Exhaustion& exhaustion,
                                        const std::function<VertexFunction(const GraphForm&)>& g,
                                        std::vector<std::string> reference = {},
                                        const ExcessiveOptions& options = {}, const Tolerances& tol = {});

}  // namespace critkit
