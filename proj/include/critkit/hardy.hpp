#pragma once

#include <cstdint>
#include <optional>

#include "critkit/form.hpp"
#include "critkit/resolvent.hpp"

namespace critkit {

struct HardyVerification {
  std::size_t samples = 0;
  double rho_sampled = 0.0;           // max sum f^2 w mu / q(f) over the samples
  std::optional<double> pencil_max;   // lambda_max of (diag(w mu), K), when dense
  bool passed = false;
};

/// A Hardy weight w = g / (G_alpha g) together with its verification.
struct HardyWeight {
  VertexFunction weight;
  VertexFunction source_g;
  double alpha_used = 0.0;  // 0 when the full Green limit was reached
  HardyVerification verification;
};

struct HardyOptions {
  GreenOptions green;
  /// Accept g / G_alpha g for the perturbed form q + alpha ||.||^2 when the
  /// Green limit diverges; otherwise GreenDiverges is thrown.
  bool allow_perturbed = false;
  double fallback_alpha = 0.0;  // <= 0: smallest alpha of the schedule
  std::size_t n_samples = 1000;
  std::uint64_t seed = 0;
};

/// Dense pencil certificates are computed up to this many free vertices.
inline constexpr Index kDensePencilLimit = 2000;

HardyWeight hardy_weight(const GraphForm& form, const VertexFunction& g,
                         const HardyOptions& options = {}, const Tolerances& tol = {});

/// Checks sum f^2 w mu <= q(f) on random and adversarial f (the leading
/// pencil eigenvectors), and exactly via the pencil when it is small enough.
HardyVerification verify_hardy(const GraphForm& form, const VertexFunction& w,
                               std::size_t n_samples, std::uint64_t seed,
                               const Tolerances& tol = {});

/// Largest generalized eigenvalue of (diag(w mu), K) and its maximizer, or
/// +infinity when w charges the kernel of K.
struct PencilMax {
  double value = 0.0;
  VertexFunction maximizer;
};
PencilMax pencil_max(const GraphForm& form, const VertexFunction& w);

/// q(h f) - q(h f^2, h), nonnegative for h >= 0.
double abstract_hardy_gap(const GraphForm& form, const VertexFunction& h, const VertexFunction& f);

struct PerturbedBound {
  double lhs = 0.0;  // q(f) + alpha ||f||^2
  double rhs = 0.0;  // sum f^2 g / (G_alpha g) mu
};

PerturbedBound perturbed_hardy_bound(const GraphForm& form, const VertexFunction& g, double alpha,
                                     const VertexFunction& f, const Tolerances& tol = {});

/// The form f -> q(h f) + alpha ||h f||^2 as a GraphForm: weights
/// b(u,v) h(u) h(v) on free edges, measure h^2 mu and the potential
/// recovered by residual assembly. Edges to the Dirichlet boundary are
/// folded into the potential. Validated on random f.
GraphForm ground_state_transform(const GraphForm& form, const VertexFunction& h, double alpha,
                                 const Tolerances& tol = {});

}  // namespace critkit
