#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "critkit/form.hpp"

namespace critkit {

/// Vertex count above which semigroup_apply switches from the dense
/// eigendecomposition to a Lanczos (Krylov) exponential action.
inline constexpr Index kSemigroupDenseCutoff = 500;

/// u = G_alpha f, i.e. (L + alpha) u = f in the mu-inner product.
VertexFunction resolvent_apply(const GraphForm& form, double alpha, const VertexFunction& f,
                               const Tolerances& tol = {});

/// e^{-tL} f.
VertexFunction semigroup_apply(const GraphForm& form, double t, const VertexFunction& f,
                               const Tolerances& tol = {});

/// L f = M^{-1} K f on the free vertices (zero on the boundary).
VertexFunction apply_generator(const GraphForm& form, const VertexFunction& f);

/// Geometric schedule from `start` down to `stop` with the given ratio.
std::vector<double> geometric_schedule(double start, double stop, double ratio);
/// Default Green schedule 1 -> 1e-8, ratio 1/2.
std::vector<double> default_alpha_schedule();

enum class GreenStatus { Finite, Diverges };

struct GreenResult {
  GreenStatus status = GreenStatus::Finite;
  std::optional<VertexFunction> value;
  std::vector<std::pair<double, double>> alpha_trace;  // (alpha, ||G_alpha f||_inf)
  double loglog_slope = 0.0;  // d log||G_alpha f|| / d log alpha over the tail
  bool direct = false;        // K was invertible and Gf = K^{-1} M f was solved exactly
};

struct GreenOptions {
  std::vector<double> alpha_schedule = default_alpha_schedule();
  /// Absolute threshold; <= 0 means divergence_factor * ||f||_inf.
  double divergence_threshold = 0.0;
};

/// Gf = lim_{alpha -> 0+} G_alpha f for f >= 0. When the energy matrix is
/// positive definite the limit is the solve of K u = M f (no trace is
/// recorded). Otherwise the alpha schedule is walked; the stabilization test is
/// applied to polynomial extrapolations (in alpha) of the trace so that the
/// O(alpha) bias of the resolvent does not mask convergence. Throws
/// Inconclusive (the message carries the trace) when neither stabilization
/// nor divergence is detected.
GreenResult green_apply(const GraphForm& form, const VertexFunction& f,
                        const GreenOptions& options = {}, const Tolerances& tol = {});

struct ExcessiveReport {
  bool excessive = false;
  double max_violation = 0.0;        // max(-(Lh)_v) / ||h||_inf
  double grid_max_violation = 0.0;   // max over grid of alpha (alpha G_alpha h - h)_v / ||h||_inf
  bool grid_agrees = true;
};

/// Default grid for the resolvent excessivity cross-check, scaled by ||L||.
std::vector<double> default_excessive_grid(const GraphForm& form);

/// Exact test Lh >= -tol componentwise, cross-checked by alpha G_alpha h <= h
/// on the grid. Requires h >= 0.
ExcessiveReport is_excessive(const GraphForm& form, const VertexFunction& h,
                             const std::vector<double>& alpha_grid, const Tolerances& tol = {});

struct ContractionReport {
  double q_scaled = 0.0;       // q(alpha G_alpha f)
  double q_f = 0.0;            // q(f)
  double defect_energy = 0.0;  // alpha ||f - alpha G_alpha f||^2
  bool holds = true;
};

ContractionReport check_resolvent_contraction(const GraphForm& form, const VertexFunction& f,
                                              double alpha, const Tolerances& tol = {});

}  // namespace critkit
