#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "critkit/form.hpp"

namespace critkit {

enum class ProfileMode { Hardy, Poincare };
const char* to_string(ProfileMode m);

struct ProfileBudget {
  std::size_t starts = 50;
  std::size_t iterations = 200;
};

/// Profile of the weak inequality
///   sum f^2 w mu <= alpha(r) q(f) + r ||f/h||_inf^2
/// (for f orthogonal to h in L^2(w mu) in Poincare mode) on an r grid.
///
/// alpha_cert(r) is certified: writing f = h g, the inequality reads
/// g^T A g <= r ||g||_inf^2 with A = diag(h^2 w mu) - alpha H K H, and any
/// diagonal D >= A on the admissible subspace gives g^T A g <= sum d_i^+.
/// Two families of D are solved exactly in alpha (a uniform shift, and
/// diag(A) plus a shift); the smaller alpha is kept, then a running minimum
/// over increasing r makes the profile nonincreasing.
///
/// alpha_lb(r) is the best value of (sum f^2 w mu - r) / q(f) over
/// candidates with ||f/h||_inf = 1, so alpha_lb <= alpha_cert.
struct AlphaProfile {
  ProfileMode mode = ProfileMode::Hardy;
  std::vector<double> r_grid;
  std::vector<double> alpha_cert;
  std::vector<double> alpha_lb;
  VertexFunction w;
  VertexFunction h;
  double weight_mass = 0.0;  // sum h^2 w mu; alpha(r) = 0 for r >= weight_mass
  double alpha_max = 0.0;    // pencil maximum, the r -> 0 value of the certificate
  bool budget_exhausted = false;
  std::vector<std::string> warnings;
};

/// Geometric grid with `per_decade` points from `lo` up to `hi` (inclusive).
std::vector<double> default_r_grid(double weight_mass, double lo = 1e-12, int per_decade = 2);

/// Throws KernelMismatch (Poincare mode with L h != 0), NonPositiveH,
/// NonPositiveInput (w < 0) or BadParams (grid, or more free vertices than
/// the dense limit).
AlphaProfile alpha_profile(const GraphForm& form, const VertexFunction& w, const VertexFunction& h,
                           const std::vector<double>& r_grid, ProfileMode mode, std::uint64_t seed,
                           const ProfileBudget& budget = {}, const Tolerances& tol = {},
                           unsigned threads = 0);

/// alpha_cert interpolated linearly in r between grid points, constant past
/// the last point. Below the first point it follows the chord towards
/// max(alpha_max, alpha_cert[0]) at r = 0.
double interpolate_alpha(const AlphaProfile& profile, double r);

using DecayCurve = std::vector<std::pair<double, double>>;  // (t, xi(t))

/// xi(t) = inf { r > 0 : -alpha(r) log(r) / 2 <= t }, with alpha from
/// interpolate_alpha. Throws GridTooCoarse if the crossing lies below the
/// grid and alpha_max is infinite. A vanishing weight gives xi = 0.
DecayCurve decay_rate(const AlphaProfile& profile, const std::vector<double>& t_grid);

struct DecayReport {
  std::size_t samples = 0;
  double worst_margin = 1.0;  // min over samples of (rhs - lhs) / rhs
  std::size_t tight = 0;      // samples with margin below 1e-3
  std::vector<std::pair<double, double>> worst_by_t;
};

/// Checks ||T_t f||^2 <= xi(t) (||f||^2 + ||f/h||_inf^2) on random f.
/// Throws ExcessivityFailure if h is not excessive, ViolationFound on a
/// violation beyond 1e-8 relative.
DecayReport verify_decay(const GraphForm& form, const VertexFunction& h, const DecayCurve& xi,
                         std::size_t n_samples, std::uint64_t seed, const Tolerances& tol = {});

/// (f min h) max (-h), componentwise.
VertexFunction truncation_map(const VertexFunction& f, const VertexFunction& h);

struct Projection {
  VertexFunction f_proj;
  double c = 0.0;
};

/// Plain: f - C h with C = <f, h>_w / <h, h>_w. Truncated: T(f - C h) with C
/// found by bisection so that <T(f - C h), h>_w = 0.
Projection poincare_project(const GraphForm& form, const VertexFunction& f, const VertexFunction& h,
                            const VertexFunction& w, bool truncated = false);

}  // namespace critkit
