#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "critkit/form.hpp"
#include "critkit/resolvent.hpp"

namespace critkit {

/// A nested family of finite forms with Dirichlet conditions on the outer
/// boundary of each level. generator(R) must be a pure function of R, and
/// `root` must be a free vertex of every level.
struct Exhaustion {
  std::function<GraphForm(int)> generator;
  std::vector<int> radii;
  std::string root;
  std::string label;

  [[nodiscard]] GraphForm level(int radius) const;
};

/// The same finite form at every level (radii 1, 2, 3).
Exhaustion constant_exhaustion(const GraphForm& form, std::string root);

struct CapacityResult {
  double value = 0.0;
  VertexFunction equilibrium;
};

/// cap(K) = min { q(f) : f = 1 on K, f = 0 on the boundary } and its
/// minimizer. Free vertices that are not coupled to K (through the interior)
/// get the value 0.
CapacityResult capacity(const GraphForm& form, std::span<const std::string> source,
                        const Tolerances& tol = {});

enum class Verdict { Subcritical, Critical, Inconclusive };
const char* to_string(Verdict v);

struct ClassifyConfig {
  Tolerances tol;
  int max_radius = 0;  // 0 keeps every radius of the exhaustion
  int window_radius = 3;
  /// Resistance growth exponent at or above which the capacity is taken to
  /// decay to zero. See assess_capacity_trace.
  double growth_threshold = -0.5;
  std::size_t hardy_samples = 200;
  std::uint64_t seed = 0;
  bool attach_certificates = true;
  unsigned threads = 0;  // 0: hardware concurrency
};

using CapacityTrace = std::vector<std::pair<int, double>>;

/// Decision on a nonincreasing capacity sequence.
///
/// With rho_R = 1/cap_R the resistance to the boundary, the increments
/// d rho / d log R are fitted to a power of R over the last half of the
/// radii (at least two increments). The limit of cap_R is estimated by the
/// extrapolation C + a/R + b/R^2 through three consecutive radii.
///
/// Subcritical: the extrapolated limits over the last three radii agree to
/// cap_stable (relative), exceed 10 tol_cap, and the increments decay.
/// Critical: otherwise, when the growth exponent is >= growth_threshold
/// (rho grows at least logarithmically, so cap_R -> 0) or the last capacity
/// is below tol_cap. An exactly stationary sequence is its own limit.
struct CapacityAssessment {
  Verdict verdict = Verdict::Inconclusive;
  bool monotone = true;
  double extrapolated_limit = std::numeric_limits<double>::quiet_NaN();
  double limit_spread = std::numeric_limits<double>::quiet_NaN();
  double growth_exponent = std::numeric_limits<double>::quiet_NaN();
  double loglog_exponent = std::numeric_limits<double>::quiet_NaN();
  std::string reason;
};

CapacityAssessment assess_capacity_trace(const CapacityTrace& trace, const ClassifyConfig& config);

/// Values attached to vertex ids, so that results of different levels can
/// be compared and serialized without their forms.
struct LabeledFunction {
  std::vector<std::string> ids;
  Vector values;

  [[nodiscard]] double at(std::string_view id) const;
};

struct GroundState {
  LabeledFunction values;     // on the output window, h(root) = 1
  int radius = 0;             // level the estimate comes from
  double last_change = 0.0;   // sup-norm change on the window between the last two estimates
  double residual = 0.0;      // max |L h| over window vertices whose neighbours are all in the window
  bool converged = false;
};

struct ClassificationReport {
  Verdict verdict = Verdict::Inconclusive;
  std::string root;
  CapacityTrace capacity_trace;
  CapacityAssessment assessment;
  std::optional<GroundState> ground_state;
  /// Hardy weight g/Gg with g = 1 on the largest level, on that level's free vertices.
  std::optional<LabeledFunction> hardy_weight;
  std::optional<double> hardy_rho;
  std::vector<std::string> notes;
};

ClassificationReport classify(const Exhaustion& exhaustion, const ClassifyConfig& config = {});

/// Agmon ground state on the window of the given radius around the root.
/// The equilibrium potentials behave like h - cap_R a + o(cap_R) on a fixed
/// window, so consecutive levels are extrapolated linearly in cap_R to
/// cap = 0 before the convergence test. Throws NotCritical or NoConvergence.
GroundState agmon_ground_state(const Exhaustion& exhaustion, const ClassifyConfig& config = {});

struct NullTerm {
  int radius = 0;
  double energy = 0.0;  // q(phi_R) = cap_R
  LabeledFunction phi;
};

/// The equilibrium potentials of the first n_terms levels. Throws NotCritical.
std::vector<NullTerm> null_sequence(const Exhaustion& exhaustion, std::size_t n_terms,
                                    const ClassifyConfig& config = {});

struct LevelCertificate {
  int radius = 0;
  std::optional<GreenStatus> green_status;  // empty when the Green limit was inconclusive
  double pairing = std::numeric_limits<double>::infinity();  // <g, Gg>_mu
  double kappa_exact = std::numeric_limits<double>::infinity();  // sqrt(<g, Gg>)
  double kappa_sampled = 0.0;  // sup of sum |f| g mu / q(f)^{1/2} over the samples
};

struct CertificateBundle {
  std::vector<LevelCertificate> levels;
  Verdict green_verdict = Verdict::Inconclusive;
  Verdict capacity_verdict = Verdict::Inconclusive;
  bool kappa_stable = false;
  bool consistent = true;
  std::vector<std::string> notes;
};

/// Green existence and the L1-type inequality sum |f| g mu <= kappa q(f)^{1/2}
/// on a single form, compared with the capacity test. Throws
/// InconsistentCertificates when the decisive verdicts disagree.
CertificateBundle subcriticality_certificates(const GraphForm& form, const VertexFunction& g,
                                              std::size_t n_samples, std::uint64_t seed,
                                              const Tolerances& tol = {});

/// Per-level version: the trend of <g, G_R g> is classified with the same
/// rule as the capacity (applied to 1/<g, G_R g>).
CertificateBundle subcriticality_certificates(const Exhaustion& exhaustion,
                                              const std::function<VertexFunction(const GraphForm&)>& g,
                                              const ClassifyConfig& config = {});

}  // namespace critkit
