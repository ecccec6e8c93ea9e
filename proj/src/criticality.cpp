#include "critkit/criticality.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <sstream>

#include "critkit/error.hpp"
#include "critkit/hardy.hpp"
#include "linear_solver.hpp"
#include "parallel.hpp"

namespace critkit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* const kThirdAlternativeNote =
    "the alternative 'no nonzero excessive function' cannot occur here: finite forms generate "
    "kernel operators, which always admit strictly positive excessive functions";

struct Level {
  int radius = 0;
  GraphForm form;
  Index root = 0;
  CapacityResult cap;
};

std::vector<int> active_radii(const Exhaustion& e, const ClassifyConfig& config) {
  std::vector<int> out;
  for (int r : e.radii)
    if (config.max_radius <= 0 || r <= config.max_radius) out.push_back(r);
  if (out.empty()) throw Error(ErrorCode::BadParams, "no exhaustion radius within max_radius");
  return out;
}

std::vector<Level> compute_levels(const Exhaustion& e, const ClassifyConfig& config) {
  const std::vector<int> radii = active_radii(e, config);
  std::vector<Level> levels(radii.size());
  detail::parallel_for(radii.size(), config.threads, [&](std::size_t i) {
    Level& lv = levels[i];
    lv.radius = radii[i];
    lv.form = e.level(radii[i]);
    lv.root = lv.form.require_index(e.root);
    const std::string root[] = {e.root};
    lv.cap = capacity(lv.form, root, config.tol);
  });
  return levels;
}

CapacityTrace trace_of(const std::vector<Level>& levels) {
  CapacityTrace t;
  for (const auto& lv : levels) t.emplace_back(lv.radius, lv.cap.value);
  return t;
}

/// Least-squares slope of ys against xs.
double ls_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double den = n * sxx - sx * sx;
  return den != 0.0 ? (n * sxy - sx * sy) / den : kNaN;
}

/// Value at x = 0 of the quadratic through three points (x_i, y_i).
double quadratic_at_zero(const double x[3], const double y[3]) {
  double out = 0.0;
  for (int i = 0; i < 3; ++i) {
    double w = 1.0;
    for (int j = 0; j < 3; ++j)
      if (j != i) w *= (0.0 - x[j]) / (x[i] - x[j]);
    out += w * y[i];
  }
  return out;
}

std::vector<std::vector<std::pair<Index, double>>> adjacency(const GraphForm& form) {
  std::vector<std::vector<std::pair<Index, double>>> adj(static_cast<std::size_t>(form.size()));
  for (const Edge& e : form.edges()) {
    adj[static_cast<std::size_t>(e.u)].emplace_back(e.v, e.weight);
    adj[static_cast<std::size_t>(e.v)].emplace_back(e.u, e.weight);
  }
  return adj;
}

/// Free vertices within graph distance `radius` of the root, canonical order.
std::vector<Index> window_of(const GraphForm& form, Index root, int radius) {
  const auto adj = adjacency(form);
  std::vector<int> dist(static_cast<std::size_t>(form.size()), -1);
  std::deque<Index> queue{root};
  dist[static_cast<std::size_t>(root)] = 0;
  while (!queue.empty()) {
    const Index v = queue.front();
    queue.pop_front();
    if (dist[static_cast<std::size_t>(v)] == radius) continue;
    for (const auto& [w, b] : adj[static_cast<std::size_t>(v)]) {
      if (b <= 0.0 || form.is_boundary(w) || dist[static_cast<std::size_t>(w)] >= 0) continue;
      dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(v)] + 1;
      queue.push_back(w);
    }
  }
  std::vector<Index> out;
  for (Index v = 0; v < form.size(); ++v)
    if (dist[static_cast<std::size_t>(v)] >= 0) out.push_back(v);
  return out;
}

GroundState ground_state_from(const std::vector<Level>& levels, const ClassifyConfig& config) {
  const Level& last = levels.back();
  const std::vector<Index> window = window_of(last.form, last.root, config.window_radius);
  std::vector<std::string> ids;
  for (Index v : window) ids.push_back(last.form.vertices()[static_cast<std::size_t>(v)]);

  // Equilibrium values on the window for every level that contains it in its interior.
  struct Sample {
    int radius;
    double cap;
    Vector values;
  };
  std::vector<Sample> samples;
  for (const Level& lv : levels) {
    Vector vals(static_cast<Index>(ids.size()));
    bool inside = true;
    for (std::size_t i = 0; i < ids.size() && inside; ++i) {
      const auto idx = lv.form.index_of(ids[i]);
      inside = idx && !lv.form.is_boundary(*idx);
      if (inside) vals[static_cast<Index>(i)] = lv.cap.equilibrium[*idx];
    }
    if (inside) samples.push_back({lv.radius, lv.cap.value, std::move(vals)});
  }

  const double zero_cap = 1e-14;
  std::vector<Vector> estimates;
  for (std::size_t k = 1; k < samples.size(); ++k) {
    const Sample& a = samples[k - 1];
    const Sample& b = samples[k];
    const double drop = a.cap - b.cap;
    if (b.cap <= zero_cap || drop <= 1e-12 * a.cap) {
      estimates.push_back(b.values);
    } else {
      estimates.push_back(b.values + (b.cap / drop) * (b.values - a.values));
    }
  }

  GroundState gs;
  gs.radius = last.radius;
  gs.values.ids = ids;
  Vector h;
  if (estimates.size() >= 2) {
    h = estimates.back();
    gs.last_change = (estimates.back() - estimates[estimates.size() - 2]).cwiseAbs().maxCoeff();
    gs.converged = gs.last_change < config.tol.ground_state;
  } else {
    h = estimates.empty() ? samples.back().values : estimates.back();
    gs.last_change = 0.0;
    gs.converged = samples.back().cap <= zero_cap;
  }
  const auto root_pos = std::find(ids.begin(), ids.end(), last.form.vertices()[static_cast<std::size_t>(last.root)]);
  const double h_root = h[static_cast<Index>(root_pos - ids.begin())];
  if (h_root > 0.0) h /= h_root;
  if (!(h.minCoeff() > 0.0)) gs.converged = false;
  gs.values.values = h;

  // Residual of L h on window vertices whose neighbours all lie in the window.
  const auto adj = adjacency(last.form);
  std::vector<Index> pos(static_cast<std::size_t>(last.form.size()), -1);
  for (std::size_t i = 0; i < window.size(); ++i) pos[static_cast<std::size_t>(window[i])] = static_cast<Index>(i);
  for (std::size_t i = 0; i < window.size(); ++i) {
    const Index v = window[i];
    double acc = last.form.potential()[v] * last.form.measure()[v] * h[static_cast<Index>(i)];
    bool interior = true;
    for (const auto& [w, b] : adj[static_cast<std::size_t>(v)]) {
      if (pos[static_cast<std::size_t>(w)] < 0) {
        interior = false;
        break;
      }
      acc += b * (h[static_cast<Index>(i)] - h[pos[static_cast<std::size_t>(w)]]);
    }
    if (interior) gs.residual = std::max(gs.residual, std::abs(acc) / last.form.measure()[v]);
  }
  return gs;
}

LabeledFunction label(const GraphForm& form, const VertexFunction& f, bool free_only) {
  LabeledFunction out;
  std::vector<double> vals;
  for (Index v = 0; v < form.size(); ++v) {
    if (free_only && form.is_boundary(v)) continue;
    out.ids.push_back(form.vertices()[static_cast<std::size_t>(v)]);
    vals.push_back(f[v]);
  }
  out.values = Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size()));
  return out;
}

std::string format_threshold(const char* name, double v) {
  std::ostringstream s;
  s << name << " = " << v;
  return s.str();
}

double sampled_kappa(const GraphForm& form, const VertexFunction& g, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Vector gm = form.restrict_free(g).cwiseProduct(form.free_measure());
  double best = 0.0;
  auto consider = [&](const VertexFunction& f) {
    const double num = form.restrict_free(f).cwiseAbs().dot(gm);
    const double q = evaluate(form, f);
    if (num <= 0.0) return;
    best = std::max(best, q <= 1e-300 ? kInf : num / std::sqrt(q));
  };
  for (std::size_t s = 0; s < n; ++s) {
    const VertexFunction f = random_function(form, rng);
    consider(f);
    consider(f.cwiseAbs());
  }
  consider(form.ones());
  return best;
}

Verdict combine_check(CertificateBundle& b) {
  b.kappa_stable = b.green_verdict == Verdict::Subcritical;
  const bool decisive = b.green_verdict != Verdict::Inconclusive && b.capacity_verdict != Verdict::Inconclusive;
  b.consistent = !decisive || b.green_verdict == b.capacity_verdict;
  if (!b.consistent) {
    throw Error(ErrorCode::InconsistentCertificates,
                std::string("Green certificate says ") + to_string(b.green_verdict) + " but capacity says " +
                    to_string(b.capacity_verdict));
  }
  return b.green_verdict;
}

}  // namespace

GraphForm Exhaustion::level(int radius) const {
  if (!generator) throw Error(ErrorCode::BadParams, "exhaustion has no generator");
  GraphForm form = generator(radius);
  const auto root_idx = form.index_of(root);
  if (!root_idx || form.is_boundary(*root_idx)) {
    throw Error(ErrorCode::BadParams,
                "root '" + root + "' is not a free vertex of level " + std::to_string(radius));
  }
  return form;
}

Exhaustion constant_exhaustion(const GraphForm& form, std::string root) {
  Exhaustion e;
  e.generator = [form](int) { return form; };
  e.radii = {1, 2, 3};
  e.root = std::move(root);
  e.label = "constant";
  return e;
}

CapacityResult capacity(const GraphForm& form, std::span<const std::string> source, const Tolerances& tol) {
  if (source.empty()) throw Error(ErrorCode::BadParams, "capacity source set is empty");
  const Index n = form.free_count();
  std::vector<char> in_source(static_cast<std::size_t>(n), 0);
  for (const auto& id : source) {
    const Index v = form.require_index(id);
    if (form.is_boundary(v)) throw Error(ErrorCode::BadParams, "capacity source '" + id + "' is on the boundary");
    in_source[static_cast<std::size_t>(form.free_position(v))] = 1;
  }
  const SparseMatrix& K = form.energy_matrix();

  // Interior positions coupled to the source through interior paths.
  std::vector<Index> local(static_cast<std::size_t>(n), -1);
  std::vector<Index> interior;
  std::deque<Index> queue;
  std::vector<char> seen(in_source);
  for (Index p = 0; p < n; ++p)
    if (in_source[static_cast<std::size_t>(p)]) queue.push_back(p);
  while (!queue.empty()) {
    const Index p = queue.front();
    queue.pop_front();
    for (SparseMatrix::InnerIterator it(K, p); it; ++it) {
      const Index r = it.row();
      if (r == p || it.value() == 0.0 || seen[static_cast<std::size_t>(r)]) continue;
      seen[static_cast<std::size_t>(r)] = 1;
      local[static_cast<std::size_t>(r)] = static_cast<Index>(interior.size());
      interior.push_back(r);
      queue.push_back(r);
    }
  }
  std::sort(interior.begin(), interior.end());
  for (std::size_t i = 0; i < interior.size(); ++i) local[static_cast<std::size_t>(interior[i])] = static_cast<Index>(i);

  Vector f = Vector::Zero(n);
  for (Index p = 0; p < n; ++p)
    if (in_source[static_cast<std::size_t>(p)]) f[p] = 1.0;

  if (!interior.empty()) {
    const Index m = static_cast<Index>(interior.size());
    std::vector<Eigen::Triplet<double>> trips;
    Vector rhs = Vector::Zero(m);
    Vector mu_i(m);
    for (Index j = 0; j < m; ++j) {
      const Index col = interior[static_cast<std::size_t>(j)];
      mu_i[j] = form.free_measure()[col];
      for (SparseMatrix::InnerIterator it(K, col); it; ++it) {
        const Index r = it.row();
        if (in_source[static_cast<std::size_t>(r)]) {
          rhs[j] -= it.value();
        } else if (local[static_cast<std::size_t>(r)] >= 0) {
          trips.emplace_back(local[static_cast<std::size_t>(r)], j, it.value());
        }
      }
    }
    SparseMatrix Kii(m, m);
    Kii.setFromTriplets(trips.begin(), trips.end());
    const detail::ShiftedSolver solver(Kii, mu_i, 0.0, tol.solve);
    if (!solver.positive_definite()) {
      throw Error(ErrorCode::SolverFailure, "harmonic extension system is singular");
    }
    const Vector x = solver.solve(rhs);
    for (Index j = 0; j < m; ++j) f[interior[static_cast<std::size_t>(j)]] = x[j];
  }

  CapacityResult out;
  // q(f) = <1_K, K f> since K f vanishes off the source; both sides are
  // sums of nonnegative flux terms for c >= 0.
  const Vector Kf = K * f;
  double value = 0.0;
  for (Index p = 0; p < n; ++p)
    if (in_source[static_cast<std::size_t>(p)]) value += Kf[p];
  out.value = std::max(0.0, value);
  out.equilibrium = form.extend(f);
  return out;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Subcritical: return "Subcritical";
    case Verdict::Critical: return "Critical";
    case Verdict::Inconclusive: return "Inconclusive";
  }
  return "?";
}

double LabeledFunction::at(std::string_view id) const {
  const auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) throw Error(ErrorCode::UnknownVertex, "no value for vertex " + std::string(id));
  return values[static_cast<Index>(it - ids.begin())];
}

CapacityAssessment assess_capacity_trace(const CapacityTrace& trace, const ClassifyConfig& config) {
  CapacityAssessment a;
  const Tolerances& tol = config.tol;
  if (trace.empty()) {
    a.reason = "empty capacity trace";
    return a;
  }
  const std::size_t n = trace.size();
  for (std::size_t k = 1; k < n; ++k) {
    if (trace[k].second > trace[k - 1].second * (1.0 + 1e-9) + 1e-15) {
      a.monotone = false;
      a.reason = "capacity increased from R=" + std::to_string(trace[k - 1].first) + " to R=" +
                 std::to_string(trace[k].first) + "; the levels are not nested";
      return a;
    }
  }
  const double last = trace.back().second;
  // First index of the fitting window: the last half, but at least two increments.
  const std::size_t half = n >= 3 ? std::min((n - 1) / 2, n - 3) : 0;

  // Log-log exponent of the capacity itself, reported for reference.
  {
    std::vector<double> xs, ys;
    for (std::size_t k = half; k < n; ++k) {
      if (trace[k].second <= 0.0) continue;
      xs.push_back(std::log(trace[k].first));
      ys.push_back(std::log(trace[k].second));
    }
    if (xs.size() >= 2) a.loglog_exponent = ls_slope(xs, ys);
  }

  if (last < tol.cap) {
    a.verdict = Verdict::Critical;
    a.extrapolated_limit = 0.0;
    a.reason = "capacity below tol_cap";
    return a;
  }

  bool stationary = n >= 2;
  for (std::size_t k = 1; k < n; ++k)
    stationary &= std::abs(trace[k].second - trace[0].second) <= 1e-12 * trace[0].second;
  if (stationary) {
    a.extrapolated_limit = last;
    a.limit_spread = 0.0;
    a.growth_exponent = -kInf;
    if (last > 10.0 * tol.cap) {
      a.verdict = Verdict::Subcritical;
      a.reason = "capacity is stationary across levels";
    } else {
      a.reason = "stationary capacity between tol_cap and 10 tol_cap";
    }
    return a;
  }

  // Growth exponent of the resistance increments d rho / d log R.
  {
    std::vector<double> xs, ys;
    std::size_t considered = 0;
    for (std::size_t k = half; k + 1 < n; ++k) {
      ++considered;
      const double r0 = trace[k].first, r1 = trace[k + 1].first;
      const double inc = (1.0 / trace[k + 1].second - 1.0 / trace[k].second) / std::log(r1 / r0);
      if (inc > 1e-14 / trace[k].second) {
        xs.push_back(0.5 * (std::log(r0) + std::log(r1)));
        ys.push_back(std::log(inc));
      }
    }
    if (xs.size() >= 2) {
      a.growth_exponent = ls_slope(xs, ys);
    } else if (considered >= 2) {
      a.growth_exponent = -kInf;
    }
  }

  // Three-point extrapolations in 1/R and their spread over the last three radii.
  std::vector<double> limits;
  for (std::size_t k = 2; k < n; ++k) {
    const double x[3] = {1.0 / trace[k - 2].first, 1.0 / trace[k - 1].first, 1.0 / trace[k].first};
    const double y[3] = {trace[k - 2].second, trace[k - 1].second, trace[k].second};
    limits.push_back(quadratic_at_zero(x, y));
  }
  if (!limits.empty()) a.extrapolated_limit = limits.back();
  if (limits.size() >= 3) {
    const double e = limits.back();
    double spread = 0.0;
    for (std::size_t k = limits.size() - 3; k < limits.size(); ++k) spread = std::max(spread, std::abs(limits[k] - e));
    a.limit_spread = spread / std::abs(e);
  }

  if (std::isnan(a.growth_exponent)) {
    a.reason = "too few radii to fit the resistance growth";
    return a;
  }
  // A stable positive limit with decaying resistance increments is decisive;
  // the exponent alone can sit near zero while 1/R is still comparable to the
  // limit.
  const bool stable = a.limit_spread < tol.cap_stable && a.extrapolated_limit > 10.0 * tol.cap;
  if (stable && a.growth_exponent < 0.0) {
    a.verdict = Verdict::Subcritical;
    a.reason = "capacity stabilizes above a positive floor";
    return a;
  }
  if (a.growth_exponent >= config.growth_threshold) {
    a.verdict = Verdict::Critical;
    a.extrapolated_limit = 0.0;
    a.reason = "resistance to the boundary grows without bound (cap_R -> 0)";
    return a;
  }
  if (!(a.limit_spread < tol.cap_stable)) {
    a.reason = std::isnan(a.limit_spread) ? "too few radii to test stabilization"
                                          : "extrapolated capacity has not stabilized";
  } else {
    a.reason = "extrapolated capacity limit is not above 10 tol_cap";
  }
  return a;
}

ClassificationReport classify(const Exhaustion& exhaustion, const ClassifyConfig& config) {
  ClassificationReport rep;
  rep.root = exhaustion.root;
  const std::vector<Level> levels = compute_levels(exhaustion, config);
  rep.capacity_trace = trace_of(levels);
  rep.assessment = assess_capacity_trace(rep.capacity_trace, config);
  rep.verdict = rep.assessment.verdict;
  rep.notes.push_back(rep.assessment.reason);
  rep.notes.push_back(kThirdAlternativeNote);
  rep.notes.push_back(format_threshold("growth_threshold", config.growth_threshold) + ", " +
                      format_threshold("tol_cap", config.tol.cap) + ", " +
                      format_threshold("tol_cap_stable", config.tol.cap_stable));
  rep.notes.push_back("root '" + exhaustion.root + "' is metadata: the verdict does not depend on it for irreducible forms");
  if (!config.attach_certificates) return rep;

  if (rep.verdict == Verdict::Critical) {
    rep.ground_state = ground_state_from(levels, config);
    if (!rep.ground_state->converged) {
      std::ostringstream s;
      s << "ground state not converged on window radius " << config.window_radius << " (last change "
        << rep.ground_state->last_change << "); best estimate attached";
      rep.notes.push_back(s.str());
    }
  } else if (rep.verdict == Verdict::Subcritical) {
    const GraphForm& form = levels.back().form;
    try {
      HardyOptions opt;
      opt.n_samples = config.hardy_samples;
      opt.seed = config.seed;
      const HardyWeight hw = hardy_weight(form, form.ones(), opt, config.tol);
      rep.hardy_weight = label(form, hw.weight, true);
      rep.hardy_rho = hw.verification.rho_sampled;
      rep.notes.push_back("Hardy weight g/Gg with g = 1 on level R=" + std::to_string(levels.back().radius));
    } catch (const Error& e) {
      rep.notes.push_back(std::string("Hardy weight not attached: ") + e.what());
    }
  }
  return rep;
}

GroundState agmon_ground_state(const Exhaustion& exhaustion, const ClassifyConfig& config) {
  const std::vector<Level> levels = compute_levels(exhaustion, config);
  const CapacityAssessment a = assess_capacity_trace(trace_of(levels), config);
  if (a.verdict != Verdict::Critical) {
    throw Error(ErrorCode::NotCritical, std::string("classification is ") + to_string(a.verdict) + ": " + a.reason);
  }
  GroundState gs = ground_state_from(levels, config);
  if (!gs.converged) {
    std::ostringstream s;
    s << "ground state estimates differ by " << gs.last_change << " on window radius " << config.window_radius;
    throw Error(ErrorCode::NoConvergence, s.str());
  }
  return gs;
}

std::vector<NullTerm> null_sequence(const Exhaustion& exhaustion, std::size_t n_terms, const ClassifyConfig& config) {
  const std::vector<Level> levels = compute_levels(exhaustion, config);
  const CapacityAssessment a = assess_capacity_trace(trace_of(levels), config);
  if (a.verdict != Verdict::Critical) {
    throw Error(ErrorCode::NotCritical, std::string("classification is ") + to_string(a.verdict));
  }
  std::vector<NullTerm> out;
  for (std::size_t k = 0; k < std::min(n_terms, levels.size()); ++k) {
    NullTerm t;
    t.radius = levels[k].radius;
    t.energy = evaluate(levels[k].form, levels[k].cap.equilibrium);
    t.phi = label(levels[k].form, levels[k].cap.equilibrium, false);
    out.push_back(std::move(t));
  }
  return out;
}

CertificateBundle subcriticality_certificates(const GraphForm& form, const VertexFunction& g, std::size_t n_samples,
                                              std::uint64_t seed, const Tolerances& tol) {
  form.check_domain(g);
  if (form.free_count() == 0 || (form.restrict_free(g).array() <= 0.0).any()) {
    throw Error(ErrorCode::NonPositiveInput, "certificates require g > 0 on the free vertices");
  }
  CertificateBundle b;
  LevelCertificate lc;
  try {
    const GreenResult green = green_apply(form, g, {}, tol);
    lc.green_status = green.status;
    if (green.status == GreenStatus::Finite) {
      lc.pairing = inner(form, g, *green.value);
      lc.kappa_exact = std::sqrt(lc.pairing);
      b.green_verdict = Verdict::Subcritical;
    } else {
      b.green_verdict = Verdict::Critical;
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Inconclusive) throw;
    b.notes.push_back(e.what());
  }
  lc.kappa_sampled = sampled_kappa(form, g, n_samples, seed);
  b.levels.push_back(lc);

  b.capacity_verdict = Verdict::Subcritical;
  for (const auto& comp : irreducible_components(form)) {
    const std::string root[] = {comp.front()};
    if (capacity(form, root, tol).value < tol.cap) b.capacity_verdict = Verdict::Critical;
  }
  combine_check(b);
  return b;
}

CertificateBundle subcriticality_certificates(const Exhaustion& exhaustion,
                                              const std::function<VertexFunction(const GraphForm&)>& g,
                                              const ClassifyConfig& config) {
  const std::vector<Level> levels = compute_levels(exhaustion, config);
  CertificateBundle b;
  b.levels.resize(levels.size());
  detail::parallel_for(levels.size(), config.threads, [&](std::size_t k) {
    const GraphForm& form = levels[k].form;
    const VertexFunction gk = g(form);
    form.check_domain(gk);
    const Vector gf = form.restrict_free(gk);
    if ((gf.array() < 0.0).any() || gf.maxCoeff() <= 0.0) {
      throw Error(ErrorCode::NonPositiveInput, "certificates require g >= 0 and g != 0");
    }
    LevelCertificate& lc = b.levels[k];
    lc.radius = levels[k].radius;
    try {
      const GreenResult green = green_apply(form, gk, {}, config.tol);
      lc.green_status = green.status;
      if (green.status == GreenStatus::Finite) {
        lc.pairing = inner(form, gk, *green.value);
        lc.kappa_exact = std::sqrt(lc.pairing);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Inconclusive) throw;
    }
    lc.kappa_sampled = sampled_kappa(form, gk, config.hardy_samples, config.seed + static_cast<std::uint64_t>(k));
  });

  CapacityTrace green_trace;
  bool complete = true;
  for (const auto& lc : b.levels) {
    complete &= lc.green_status.has_value();
    green_trace.emplace_back(lc.radius, std::isfinite(lc.pairing) ? 1.0 / lc.pairing : 0.0);
  }
  if (complete) {
    const CapacityAssessment ga = assess_capacity_trace(green_trace, config);
    b.green_verdict = ga.verdict;
    b.notes.push_back("Green trend: " + ga.reason);
  } else {
    b.notes.push_back("Green limit inconclusive on some level");
  }
  const CapacityAssessment ca = assess_capacity_trace(trace_of(levels), config);
  b.capacity_verdict = ca.verdict;
  b.notes.push_back("capacity: " + ca.reason);
  combine_check(b);
  return b;
}

}  // namespace critkit
