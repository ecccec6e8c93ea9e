#include "critkit/form.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Eigenvalues>

#include "critkit/error.hpp"
#include "linear_solver.hpp"

namespace critkit {

namespace {

std::pair<std::string, std::string> ordered(const std::string& a, const std::string& b) {
  return a < b ? std::pair{a, b} : std::pair{b, a};
}

}  // namespace

std::optional<Index> GraphForm::index_of(std::string_view id) const {
  auto it = lookup_.find(std::string(id));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

Index GraphForm::require_index(std::string_view id) const {
  auto idx = index_of(id);
  if (!idx) throw Error(ErrorCode::UnknownVertex, "unknown vertex '" + std::string(id) + "'");
  return *idx;
}

Vector GraphForm::restrict_free(const VertexFunction& f) const {
  Vector out(free_count());
  for (Index i = 0; i < free_count(); ++i) out[i] = f[free_[static_cast<std::size_t>(i)]];
  return out;
}

VertexFunction GraphForm::extend(const Vector& free_values) const {
  VertexFunction out = VertexFunction::Zero(size());
  for (Index i = 0; i < free_count(); ++i) out[free_[static_cast<std::size_t>(i)]] = free_values[i];
  return out;
}

VertexFunction GraphForm::ones() const { return extend(Vector::Ones(free_count())); }

void GraphForm::check_domain(const VertexFunction& f) const {
  if (f.size() != size()) {
    throw Error(ErrorCode::DomainMismatch, "function has " + std::to_string(f.size()) +
                                               " entries, form has " + std::to_string(size()) +
                                               " vertices");
  }
  for (Index v = 0; v < size(); ++v) {
    if (boundary_[static_cast<std::size_t>(v)] && f[v] != 0.0) {
      throw Error(ErrorCode::DomainMismatch,
                  "function is nonzero on Dirichlet vertex '" + ids_[static_cast<std::size_t>(v)] + "'");
    }
  }
}

GraphSpec GraphForm::spec() const {
  GraphSpec s;
  s.vertices = ids_;
  for (const Edge& e : edges_) {
    s.edges.push_back({ids_[static_cast<std::size_t>(e.u)], ids_[static_cast<std::size_t>(e.v)], e.weight});
  }
  for (Index v = 0; v < size(); ++v) {
    const auto& id = ids_[static_cast<std::size_t>(v)];
    s.mu[id] = mu_[v];
    s.potential[id] = c_[v];
    if (boundary_[static_cast<std::size_t>(v)]) s.dirichlet.push_back(id);
  }
  return s;
}

GraphForm build_form(const GraphSpec& spec, const Tolerances& tol) {
  GraphForm form;
  form.ids_ = spec.vertices;
  std::sort(form.ids_.begin(), form.ids_.end());
  if (std::adjacent_find(form.ids_.begin(), form.ids_.end()) != form.ids_.end()) {
    throw Error(ErrorCode::ValidationError, "duplicate vertex id '" +
                                                *std::adjacent_find(form.ids_.begin(), form.ids_.end()) + "'");
  }
  const auto n = static_cast<Index>(form.ids_.size());
  form.lookup_.reserve(form.ids_.size());
  for (Index i = 0; i < n; ++i) form.lookup_.emplace(form.ids_[static_cast<std::size_t>(i)], i);

  form.mu_ = Vector::Ones(n);
  for (const auto& [id, value] : spec.mu) {
    const Index v = form.require_index(id);
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw Error(ErrorCode::NonPositiveMeasure,
                  "measure of '" + id + "' is " + std::to_string(value) + ", must be > 0");
    }
    form.mu_[v] = value;
  }
  form.c_ = Vector::Zero(n);
  for (const auto& [id, value] : spec.potential) {
    if (!std::isfinite(value)) throw Error(ErrorCode::ValidationError, "non-finite potential at '" + id + "'");
    form.c_[form.require_index(id)] = value;
  }

  form.boundary_.assign(static_cast<std::size_t>(n), false);
  for (const auto& id : spec.dirichlet) {
    auto v = form.index_of(id);
    if (!v) {
      throw Error(ErrorCode::DisconnectedDirichletSpec,
                  "Dirichlet vertex '" + id + "' is not in the vertex set");
    }
    form.boundary_[static_cast<std::size_t>(*v)] = true;
  }

  // Symmetric edge weights; a pair may be declared in both orientations only
  // with identical weights.
  std::map<std::pair<std::string, std::string>, double> weights;
  for (const auto& e : spec.edges) {
    (void)form.require_index(e.u);
    (void)form.require_index(e.v);
    if (e.u == e.v) throw Error(ErrorCode::ValidationError, "self-loop at '" + e.u + "'");
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw Error(ErrorCode::NonPositiveWeight, "edge [" + e.u + ", " + e.v + "] has weight " +
                                                    std::to_string(e.weight) + ", must be > 0");
    }
    auto key = ordered(e.u, e.v);
    auto [it, inserted] = weights.emplace(key, e.weight);
    if (!inserted && it->second != e.weight) {
      throw Error(ErrorCode::NonSymmetricWeights, "edge [" + key.first + ", " + key.second +
                                                      "] declared with weights " +
                                                      std::to_string(it->second) + " and " +
                                                      std::to_string(e.weight));
    }
  }
  form.edges_.reserve(weights.size());
  for (const auto& [key, w] : weights) {
    form.edges_.push_back({form.lookup_.at(key.first), form.lookup_.at(key.second), w});
  }

  form.free_pos_.assign(static_cast<std::size_t>(n), -1);
  for (Index v = 0; v < n; ++v) {
    if (!form.boundary_[static_cast<std::size_t>(v)]) {
      form.free_pos_[static_cast<std::size_t>(v)] = static_cast<Index>(form.free_.size());
      form.free_.push_back(v);
    }
  }
  const Index m = form.free_count();
  form.mu_free_ = Vector(m);
  for (Index i = 0; i < m; ++i) form.mu_free_[i] = form.mu_[form.free_[static_cast<std::size_t>(i)]];

  // K = D - B + C mu with Dirichlet rows/columns deleted.
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(form.edges_.size() * 4 + static_cast<std::size_t>(m));
  Vector diag = Vector::Zero(m);
  for (Index i = 0; i < m; ++i) {
    const Index v = form.free_[static_cast<std::size_t>(i)];
    diag[i] = form.c_[v] * form.mu_[v];
  }
  for (const Edge& e : form.edges_) {
    const Index pu = form.free_position(e.u);
    const Index pv = form.free_position(e.v);
    if (pu >= 0) diag[pu] += e.weight;
    if (pv >= 0) diag[pv] += e.weight;
    if (pu >= 0 && pv >= 0) {
      triplets.emplace_back(pu, pv, -e.weight);
      triplets.emplace_back(pv, pu, -e.weight);
    }
  }
  for (Index i = 0; i < m; ++i) triplets.emplace_back(i, i, diag[i]);
  form.K_.resize(m, m);
  form.K_.setFromTriplets(triplets.begin(), triplets.end());
  form.K_.makeCompressed();

  double bound = 0.0;
  for (Index j = 0; j < m; ++j) {
    double col = 0.0;
    for (SparseMatrix::InnerIterator it(form.K_, j); it; ++it) col += std::abs(it.value());
    bound = std::max(bound, col / form.mu_free_[j]);
  }
  form.norm_bound_ = bound;
  form.cache_ = std::make_shared<detail::FormCache>();

  const bool signed_potential = (form.c_.array() < 0.0).any();
  if (signed_potential && m > 0) {
    const double threshold = -tol.psd_rel * std::max(bound, 1.0);
    if (m <= 2000) {
      const double lambda_min = smallest_form_eigenvalue(form);
      if (lambda_min < threshold) {
        throw Error(ErrorCode::FormNotNonnegative,
                    "form is not nonnegative: smallest eigenvalue " + std::to_string(lambda_min));
      }
    } else {
      // Sylvester inertia: K + |threshold| M must have positive pivots.
      detail::ShiftedSolver probe(form.K_, form.mu_free_, -threshold, tol.solve);
      if (!probe.positive_definite()) {
        throw Error(ErrorCode::FormNotNonnegative,
                    "form is not nonnegative: negative pivot in LDLT of K + tol M");
      }
    }
  }
  return form;
}

double smallest_form_eigenvalue(const GraphForm& form) {
  if (form.free_count() == 0) return 0.0;
  return detail::spectral(form)->eigenvalues[0];
}

double evaluate(const GraphForm& form, const VertexFunction& f) {
  return evaluate_bilinear(form, f, f);
}

double evaluate_bilinear(const GraphForm& form, const VertexFunction& f, const VertexFunction& g) {
  form.check_domain(f);
  form.check_domain(g);
  const Vector ff = form.restrict_free(f);
  const Vector gf = form.restrict_free(g);
  return ff.dot(form.energy_matrix() * gf);
}

double inner(const GraphForm& form, const VertexFunction& f, const VertexFunction& g) {
  double s = 0.0;
  for (Index v : form.free_vertices()) s += f[v] * g[v] * form.measure()[v];
  return s;
}

double norm_sq(const GraphForm& form, const VertexFunction& f) { return inner(form, f, f); }

FirstBdReport check_first_bd(const GraphForm& form, std::size_t n_samples, std::uint64_t seed,
                             const Tolerances& tol) {
  std::mt19937_64 rng(seed);
  FirstBdReport report;
  report.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < n_samples; ++s) {
    VertexFunction f = random_function(form, rng);
    const double nrm = std::sqrt(norm_sq(form, f));
    if (nrm > 0.0) f /= nrm;
    const double violation = evaluate(form, f.cwiseAbs()) - evaluate(form, f);
    report.max_violation = std::max(report.max_violation, violation);
    ++report.samples;
    if (violation > tol.ineq) {
      throw Error(ErrorCode::ViolationFound,
                  "q(|f|) exceeds q(f) by " + std::to_string(violation) + " at sample " +
                      std::to_string(s));
    }
  }
  if (report.samples == 0) report.max_violation = 0.0;
  return report;
}

double check_lattice_inequality(const GraphForm& form, const VertexFunction& f,
                                const VertexFunction& g) {
  const VertexFunction lo = f.cwiseMin(g);
  const VertexFunction hi = f.cwiseMax(g);
  return evaluate(form, f) + evaluate(form, g) - evaluate(form, lo) - evaluate(form, hi);
}

InvarianceReport is_invariant_set(const GraphForm& form, std::span<const std::string> set,
                                  std::size_t n_samples, std::uint64_t seed,
                                  const Tolerances& tol) {
  InvarianceReport report;
  std::vector<bool> in_set(static_cast<std::size_t>(form.size()), false);
  for (const auto& id : set) in_set[static_cast<std::size_t>(form.require_index(id))] = true;
  for (Index v = 0; v < form.size(); ++v) {
    if (in_set[static_cast<std::size_t>(v)]) report.set.push_back(form.vertices()[static_cast<std::size_t>(v)]);
  }

  VertexFunction indicator_a = form.zeros();
  VertexFunction indicator_b = form.zeros();
  for (Index v : form.free_vertices()) {
    (in_set[static_cast<std::size_t>(v)] ? indicator_a : indicator_b)[v] = 1.0;
  }

  double crossing = 0.0;
  for (const Edge& e : form.edges()) {
    if (form.is_boundary(e.u) || form.is_boundary(e.v)) continue;
    if (in_set[static_cast<std::size_t>(e.u)] != in_set[static_cast<std::size_t>(e.v)]) crossing += e.weight;
  }
  report.is_invariant = crossing == 0.0;

  if (!report.is_invariant) {
    // f = 1_A + s 1_B lowers q below q(1_A) for 0 < s < 2 cross / q(1_B).
    const double qb = evaluate(form, indicator_b);
    const double s = qb > 0.0 ? std::min(1.0, crossing / qb) : 1.0;
    VertexFunction w = indicator_a + s * indicator_b;
    const double nrm = std::sqrt(norm_sq(form, w));
    w /= nrm;
    report.witness_violation = evaluate(form, w.cwiseProduct(indicator_a)) - evaluate(form, w);
    report.witness = std::move(w);
  }

  std::mt19937_64 rng(seed);
  double sampled = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < n_samples; ++s) {
    VertexFunction f = random_function(form, rng);
    const double nrm = std::sqrt(norm_sq(form, f));
    if (nrm > 0.0) f /= nrm;
    sampled = std::max(sampled, evaluate(form, f.cwiseProduct(indicator_a)) - evaluate(form, f));
  }
  report.sampled_max_violation = n_samples > 0 ? sampled : 0.0;
  if (report.is_invariant && report.sampled_max_violation > tol.ineq) {
    throw Error(ErrorCode::ViolationFound,
                "sampled function violates invariance of an edge-cut-free set");
  }
  return report;
}

std::vector<std::vector<std::string>> irreducible_components(const GraphForm& form) {
  const auto n = static_cast<std::size_t>(form.size());
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const Edge& e : form.edges()) {
    if (form.is_boundary(e.u) || form.is_boundary(e.v)) continue;
    const auto a = find(static_cast<std::size_t>(e.u));
    const auto b = find(static_cast<std::size_t>(e.v));
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::map<std::size_t, std::vector<std::string>> groups;
  for (Index v : form.free_vertices()) {
    groups[find(static_cast<std::size_t>(v))].push_back(form.vertices()[static_cast<std::size_t>(v)]);
  }
  std::vector<std::vector<std::string>> out;
  out.reserve(groups.size());
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

bool is_irreducible(const GraphForm& form) { return irreducible_components(form).size() == 1; }

}  // namespace critkit
