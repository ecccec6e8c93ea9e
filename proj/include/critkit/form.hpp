#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "critkit/tolerances.hpp"

namespace critkit {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// A real function on the vertices of a GraphForm, indexed in the form's
/// canonical vertex order. Entries on Dirichlet vertices must be zero when
/// the function is used as a form argument.
using VertexFunction = Eigen::VectorXd;

struct EdgeSpec {
  std::string u;
  std::string v;
  double weight = 0.0;
};

/// Unvalidated description of a discrete Schroedinger form, as read from a
/// graph document or produced by a family generator.
struct GraphSpec {
  std::vector<std::string> vertices;
  std::vector<EdgeSpec> edges;
  std::map<std::string, double> mu;         // default 1
  std::map<std::string, double> potential;  // default 0
  std::vector<std::string> dirichlet;
};

struct Edge {
  Index u = 0;
  Index v = 0;
  double weight = 0.0;
};

namespace detail {
struct FormCache;
}

/// The quadratic form
///   q(f) = sum_{edges {u,v}} b(u,v) (f(u) - f(v))^2 + sum_v c(v) f(v)^2 mu(v)
/// on functions vanishing on the Dirichlet boundary. Each undirected edge is
/// counted once. Immutable after build_form; copies share the solver cache.
class GraphForm {
 public:
  [[nodiscard]] Index size() const { return static_cast<Index>(ids_.size()); }
  [[nodiscard]] const std::vector<std::string>& vertices() const { return ids_; }
  [[nodiscard]] std::optional<Index> index_of(std::string_view id) const;
  [[nodiscard]] Index require_index(std::string_view id) const;

  [[nodiscard]] const Vector& measure() const { return mu_; }
  [[nodiscard]] const Vector& potential() const { return c_; }
  [[nodiscard]] const std::vector<Edge>& edges() const { return edges_; }
  [[nodiscard]] bool is_boundary(Index v) const { return boundary_[static_cast<std::size_t>(v)]; }
  [[nodiscard]] bool has_boundary() const { return free_.size() != ids_.size(); }

  /// Indices of non-Dirichlet vertices, increasing.
  [[nodiscard]] const std::vector<Index>& free_vertices() const { return free_; }
  [[nodiscard]] Index free_count() const { return static_cast<Index>(free_.size()); }
  /// Position of vertex v among the free vertices, or -1 on the boundary.
  [[nodiscard]] Index free_position(Index v) const { return free_pos_[static_cast<std::size_t>(v)]; }

  /// Energy matrix K over the free vertices: q(f) = f_F^T K f_F. The
  /// generator is L = M^{-1} K with M = diag(mu_F).
  [[nodiscard]] const SparseMatrix& energy_matrix() const { return K_; }
  [[nodiscard]] const Vector& free_measure() const { return mu_free_; }

  /// Gershgorin bound on ||L|| in the mu-inner product.
  [[nodiscard]] double operator_norm_bound() const { return norm_bound_; }

  [[nodiscard]] Vector restrict_free(const VertexFunction& f) const;
  [[nodiscard]] VertexFunction extend(const Vector& free_values) const;
  [[nodiscard]] VertexFunction zeros() const { return VertexFunction::Zero(size()); }
  /// 1 on free vertices, 0 on the boundary.
  [[nodiscard]] VertexFunction ones() const;

  /// Throws DomainMismatch if f has the wrong size or is nonzero on the
  /// Dirichlet boundary.
  void check_domain(const VertexFunction& f) const;

  /// Canonical description (sorted ids, u < v edges, explicit mu/c).
  [[nodiscard]] GraphSpec spec() const;

  [[nodiscard]] detail::FormCache& cache() const { return *cache_; }

 private:
  friend GraphForm build_form(const GraphSpec& spec, const Tolerances& tol);

  std::vector<std::string> ids_;
  std::unordered_map<std::string, Index> lookup_;
  Vector mu_;
  Vector c_;
  std::vector<Edge> edges_;
  std::vector<bool> boundary_;
  std::vector<Index> free_;
  std::vector<Index> free_pos_;
  SparseMatrix K_;
  Vector mu_free_;
  double norm_bound_ = 0.0;
  std::shared_ptr<detail::FormCache> cache_;
};

/// Validates a GraphSpec and assembles the form. Vertices are ordered
/// lexicographically by id. Signed potentials are accepted only if the
/// smallest generalized eigenvalue of (K, M) is >= -psd_rel * ||L||.
GraphForm build_form(const GraphSpec& spec, const Tolerances& tol = {});

/// Smallest generalized eigenvalue of (K, M) over the free vertices.
double smallest_form_eigenvalue(const GraphForm& form);

double evaluate(const GraphForm& form, const VertexFunction& f);
double evaluate_bilinear(const GraphForm& form, const VertexFunction& f, const VertexFunction& g);

/// <f, g>_mu over the free vertices.
double inner(const GraphForm& form, const VertexFunction& f, const VertexFunction& g);
double norm_sq(const GraphForm& form, const VertexFunction& f);

/// Standard normal values on free vertices, zero on the boundary.
template <class Rng>
VertexFunction random_function(const GraphForm& form, Rng& rng);

struct FirstBdReport {
  std::size_t samples = 0;
  double max_violation = 0.0;  // max of q(|f|) - q(f) at unit mu-norm
};

/// Samples random f and checks q(|f|) <= q(f) + tol. Throws ViolationFound
/// on a violation (which indicates corrupted form data).
FirstBdReport check_first_bd(const GraphForm& form, std::size_t n_samples, std::uint64_t seed,
                             const Tolerances& tol = {});

/// q(f) + q(g) - q(min(f,g)) - q(max(f,g)); nonnegative for graph forms.
double check_lattice_inequality(const GraphForm& form, const VertexFunction& f,
                                const VertexFunction& g);

struct InvarianceReport {
  std::vector<std::string> set;
  bool is_invariant = true;
  std::optional<VertexFunction> witness;
  double witness_violation = 0.0;  // q(1_A w) - q(w), > tol when present
  double sampled_max_violation = 0.0;
};

/// A is invariant iff no positive-weight edge joins A and its complement
/// among the free vertices. A sampled search corroborates the decision.
InvarianceReport is_invariant_set(const GraphForm& form, std::span<const std::string> set,
                                  std::size_t n_samples, std::uint64_t seed,
                                  const Tolerances& tol = {});

/// Connected components of the free vertices under positive-weight edges,
/// each sorted in canonical order. Dirichlet vertices are not part of the
/// function space and are omitted.
std::vector<std::vector<std::string>> irreducible_components(const GraphForm& form);
bool is_irreducible(const GraphForm& form);

}  // namespace critkit

#include "critkit/detail/form_random.hpp"
