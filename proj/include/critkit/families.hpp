#pragma once

#include <map>
#include <string>

#include "critkit/criticality.hpp"

namespace critkit {

using FamilyParams = std::map<std::string, std::string>;

// Built-in exhaustions.
//
//   lattice        d in {1,2,3}; level R is the box [-R,R]^d with unit
//                  weights and measure and a Dirichlet shell at |x|_inf = R.
//                  Vertex ids are coordinates joined by commas ("0,-3,2").
//                  Params: d, radius (largest level), radii (explicit list).
//   birth_death    vertices 0..R, b(n,n+1) = scale (n+1)^beta, Dirichlet at R.
//                  Params: beta, scale, radius, radii.
//   dirichlet_path vertices 0..N, unit weights, Dirichlet at 0; one finite
//                  form presented as a constant exhaustion rooted at 1.
//                  Params: N.
//
// Radii lists use commas or colons as separators.

Exhaustion lattice_family(int d, std::vector<int> radii);
Exhaustion birth_death_family(double beta, double scale, std::vector<int> radii);
Exhaustion dirichlet_path_family(int n);

std::vector<int> default_lattice_radii(int d);
std::vector<int> default_birth_death_radii();

/// Throws UnknownFamily or BadParams.
Exhaustion builtin_family(const std::string& name, const FamilyParams& params);

}  // namespace critkit
