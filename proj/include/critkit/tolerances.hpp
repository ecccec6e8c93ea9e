#pragma once

namespace critkit {

/// Numerical thresholds shared by all modules. Inequality tolerances are
/// absolute after normalizing the test functions to unit mu-norm.
struct Tolerances {
  double psd_rel = 1e-10;         // form nonnegativity, relative to ||L||
  double ineq = 1e-10;            // inequality checks
  double green = 1e-8;            // Green limit stabilization (relative)
  double cap = 1e-6;              // capacity considered zero
  double cap_stable = 1e-4;       // subcritical capacity stabilization
  double ground_state = 1e-6;     // ground-state convergence on the window
  double excessive = 1e-8;        // liminf stabilization / excessivity residual
  double eig = 1e-8;              // pencil certificate slack
  double solve = 1e-12;           // iterative solver residual
  double divergence_factor = 1e12;  // Green divergence threshold / ||f||_inf
};

}  // namespace critkit
