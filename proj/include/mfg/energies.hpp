#pragma once

#include "mfg/convex_kernel.hpp"
#include "mfg/grid.hpp"
#include "mfg/model.hpp"

namespace mfg {

/// Density on time nodes and flux on time midpoints. Stationary states carry a
/// single slice of each.
struct PrimalState {
  ScalarField m;
  FluxField w;
};

/// Potential on time nodes (node n_time is the terminal trace), running cost
/// alpha on midpoints; lambda is the ergodic constant (stationary only).
struct DualState {
  ScalarField phi;
  ScalarField alpha;
  double lambda = 0.0;
};

PrimalState make_primal(const GridSpec& grid);
DualState make_dual(const GridSpec& grid);

// Time-dependent functionals. On interval k the flux w^k and the running cost
// alpha^k pair with the density m^(k+1); the gradient of phi is taken at node k.

ExtendedReal eval_B_td(const DiscreteModel& model, const PrimalState& state);
double eval_A_td(const DiscreteModel& model, const DualState& state);

/// -(phi^(k+1) - phi^k)/ht + H(x, grad phi^k) on midpoints: the smallest alpha
/// satisfying the Hamilton-Jacobi inequality.
ScalarField hj_operator(const DiscreteModel& model, const ScalarField& phi);

// Stationary functionals.

double eval_A_stat(const DiscreteModel& model, double lambda, const ScalarField& phi);
ExtendedReal eval_B_stat(const DiscreteModel& model, const ScalarField& m, const FluxField& w);
/// lambda + H(x, grad phi) cellwise.
ScalarField hj_operator_stat(const DiscreteModel& model, double lambda, const ScalarField& phi);

/// |A + B| / (1 + |B|); infinity when B is infinite.
double relative_gap(double A, const ExtendedReal& B);

/// Max-norm residuals of every constraint and optimality condition.
struct FeasibilityReport {
  double continuity = 0.0;       // continuity (or divergence-free) constraint
  double initial = 0.0;          // |m^0 - m0|, time-dependent only
  double negativity = 0.0;       // positive part of -m
  double mass = 0.0;             // |sum m hx^d - 1| over slices
  double hj = 0.0;               // positive part of (HJ operator - alpha)
  double trace = 0.0;            // positive part of phi(T) - phiT
  double complementarity = 0.0;  // weighted sum of |alpha - f(m)| over {m > eps}
  double complementarity_mean = 0.0;  // same, averaged over the cells with m > eps
  double flux = 0.0;             // |w + m D_xi H(grad phi)| max norm
  double phi_mean = 0.0;         // |sum phi hx^d|, stationary only

  double worst_constraint() const;
};

constexpr double kFeasibilityTol = 1e-8;
constexpr double kComplementarityEps = 1e-10;

FeasibilityReport feasibility_report(const DiscreteModel& model, const PrimalState& primal, const DualState& dual,
                                     double eps = kComplementarityEps);

}  // namespace mfg
