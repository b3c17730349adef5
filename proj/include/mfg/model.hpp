#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/grid.hpp"

namespace mfg {

/// Raised when model data violate the admissible class (exponent ranges,
/// positivity of coefficients or of the initial density).
class InfeasibleModel : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Coefficient field on the unit torus, evaluated at (x, y). y is ignored in 1-D.
using Coefficient = std::function<double(double, double)>;

/// Continuous problem data: H = c2 |xi|^r / r, f = c1 m^(q-1).
struct ModelSpec {
  double r = 2.0;
  double q = 2.0;
  double T = 1.0;
  int dim = 1;
  Coefficient c1 = [](double, double) { return 1.0; };
  Coefficient c2 = [](double, double) { return 1.0; };
  Coefficient m0 = [](double, double) { return 1.0; };
  Coefficient phiT = [](double, double) { return 0.0; };
};

/// Pointwise model data at one cell, the argument of every kernel function.
struct LocalModel {
  double r = 2.0;
  double q = 2.0;
  double c1 = 1.0;
  double c2 = 1.0;
};

/// ModelSpec sampled at cell centres of a grid. Construction validates the data
/// and renormalizes m0 to unit mass.
class DiscreteModel {
 public:
  DiscreteModel(const ModelSpec& spec, const GridSpec& grid);

  const GridSpec& grid() const { return grid_; }
  double r() const { return r_; }
  double q() const { return q_; }
  /// Conjugate exponents r' and p = q'.
  double r_conj() const { return r_ / (r_ - 1.0); }
  double p() const { return q_ / (q_ - 1.0); }

  LocalModel at(std::size_t cell) const { return {r_, q_, c1_[cell], c2_[cell]}; }

  std::span<const double> c1() const { return c1_; }
  std::span<const double> c2() const { return c2_; }
  std::span<const double> m0() const { return m0_; }
  std::span<const double> phiT() const { return phiT_; }

  /// Data translated by a lattice shift: every field g becomes g(x + delta).
  DiscreteModel translated(std::span<const int> delta) const;

  /// FNV-1a digest of exponents, horizon, dimension and the sampled fields.
  std::uint64_t hash() const;

  /// Spatially constant c1, c2 (used to short-circuit homogeneous checks).
  bool homogeneous_coefficients() const;

 private:
  DiscreteModel() = default;
  GridSpec grid_;
  double r_ = 2.0;
  double q_ = 2.0;
  std::vector<double> c1_, c2_, m0_, phiT_;
};

}  // namespace mfg
