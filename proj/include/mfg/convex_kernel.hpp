#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/model.hpp"

namespace mfg {

/// Real number or +infinity. The infinite state is a flag, never a large float.
struct ExtendedReal {
  double value = 0.0;
  bool infinite = false;

  static ExtendedReal finite(double v) { return {v, false}; }
  static ExtendedReal plus_infinity() { return {0.0, true}; }

  double as_double() const { return infinite ? std::numeric_limits<double>::infinity() : value; }

  ExtendedReal& operator+=(const ExtendedReal& o) {
    infinite = infinite || o.infinite;
    value = infinite ? 0.0 : value + o.value;
    return *this;
  }
  friend ExtendedReal operator+(ExtendedReal a, const ExtendedReal& b) { return a += b; }
};

class ConvergenceFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Hamiltonian H(x, xi) = c2 |xi|^r / r and its conjugate.

double hamiltonian(const LocalModel& lm, std::span<const double> xi);
/// c2 |xi|^(r-2) xi; zero at xi = 0 for every r.
void d_xi_hamiltonian(const LocalModel& lm, std::span<const double> xi, std::span<double> out);
/// c2^(1-r') |zeta|^r' / r'.
double hamiltonian_conjugate(const LocalModel& lm, std::span<const double> zeta);

// Coupling f = c1 m^(q-1), potential F = c1 (m^q - 1)/q, conjugate F*.

/// Throws std::domain_error for m < 0.
double coupling(const LocalModel& lm, double m);
double antiderivative_F(const LocalModel& lm, double m);
/// sup over m >= 0 of a m - F(m); equals c1/q for a <= 0.
double conjugate_Fstar(const LocalModel& lm, double a);
/// Maximizer of a m - F(m): (a+/c1)^(1/(q-1)).
double d_conjugate_Fstar(const LocalModel& lm, double a);

/// m H*(-w/m) with the vacuum convention (0 at (0,0), +inf at (0, w != 0)).
ExtendedReal perspective_B_integrand(const LocalModel& lm, double m, std::span<const double> w);

struct ProxResult {
  double m = 0.0;
  std::array<double, 2> w{0.0, 0.0};
  int iterations = 0;
};

/// argmin over m >= 0, w of perspective(m,w) + F(m) + (|m - m_hat|^2 + |w - w_hat|^2) / (2 tau).
/// `guess` seeds the scalar root-find. Throws ConvergenceFailure past 200 steps.
ProxResult prox_perspective(const LocalModel& lm, double m_hat, std::span<const double> w_hat, double tau,
                            std::optional<double> guess = std::nullopt);

// Coercivity maps.

struct CoercivityMaps {
  double r = 2.0;
  double q = 2.0;
  double c0_H = 0.5;
  double c0_F = 0.5;
  /// Unit constants (coefficients equal to one); c0_H = min c2 * unit_H etc.
  double unit_H = 0.5;
  double unit_F = 0.5;

  /// |xi|^(r/2-1) xi.
  void j1(std::span<const double> xi, std::span<double> out) const;
  /// |zeta/c2|^(r'/2-1) zeta/c2.
  void j2(const LocalModel& lm, std::span<const double> zeta, std::span<double> out) const;
  /// m^(q/2).
  double J(double m) const;
  /// (a+/c1)^(p/2).
  double Jstar(const LocalModel& lm, double a) const;
};

/// Infimum over collinear configurations of the Young gap divided by the
/// squared remainder, for unit coefficients.
double unit_coercivity_H(double r);
double unit_coercivity_F(double q);

CoercivityMaps make_coercivity_maps(const DiscreteModel& model);

struct CoercivityReport {
  std::size_t samples = 0;
  double min_ratio_H = std::numeric_limits<double>::infinity();
  double min_ratio_F = std::numeric_limits<double>::infinity();
  bool passed = true;
  std::string detail;
};

/// Quasi-random sampling of both coercivity inequalities over every cell.
CoercivityReport verify_coercivity(const DiscreteModel& model, const CoercivityMaps& maps, std::size_t samples);

/// Standalone property suite over random cells and arguments.
struct KernelCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};
std::vector<KernelCheck> run_kernel_checks(const DiscreteModel& model, std::size_t samples, std::uint64_t seed);

/// k-th element of the Halton sequence in the given prime base.
double halton(std::size_t index, unsigned base);

}  // namespace mfg
