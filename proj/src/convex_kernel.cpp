#include "mfg/convex_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace mfg {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

constexpr int kMaxIterations = 200;
constexpr double kResidualTol = 1e-12;

// Safeguarded Newton on an increasing function with h(lo) < 0 < h(hi).
// `eval` returns {h(x), h'(x)}.
template <class Eval>
double bracketed_newton(Eval eval, double lo, double hi, double x, double scale, int& iterations) {
  if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
  for (int it = 0; it < kMaxIterations; ++it) {
    ++iterations;
    auto [h, dh] = eval(x);
    if (std::abs(h) <= kResidualTol * scale) return x;
    if (h < 0.0)
      lo = x;
    else
      hi = x;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(hi))) return x;
    double next = x - h / dh;
    if (!std::isfinite(next) || !(dh > 0.0) || next <= lo || next >= hi) next = 0.5 * (lo + hi);
    x = next;
  }
  throw ConvergenceFailure("prox_perspective: scalar root-find exceeded the iteration cap");
}

}  // namespace

double hamiltonian(const LocalModel& lm, std::span<const double> xi) {
  const double n = norm(xi);
  if (lm.r == 2.0) return 0.5 * lm.c2 * n * n;
  return lm.c2 * std::pow(n, lm.r) / lm.r;
}

void d_xi_hamiltonian(const LocalModel& lm, std::span<const double> xi, std::span<double> out) {
  const double n = norm(xi);
  const double s = n == 0.0 ? 0.0 : (lm.r == 2.0 ? lm.c2 : lm.c2 * std::pow(n, lm.r - 2.0));
  for (std::size_t i = 0; i < xi.size(); ++i) out[i] = s * xi[i];
}

double hamiltonian_conjugate(const LocalModel& lm, std::span<const double> zeta) {
  const double n = norm(zeta);
  if (lm.r == 2.0) return 0.5 * n * n / lm.c2;
  const double rc = lm.r / (lm.r - 1.0);
  return std::pow(lm.c2, 1.0 - rc) * std::pow(n, rc) / rc;
}

double coupling(const LocalModel& lm, double m) {
  if (m < 0.0) throw std::domain_error("coupling: density must be >= 0");
  if (lm.q == 2.0) return lm.c1 * m;
  return lm.c1 * std::pow(m, lm.q - 1.0);
}

double antiderivative_F(const LocalModel& lm, double m) {
  if (m < 0.0) throw std::domain_error("antiderivative_F: density must be >= 0");
  if (lm.q == 2.0) return 0.5 * lm.c1 * (m * m - 1.0);
  return lm.c1 * (std::pow(m, lm.q) - 1.0) / lm.q;
}

double conjugate_Fstar(const LocalModel& lm, double a) {
  const double base = lm.c1 / lm.q;
  if (a <= 0.0) return base;
  if (lm.q == 2.0) return 0.5 * a * a / lm.c1 + base;
  const double p = lm.q / (lm.q - 1.0);
  return std::pow(a, p) * std::pow(lm.c1, 1.0 - p) / p + base;
}

double d_conjugate_Fstar(const LocalModel& lm, double a) {
  if (a <= 0.0) return 0.0;
  if (lm.q == 2.0) return a / lm.c1;
  return std::pow(a / lm.c1, 1.0 / (lm.q - 1.0));
}

ExtendedReal perspective_B_integrand(const LocalModel& lm, double m, std::span<const double> w) {
  if (m < 0.0) throw std::domain_error("perspective_B_integrand: density must be >= 0");
  const double n = norm(w);
  if (m == 0.0) return n == 0.0 ? ExtendedReal::finite(0.0) : ExtendedReal::plus_infinity();
  if (lm.r == 2.0) return ExtendedReal::finite(0.5 * n * n / (lm.c2 * m));
  const double rc = lm.r / (lm.r - 1.0);
  return ExtendedReal::finite(std::pow(lm.c2, 1.0 - rc) * std::pow(n, rc) * std::pow(m, 1.0 - rc) / rc);
}

ProxResult prox_perspective(const LocalModel& lm, double m_hat, std::span<const double> w_hat, double tau,
                            std::optional<double> guess) {
  if (!(tau > 0.0)) throw std::invalid_argument("prox_perspective: tau must be > 0");
  ProxResult res;
  const double nw = norm(w_hat);
  const double r = lm.r, q = lm.q, c1 = lm.c1, c2 = lm.c2;

  auto fprime = [&](double m) {
    if (q == 2.0) return c1;
    return m > 0.0 ? c1 * (q - 1.0) * std::pow(m, q - 2.0) : std::numeric_limits<double>::infinity();
  };

  if (nw == 0.0) {
    if (m_hat <= 0.0) return res;
    if (q == 2.0) {
      res.m = m_hat / (1.0 + tau * c1);
      return res;
    }
    auto eval = [&](double m) {
      return std::pair{m - m_hat + tau * coupling(lm, m), 1.0 + tau * fprime(m)};
    };
    res.m = bracketed_newton(eval, 0.0, m_hat, guess.value_or(m_hat), 1.0 + std::abs(m_hat), res.iterations);
    return res;
  }

  // Inner problem: tau t + m c2 t^(r-1) = |w_hat|, t in [0, |w_hat|/tau].
  auto solve_t = [&](double m) {
    if (r == 2.0) return nw / (tau + m * c2);
    if (m == 0.0) return nw / tau;
    auto g = [&](double t) {
      return std::pair{tau * t + m * c2 * std::pow(t, r - 1.0) - nw,
                       tau + m * c2 * (r - 1.0) * std::pow(t, r - 2.0)};
    };
    int inner = 0;
    const double hi = nw / tau;
    if (g(hi).first <= 0.0) return hi;
    double t0 = std::min(hi, std::pow(nw / (m * c2), 1.0 / (r - 1.0)));
    return bracketed_newton(g, 0.0, hi, t0, 1.0 + nw, inner);
  };

  auto eval = [&](double m) {
    const double t = solve_t(m);
    const double trm1 = r == 2.0 ? t : std::pow(t, r - 1.0);
    const double tr = r == 2.0 ? t * t : trm1 * t;
    const double f = q == 2.0 ? c1 * m : (m > 0.0 ? c1 * std::pow(m, q - 1.0) : 0.0);
    const double h = m - m_hat + tau * f - tau * c2 * tr / r;
    const double trm2 = r == 2.0 ? 1.0 : std::pow(t, r - 2.0);
    const double dt = -c2 * trm1 / (tau + m * c2 * (r - 1.0) * trm2);
    const double dh = 1.0 + tau * fprime(m) - tau * c2 * trm1 * dt;
    return std::pair{h, dh};
  };

  const double h0 = eval(0.0).first;
  if (h0 >= 0.0) return res;

  const double m_hi = std::max(0.0, m_hat) + tau * c2 * std::pow(nw / tau, r) / r;
  double m_lo_val = 0.0;
  double m;
  if (eval(m_hi).first <= 0.0)
    m = m_hi;
  else
    m = bracketed_newton(eval, m_lo_val, m_hi, guess.value_or(std::max(m_hat, 0.5 * m_hi)), 1.0 + std::abs(m_hat),
                         res.iterations);
  const double t = solve_t(m);
  const double factor = std::max(0.0, 1.0 - tau * t / nw);
  res.m = m;
  for (std::size_t i = 0; i < w_hat.size() && i < 2; ++i) res.w[i] = w_hat[i] * factor;
  return res;
}

// ---------------------------------------------------------------------------
// Coercivity

void CoercivityMaps::j1(std::span<const double> xi, std::span<double> out) const {
  const double n = norm(xi);
  const double s = n == 0.0 ? 0.0 : (r == 2.0 ? 1.0 : std::pow(n, r / 2.0 - 1.0));
  for (std::size_t i = 0; i < xi.size(); ++i) out[i] = s * xi[i];
}

void CoercivityMaps::j2(const LocalModel& lm, std::span<const double> zeta, std::span<double> out) const {
  const double rc = r / (r - 1.0);
  const double n = norm(zeta) / lm.c2;
  const double s = n == 0.0 ? 0.0 : (r == 2.0 ? 1.0 : std::pow(n, rc / 2.0 - 1.0));
  for (std::size_t i = 0; i < zeta.size(); ++i) out[i] = s * zeta[i] / lm.c2;
}

double CoercivityMaps::J(double m) const {
  if (m < 0.0) throw std::domain_error("J: density must be >= 0");
  return q == 2.0 ? m : std::pow(m, q / 2.0);
}

double CoercivityMaps::Jstar(const LocalModel& lm, double a) const {
  if (a <= 0.0) return 0.0;
  const double p = q / (q - 1.0);
  return q == 2.0 ? a / lm.c1 : std::pow(a / lm.c1, p / 2.0);
}

namespace {

// Dense sampling over v = tan(theta) plus golden-section refinement.
template <class Ratio>
double infimum_on_line(Ratio ratio, double theta_lo, double theta_hi) {
  const int n = 200000;
  double best = std::numeric_limits<double>::infinity();
  double best_theta = theta_lo;
  const double step = (theta_hi - theta_lo) / n;
  for (int i = 1; i < n; ++i) {
    const double th = theta_lo + i * step;
    const double v = ratio(std::tan(th));
    if (v < best) {
      best = v;
      best_theta = th;
    }
  }
  double a = std::max(theta_lo, best_theta - step), b = std::min(theta_hi, best_theta + step);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 100; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (ratio(std::tan(c)) < ratio(std::tan(d)))
      b = d;
    else
      a = c;
  }
  return std::min(best, ratio(std::tan(0.5 * (a + b))));
}

}  // namespace

double unit_coercivity_H(double r) {
  if (r == 2.0) return 0.5 * (1.0 - 1e-6);
  const double rc = r / (r - 1.0);
  auto ratio = [&](double v) {
    const double d = 1.0 - v;
    if (std::abs(d) < 1e-4) return std::numeric_limits<double>::infinity();
    const double sgn = v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
    return (1.0 / r + v * v / rc - sgn * std::pow(std::abs(v), 2.0 / rc)) / (d * d);
  };
  const double half = 0.5 * std::numbers::pi;
  double inf = infimum_on_line(ratio, -half, half);
  inf = std::min(inf, 1.0 / rc);  // limit |v| -> infinity
  // Limit at v = 1 equals the second-order ratio; sample both sides closely.
  for (double eps : {1e-3, -1e-3, 3e-3, -3e-3}) {
    const double v = 1.0 + eps;
    const double sgn = 1.0;
    inf = std::min(inf, (1.0 / r + v * v / rc - sgn * std::pow(v, 2.0 / rc)) / (eps * eps));
  }
  return inf * (1.0 - 1e-6);
}

double unit_coercivity_F(double q) {
  if (q == 2.0) return 0.5 * (1.0 - 1e-6);
  const double p = q / (q - 1.0);
  auto ratio = [&](double s) {
    const double d = 1.0 - s;
    if (std::abs(d) < 1e-4) return std::numeric_limits<double>::infinity();
    return (1.0 / q + s * s / p - std::pow(s, 2.0 / p)) / (d * d);
  };
  double inf = infimum_on_line(ratio, 0.0, 0.5 * std::numbers::pi);
  inf = std::min({inf, 1.0 / q, 1.0 / p, 2.0 / (p * q)});
  return inf * (1.0 - 1e-6);
}

CoercivityMaps make_coercivity_maps(const DiscreteModel& model) {
  CoercivityMaps maps;
  maps.r = model.r();
  maps.q = model.q();
  maps.unit_H = unit_coercivity_H(model.r());
  maps.unit_F = unit_coercivity_F(model.q());
  const double min_c1 = *std::min_element(model.c1().begin(), model.c1().end());
  const double min_c2 = *std::min_element(model.c2().begin(), model.c2().end());
  maps.c0_H = min_c2 * maps.unit_H;
  maps.c0_F = min_c1 * maps.unit_F;
  return maps;
}

double halton(std::size_t index, unsigned base) {
  double f = 1.0, r = 0.0;
  std::size_t i = index + 1;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

namespace {

// Maps (0,1) onto the real line with heavy tails, or onto [0, inf).
double spread(double u) { return std::tan(0.49 * std::numbers::pi * (2.0 * u - 1.0)); }
double spread_pos(double u) { return std::tan(0.49 * std::numbers::pi * u); }

constexpr double kEqualityTol = 1e-10;

}  // namespace

CoercivityReport verify_coercivity(const DiscreteModel& model, const CoercivityMaps& maps, std::size_t samples) {
  CoercivityReport rep;
  rep.samples = samples;
  const int d = model.grid().dim;
  const std::size_t cells = model.grid().cells();
  std::array<double, 2> xi{}, zeta{}, a1{}, a2{};
  for (std::size_t k = 0; k < samples; ++k) {
    const LocalModel lm = model.at(k % cells);
    xi[0] = spread(halton(k, 2));
    zeta[0] = spread(halton(k, 3));
    if (d == 2) {
      xi[1] = spread(halton(k, 5));
      zeta[1] = spread(halton(k, 7));
    }
    std::span<const double> xs(xi.data(), d), zs(zeta.data(), d);
    const double gap = hamiltonian(lm, xs) + hamiltonian_conjugate(lm, zs) - dot(xs, zs);
    maps.j1(xs, std::span<double>(a1.data(), d));
    maps.j2(lm, zs, std::span<double>(a2.data(), d));
    double rem = 0.0;
    for (int i = 0; i < d; ++i) rem += (a1[i] - a2[i]) * (a1[i] - a2[i]);
    if (gap < -kEqualityTol * (1.0 + std::abs(dot(xs, zs)))) {
      rep.passed = false;
      rep.detail += "negative Young gap for H; ";
    }
    if (rem > kEqualityTol) {
      const double ratio = gap / rem;
      rep.min_ratio_H = std::min(rep.min_ratio_H, ratio);
    }

    const double m = spread_pos(halton(k, 11));
    const double a = spread(halton(k, 13));
    const double gapF = antiderivative_F(lm, m) + conjugate_Fstar(lm, a) - m * a;
    const double remF = std::pow(maps.J(m) - maps.Jstar(lm, a), 2);
    if (gapF < -kEqualityTol * (1.0 + std::abs(m * a))) {
      rep.passed = false;
      rep.detail += "negative Young gap for F; ";
    }
    if (remF > kEqualityTol) rep.min_ratio_F = std::min(rep.min_ratio_F, gapF / remF);
  }
  if (rep.min_ratio_H < maps.c0_H) {
    rep.passed = false;
    rep.detail += "H coercivity ratio below stored constant; ";
  }
  if (rep.min_ratio_F < maps.c0_F) {
    rep.passed = false;
    rep.detail += "F coercivity ratio below stored constant; ";
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Property suite

std::vector<KernelCheck> run_kernel_checks(const DiscreteModel& model, std::size_t samples, std::uint64_t seed) {
  std::vector<KernelCheck> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-3.0, 3.0), Upos(0.0, 4.0);
  std::uniform_int_distribution<std::size_t> cell_dist(0, model.grid().cells() - 1);
  const int d = model.grid().dim;
  const CoercivityMaps maps = make_coercivity_maps(model);

  {
    double worst = 0.0, worst_eq = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
      const LocalModel lm = model.at(cell_dist(rng));
      std::array<double, 2> xi{U(rng), U(rng)}, zeta{U(rng), U(rng)}, grad{};
      std::span<const double> xs(xi.data(), d), zs(zeta.data(), d);
      worst = std::min(worst, hamiltonian(lm, xs) + hamiltonian_conjugate(lm, zs) - dot(xs, zs));
      d_xi_hamiltonian(lm, xs, std::span<double>(grad.data(), d));
      std::span<const double> gs(grad.data(), d);
      const double eq = hamiltonian(lm, xs) + hamiltonian_conjugate(lm, gs) - dot(xs, gs);
      worst_eq = std::max(worst_eq, std::abs(eq) / (1.0 + std::abs(dot(xs, gs))));
    }
    std::ostringstream os;
    os << "min gap " << worst << ", max equality defect " << worst_eq;
    out.push_back({"fenchel_young_H", worst >= -1e-10 && worst_eq <= 1e-8, os.str()});
  }

  {
    double worst = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
      const LocalModel lm = model.at(cell_dist(rng));
      const double m = Upos(rng), a = U(rng);
      worst = std::min(worst, antiderivative_F(lm, m) + conjugate_Fstar(lm, a) - m * a);
    }
    std::ostringstream os;
    os << "min gap " << worst;
    out.push_back({"fenchel_young_F", worst >= -1e-10, os.str()});
  }

  {
    // Round trip: sup over zeta along the xi direction recovers H.
    double worst = 0.0;
    const std::size_t n = std::min<std::size_t>(samples, 50);
    for (std::size_t k = 0; k < n; ++k) {
      const LocalModel lm = model.at(cell_dist(rng));
      const double x = U(rng);
      double best = -std::numeric_limits<double>::infinity();
      const double zmax = 2.0 * lm.c2 * std::pow(std::abs(x) + 1.0, lm.r - 1.0) + 1.0;
      const int steps = 200000;
      for (int i = 0; i <= steps; ++i) {
        const double z = -zmax + 2.0 * zmax * i / steps;
        const double zz[1] = {z};
        best = std::max(best, x * z - hamiltonian_conjugate(lm, zz));
      }
      const double xx[1] = {x};
      worst = std::max(worst, std::abs(best - hamiltonian(lm, xx)));
    }
    std::ostringstream os;
    os << "max deviation " << worst;
    out.push_back({"conjugate_round_trip", worst <= 1e-4, os.str()});
  }

  {
    const CoercivityReport rep = verify_coercivity(model, maps, samples);
    std::ostringstream os;
    os << "min ratio H " << rep.min_ratio_H << " (c0 " << maps.c0_H << "), min ratio F " << rep.min_ratio_F
       << " (c0 " << maps.c0_F << ")";
    out.push_back({"coercivity", rep.passed, os.str()});
  }

  {
    // Monotonicity of the coupling with the weighted lower bound.
    const double mono = std::min(model.q() - 1.0, 1.0) * *std::min_element(model.c1().begin(), model.c1().end());
    bool ok = true;
    for (std::size_t k = 0; k < samples; ++k) {
      const LocalModel lm = model.at(cell_dist(rng));
      const double m1 = Upos(rng), m2 = Upos(rng);
      if (m1 == m2) continue;
      const double lhs = (coupling(lm, m1) - coupling(lm, m2)) * (m1 - m2);
      if (std::min(m1, m2) > 1e-12) {
        const double w = std::min(std::pow(m1, model.q() - 2.0), std::pow(m2, model.q() - 2.0));
        if (lhs < mono * w * (m1 - m2) * (m1 - m2) * (1.0 - 1e-12) - 1e-14) ok = false;
      } else if (coupling(lm, std::max(m1, m2)) * std::max(m1, m2) <
                 mono * std::pow(std::max(m1, m2), model.q()) * (1.0 - 1e-12)) {
        ok = false;
      }
    }
    out.push_back({"coupling_monotonicity", ok, ""});
  }

  {
    double worst = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
      const LocalModel lm = model.at(cell_dist(rng));
      const double m = Upos(rng) + 1e-3, s = Upos(rng) + 1e-3;
      std::array<double, 2> w{U(rng), U(rng)}, sw{};
      for (int i = 0; i < 2; ++i) sw[i] = s * w[i];
      const double v1 = perspective_B_integrand(lm, m, std::span<const double>(w.data(), d)).value;
      const double v2 = perspective_B_integrand(lm, s * m, std::span<const double>(sw.data(), d)).value;
      worst = std::max(worst, std::abs(s * v1 - v2) / (1.0 + std::abs(v2)));
    }
    std::ostringstream os;
    os << "max relative defect " << worst;
    out.push_back({"perspective_homogeneity", worst <= 1e-10, os.str()});
  }

  {
    // Prox stationarity: the optimality system of the scalar reduction.
    double worst = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
      const LocalModel lm = model.at(cell_dist(rng));
      const double mh = U(rng), tau = Upos(rng) + 0.05;
      std::array<double, 2> wh{U(rng), U(rng)};
      std::span<const double> ws(wh.data(), d);
      const ProxResult p = prox_perspective(lm, mh, ws, tau);
      if (p.m <= 0.0) continue;
      std::array<double, 2> zeta{}, xi{};
      for (int i = 0; i < d; ++i) zeta[i] = -p.w[i] / p.m;
      // xi = D H*(zeta) computed through H's inverse gradient.
      const double rc = lm.r / (lm.r - 1.0);
      const double nz = norm(std::span<const double>(zeta.data(), d));
      const double s = nz == 0.0 ? 0.0 : std::pow(lm.c2, 1.0 - rc) * std::pow(nz, rc - 2.0);
      for (int i = 0; i < d; ++i) xi[i] = s * zeta[i];
      double res_w = 0.0;
      for (int i = 0; i < d; ++i) res_w = std::max(res_w, std::abs(-xi[i] + (p.w[i] - wh[i]) / tau));
      const double res_m = p.m - mh + tau * coupling(lm, p.m) -
                           tau * hamiltonian(lm, std::span<const double>(xi.data(), d));
      worst = std::max({worst, res_w, std::abs(res_m) / (1.0 + std::abs(mh))});
    }
    std::ostringstream os;
    os << "max optimality residual " << worst;
    out.push_back({"prox_optimality", worst <= 1e-8, os.str()});
  }
  return out;
}

}  // namespace mfg
