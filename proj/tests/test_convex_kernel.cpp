#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "mfg/convex_kernel.hpp"
#include "oracles.hpp"

using namespace mfg;
using namespace mfg::testing;

namespace {

LocalModel random_local(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> rdist(1.3, 3.5), qdist(1.3, 3.5), cdist(0.5, 2.0);
  return {rdist(rng), qdist(rng), cdist(rng), cdist(rng)};
}

DiscreteModel cosine_model(int dim, double r, double q) {
  ModelSpec spec;
  spec.dim = dim;
  spec.r = r;
  spec.q = q;
  spec.c1 = [](double x, double) { return 1.0 + 0.1 * std::cos(2 * std::numbers::pi * x); };
  spec.c2 = [](double, double y) { return 1.0 + 0.2 * std::sin(2 * std::numbers::pi * y); };
  return DiscreteModel(spec, GridSpec::make(dim, 8));
}

}  // namespace

TEST_CASE("hamiltonian closed forms") {
  LocalModel lm{2.0, 2.0, 1.0, 1.0};
  const double xi[2] = {3.0, 4.0};
  CHECK(hamiltonian(lm, xi) == doctest::Approx(12.5));
  const double zero[2] = {0.0, 0.0};
  double g[2] = {9.0, 9.0};
  for (double r : {1.5, 2.0, 3.0}) {
    LocalModel l{r, 2.0, 1.0, 1.0};
    CHECK(hamiltonian(l, zero) == 0.0);
    d_xi_hamiltonian(l, zero, g);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
  }
  LocalModel l3{3.0, 2.0, 1.0, 1.0};
  const double e1[2] = {1.0, 0.0};
  CHECK(hamiltonian(l3, e1) == doctest::Approx(1.0 / 3.0));
  d_xi_hamiltonian(l3, e1, g);
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == 0.0);
}

TEST_CASE("hamiltonian conjugate against brute-force sup") {
  LocalModel l2{2.0, 2.0, 1.0, 1.0};
  const double e1[1] = {1.0};
  CHECK(hamiltonian_conjugate(l2, e1) == doctest::Approx(0.5));
  LocalModel l3{3.0, 2.0, 1.0, 1.0};
  const double oracle = grid_sup(1.0, [](double t) { return std::abs(t * t * t) / 3.0; }, -3.0, 3.0, 1e-5);
  CHECK(std::abs(hamiltonian_conjugate(l3, e1) - oracle) < 1e-8);
  CHECK(hamiltonian_conjugate(l3, e1) == doctest::Approx(2.0 / 3.0));
  const double z0[2] = {0.0, 0.0};
  CHECK(hamiltonian_conjugate(l3, z0) == 0.0);

  // 200 random instances in 2-D: sup over a polar grid in xi.
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    LocalModel lm = random_local(rng);
    const double zeta[2] = {U(rng), U(rng)};
    double best = -1e300;
    const double R = std::pow(std::hypot(zeta[0], zeta[1]) / lm.c2, 1.0 / (lm.r - 1.0)) * 2.0 + 0.1;
    for (int i = 0; i <= 400; ++i)
      for (int j = 0; j < 256; ++j) {
        const double rad = R * i / 400.0, th = 2 * std::numbers::pi * j / 256.0;
        const double xi[2] = {rad * std::cos(th), rad * std::sin(th)};
        best = std::max(best, zeta[0] * xi[0] + zeta[1] * xi[1] - hamiltonian(lm, xi));
      }
    // Refine around the best coarse point with a local 1-D radial scan along zeta.
    const double nz = std::hypot(zeta[0], zeta[1]);
    if (nz > 0) {
      best = std::max(best, grid_sup(nz, [&](double t) {
                        const double x[1] = {t};
                        return hamiltonian(lm, x);
                      }, 0.0, R, 1e-5));
    }
    worst = std::max(worst, std::abs(best - hamiltonian_conjugate(lm, zeta)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("coupling, potential and its conjugate") {
  LocalModel lm{2.0, 2.0, 1.0, 1.0};
  CHECK(antiderivative_F(lm, 1.0) == 0.0);
  CHECK(antiderivative_F(lm, 2.0) == doctest::Approx(1.5));
  CHECK(coupling(lm, 3.0) == doctest::Approx(3.0));
  CHECK_THROWS_AS(coupling(lm, -1.0), std::domain_error);
  CHECK_THROWS_AS(antiderivative_F(lm, -1e-9), std::domain_error);
  auto F2 = [](double m) { return (m * m - 1.0) / 2.0; };
  for (double a : {1.0, 0.0, -1.0}) {
    const double oracle = grid_sup(a, F2, 0.0, 5.0, 1e-5);
    CHECK(std::abs(conjugate_Fstar(lm, a) - oracle) < 1e-8);
  }
  CHECK(conjugate_Fstar(lm, 1.0) == doctest::Approx(1.0));
  CHECK(conjugate_Fstar(lm, 0.0) == doctest::Approx(0.5));
  CHECK(conjugate_Fstar(lm, -1.0) == doctest::Approx(0.5));

  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> A(-3.0, 3.0);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    LocalModel l = random_local(rng);
    const double a = A(rng);
    auto F = [&](double m) { return l.c1 * (std::pow(m, l.q) - 1.0) / l.q; };
    const double hi = std::pow(std::max(a, 0.0) / l.c1, 1.0 / (l.q - 1.0)) * 2.0 + 1.0;
    worst = std::max(worst, std::abs(conjugate_Fstar(l, a) - grid_sup(a, F, 0.0, hi, 1e-5)));
    // Fenchel-Young at m = 1 and monotonicity.
    CHECK(conjugate_Fstar(l, a) >= a - 1e-12);
    CHECK(conjugate_Fstar(l, a + 0.1) >= conjugate_Fstar(l, a));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("perspective integrand") {
  LocalModel lm{2.0, 2.0, 1.0, 1.0};
  const double w[2] = {1.0, 0.0}, z[2] = {0.0, 0.0};
  CHECK(perspective_B_integrand(lm, 1.0, w).value == doctest::Approx(0.5));
  auto v0 = perspective_B_integrand(lm, 0.0, z);
  CHECK(!v0.infinite);
  CHECK(v0.value == 0.0);
  CHECK(perspective_B_integrand(lm, 0.0, w).infinite);
  CHECK_THROWS_AS(perspective_B_integrand(lm, -1.0, z), std::domain_error);

  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> U(-2.0, 2.0), P(0.01, 3.0);
  for (int k = 0; k < 200; ++k) {
    LocalModel l = random_local(rng);
    const double m = P(rng), s = P(rng);
    const double ww[2] = {U(rng), U(rng)}, sw[2] = {s * ww[0], s * ww[1]};
    const double a = perspective_B_integrand(l, m, ww).value, b = perspective_B_integrand(l, s * m, sw).value;
    CHECK(std::abs(s * a - b) <= 1e-10 * (1.0 + std::abs(b)));
  }
  ExtendedReal sum = ExtendedReal::finite(1.0) + ExtendedReal::plus_infinity();
  CHECK(sum.infinite);
}

TEST_CASE("prox of the perspective against a brute-force grid minimizer") {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> U(-2.0, 2.0), T(0.1, 2.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    LocalModel lm = random_local(rng);
    const double mh = U(rng), wh = U(rng), tau = T(rng);
    const double w1[1] = {wh};
    const ProxResult p = prox_perspective(lm, mh, w1, tau);
    auto [om, ow] = grid_prox(lm, mh, wh, tau);
    worst = std::max({worst, std::abs(p.m - om), std::abs(p.w[0] - ow)});
    CHECK(p.m >= 0.0);
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("prox special cases") {
  LocalModel lm{2.0, 2.0, 1.0, 1.0};
  const double z[1] = {0.0};
  // Zero flux: w stays zero and m solves m - m_hat + tau f(m) = 0.
  auto p = prox_perspective(lm, 10.0, z, 0.5);
  CHECK(p.w[0] == 0.0);
  CHECK(p.m == doctest::Approx(10.0 / 1.5));
  auto pn = prox_perspective(lm, -3.0, z, 0.5);
  CHECK(pn.m == 0.0);
  LocalModel l3{2.5, 1.5, 1.3, 0.7};
  auto p3 = prox_perspective(l3, 5.0, z, 0.8);
  CHECK(std::abs(p3.m - 5.0 + 0.8 * coupling(l3, p3.m)) < 1e-10);

  // Fixed point: a minimizer of perspective + F is reproduced for any tau.
  // With w = 0 the minimizer of F over m >= 0 is m = 0.
  auto pf = prox_perspective(lm, 0.0, z, 1e6);
  CHECK(pf.m < 1e-8);
  CHECK_THROWS_AS(prox_perspective(lm, 1.0, z, 0.0), std::invalid_argument);

  // 2-D flux is handled along its own direction.
  const double w2[2] = {0.6, -0.8}, w1[1] = {1.0};
  auto a = prox_perspective(l3, 0.7, w2, 0.9);
  auto b = prox_perspective(l3, 0.7, w1, 0.9);
  CHECK(a.m == doctest::Approx(b.m).epsilon(1e-12));
  CHECK(a.w[0] == doctest::Approx(0.6 * b.w[0]).epsilon(1e-12));
  CHECK(a.w[1] == doctest::Approx(-0.8 * b.w[0]).epsilon(1e-12));
}

TEST_CASE("Fenchel-Young inequality and its equality case") {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> U(-3.0, 3.0);
  double worst = 0.0, worst_eq = 0.0;
  for (int k = 0; k < 2000; ++k) {
    LocalModel lm = random_local(rng);
    const double xi[2] = {U(rng), U(rng)}, zeta[2] = {U(rng), U(rng)};
    worst = std::min(worst, hamiltonian(lm, xi) + hamiltonian_conjugate(lm, zeta) - xi[0] * zeta[0] - xi[1] * zeta[1]);
    double g[2];
    d_xi_hamiltonian(lm, xi, g);
    const double eq = hamiltonian(lm, xi) + hamiltonian_conjugate(lm, g) - xi[0] * g[0] - xi[1] * g[1];
    worst_eq = std::max(worst_eq, std::abs(eq));
  }
  CHECK(worst >= -1e-10);
  CHECK(worst_eq <= 1e-8);
}

TEST_CASE("growth sandwich") {
  auto model = cosine_model(1, 2.5, 1.7);
  auto c1 = model.c1();
  auto c2 = model.c2();
  const double C_H = std::max({*std::max_element(c2.begin(), c2.end()), 1.0 / *std::min_element(c2.begin(), c2.end()), 1.0});
  const double C_F = std::max({*std::max_element(c1.begin(), c1.end()), 1.0 / *std::min_element(c1.begin(), c1.end()), 1.0});
  for (std::size_t c = 0; c < model.grid().cells(); ++c) {
    const LocalModel lm = model.at(c);
    for (double s : {1.0, 1.5, 3.0, 10.0, 100.0}) {
      const double xi[1] = {s};
      const double h = hamiltonian(lm, xi), pr = std::pow(s, lm.r);
      CHECK(h >= pr / (lm.r * C_H) - C_H);
      CHECK(h <= C_H * pr / lm.r + C_H);
      const double F = antiderivative_F(lm, s), pq = std::pow(s, lm.q);
      CHECK(F >= pq / (lm.q * C_F) - C_F);
      CHECK(F <= C_F * pq / lm.q + C_F);
    }
  }
}

TEST_CASE("coercivity: quadratic model has ratio exactly one half") {
  auto model = cosine_model(2, 2.0, 2.0);
  auto maps = make_coercivity_maps(model);
  CHECK(maps.unit_H == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(maps.unit_H <= 0.5);
  LocalModel lm{2.0, 2.0, 1.0, 1.0};
  std::mt19937_64 rng(26);
  std::uniform_real_distribution<double> U(-3.0, 3.0);
  for (int k = 0; k < 500; ++k) {
    const double xi[2] = {U(rng), U(rng)}, zeta[2] = {U(rng), U(rng)};
    const double gap = hamiltonian(lm, xi) + hamiltonian_conjugate(lm, zeta) - xi[0] * zeta[0] - xi[1] * zeta[1];
    double a[2], b[2];
    maps.j1(xi, a);
    maps.j2(lm, zeta, b);
    const double rem = (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
    CHECK(std::abs(gap / rem - 0.5) < 1e-12);
  }
  // Conjugate pairs: zero gap and equal images.
  const double xi[2] = {0.3, -1.2};
  double g[2], a[2], b[2];
  LocalModel l{3.0, 2.0, 1.0, 1.4};
  auto m3 = make_coercivity_maps(cosine_model(2, 3.0, 2.0));
  d_xi_hamiltonian(l, xi, g);
  m3.j1(xi, a);
  m3.j2(l, g, b);
  CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));
  CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-12));
}

TEST_CASE("coercivity constants match a dense two-dimensional sampling oracle") {
  for (double r : {1.5, 3.0}) {
    // Oracle: unit coefficients, xi on the unit circle by homogeneity, zeta on a polar grid.
    double oracle = std::numeric_limits<double>::infinity();
    LocalModel lm{r, 2.0, 1.0, 1.0};
    CoercivityMaps maps;
    maps.r = r;
    const double xi[2] = {1.0, 0.0};
    double a[2], b[2];
    maps.j1(xi, a);
    for (int i = 1; i <= 1500; ++i)
      for (int j = 0; j <= 180; ++j) {
        const double rad = std::pow(10.0, -4.0 + 12.0 * i / 1500.0);
        const double th = std::numbers::pi * j / 180.0;
        const double zeta[2] = {rad * std::cos(th), rad * std::sin(th)};
        const double gap = hamiltonian(lm, xi) + hamiltonian_conjugate(lm, zeta) - zeta[0];
        maps.j2(lm, zeta, b);
        const double rem = (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
        if (rem > 1e-6) oracle = std::min(oracle, gap / rem);
      }
    const double c0 = unit_coercivity_H(r);
    CHECK(c0 <= oracle);
    CHECK(c0 >= 0.98 * oracle);
  }
  for (double q : {1.5, 3.0}) {
    double oracle = std::numeric_limits<double>::infinity();
    LocalModel lm{2.0, q, 1.0, 1.0};
    CoercivityMaps maps;
    maps.q = q;
    for (int i = -1; i <= 200000; ++i) {
      const double a = i < 0 ? -1.0 : std::pow(10.0, -6.0 + 14.0 * i / 200000.0);
      const double gap = antiderivative_F(lm, 1.0) + conjugate_Fstar(lm, a) - a;
      const double rem = std::pow(maps.J(1.0) - maps.Jstar(lm, a), 2);
      if (rem > 1e-8) oracle = std::min(oracle, gap / rem);
    }
    const double c0 = unit_coercivity_F(q);
    CHECK(c0 <= oracle);
    CHECK(c0 >= 0.98 * oracle);
  }
}

TEST_CASE("verify_coercivity passes on varied models and reports minimal ratios") {
  for (double r : {1.5, 2.0, 3.0})
    for (double q : {1.5, 2.0, 3.0}) {
      auto model = cosine_model(2, r, q);
      auto maps = make_coercivity_maps(model);
      auto rep = verify_coercivity(model, maps, 20000);
      CHECK_MESSAGE(rep.passed, rep.detail);
      CHECK(rep.min_ratio_H >= maps.c0_H);
      CHECK(rep.min_ratio_F >= maps.c0_F);
    }
  auto model = cosine_model(1, 2.0, 2.0);
  auto maps = make_coercivity_maps(model);
  maps.c0_H = 0.6;  // above the true constant 1/2
  CHECK(!verify_coercivity(model, maps, 1000).passed);
}

TEST_CASE("model validation and renormalization") {
  ModelSpec spec;
  spec.dim = 1;
  spec.m0 = [](double x, double) { return 1.0 + 0.5 * std::cos(2 * std::numbers::pi * x); };
  auto g = GridSpec::make(1, 16, 4, 1.0);
  DiscreteModel model(spec, g);
  double mass = 0.0;
  for (double v : model.m0()) mass += v * g.cell_volume();
  CHECK(std::abs(mass - 1.0) < 1e-12);

  ModelSpec bad = spec;
  bad.q = 0.5;
  CHECK_THROWS_AS(DiscreteModel(bad, g), InfeasibleModel);
  bad = spec;
  bad.m0 = [](double x, double) { return x < 0.5 ? 0.0 : 1.0; };
  CHECK_THROWS_AS(DiscreteModel(bad, g), InfeasibleModel);
  bad = spec;
  bad.c2 = [](double, double) { return -1.0; };
  CHECK_THROWS_AS(DiscreteModel(bad, g), std::invalid_argument);

  // Data translation is an index permutation.
  const int d[1] = {3};
  auto tr = model.translated(d);
  CHECK(tr.m0()[0] == model.m0()[3]);
  CHECK(tr.hash() != model.hash());
  CHECK(model.hash() == DiscreteModel(spec, g).hash());
}

TEST_CASE("standalone kernel property suite passes") {
  for (double r : {1.5, 2.0, 3.0}) {
    auto model = cosine_model(2, r, r == 2.0 ? 2.0 : 1.6);
    for (const auto& c : run_kernel_checks(model, 500, 99)) CHECK_MESSAGE(c.passed, c.name << ": " << c.detail);
  }
}
