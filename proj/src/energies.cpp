#include "mfg/energies.hpp"

#include <algorithm>
#include <cmath>

namespace mfg {

namespace {

std::span<const double> flux_at(const FluxField& w, std::size_t k, std::size_t cell, std::array<double, 2>& buf) {
  const int d = w.grid.dim;
  for (int a = 0; a < d; ++a) buf[a] = w.component(k, a)[cell];
  return std::span<const double>(buf.data(), d);
}

void check_td(const GridSpec& g, const char* what) {
  if (g.stationary()) throw GridMismatch(std::string(what) + ": requires a time-dependent grid");
}

void check_stat(const GridSpec& g, const char* what) {
  if (!g.stationary()) throw GridMismatch(std::string(what) + ": requires a stationary grid");
}

}  // namespace

PrimalState make_primal(const GridSpec& grid) {
  return {ScalarField(grid, Staggering::Node), FluxField(grid, Staggering::Midpoint)};
}

DualState make_dual(const GridSpec& grid) {
  return {ScalarField(grid, Staggering::Node), ScalarField(grid, Staggering::Midpoint), 0.0};
}

ExtendedReal eval_B_td(const DiscreteModel& model, const PrimalState& s) {
  const GridSpec& g = model.grid();
  check_td(g, "eval_B_td");
  if (s.m.grid != g || s.w.grid != g) throw GridMismatch("eval_B_td: grid mismatch");
  if (s.m.staggering != Staggering::Node || s.w.staggering != Staggering::Midpoint)
    throw GridMismatch("eval_B_td: m must be on nodes and w on midpoints");
  const std::size_t cells = g.cells();
  const std::size_t nt = static_cast<std::size_t>(g.n_time);
  std::vector<double> terms(nt * cells);
  std::array<double, 2> buf{};
  for (std::size_t k = 0; k < nt; ++k) {
    auto m = s.m.slice(k + 1);
    for (std::size_t c = 0; c < cells; ++c) {
      const LocalModel lm = model.at(c);
      const ExtendedReal p = perspective_B_integrand(lm, m[c], flux_at(s.w, k, c, buf));
      if (p.infinite) return ExtendedReal::plus_infinity();
      terms[k * cells + c] = p.value + antiderivative_F(lm, m[c]);
    }
  }
  std::vector<double> terminal(cells);
  auto mT = s.m.slice(nt);
  for (std::size_t c = 0; c < cells; ++c) terminal[c] = model.phiT()[c] * mT[c];
  const double vol = g.cell_volume();
  return ExtendedReal::finite(g.ht() * vol * pairwise_sum(terms) + vol * pairwise_sum(terminal));
}

ScalarField hj_operator(const DiscreteModel& model, const ScalarField& phi) {
  const GridSpec& g = model.grid();
  check_td(g, "hj_operator");
  if (phi.grid != g || phi.staggering != Staggering::Node) throw GridMismatch("hj_operator: phi must be on nodes");
  const std::size_t cells = g.cells();
  ScalarField out(g, Staggering::Midpoint);
  std::vector<double> grad(cells * g.dim);
  std::array<double, 2> xi{};
  const double inv_ht = 1.0 / g.ht();
  for (std::size_t k = 0; k < out.slices(); ++k) {
    gradient(g, phi.slice(k), grad);
    auto p0 = phi.slice(k);
    auto p1 = phi.slice(k + 1);
    auto o = out.slice(k);
    for (std::size_t c = 0; c < cells; ++c) {
      for (int a = 0; a < g.dim; ++a) xi[a] = grad[a * cells + c];
      o[c] = -(p1[c] - p0[c]) * inv_ht + hamiltonian(model.at(c), std::span<const double>(xi.data(), g.dim));
    }
  }
  return out;
}

double eval_A_td(const DiscreteModel& model, const DualState& s) {
  const GridSpec& g = model.grid();
  check_td(g, "eval_A_td");
  if (s.alpha.grid != g || s.phi.grid != g) throw GridMismatch("eval_A_td: grid mismatch");
  const std::size_t cells = g.cells();
  std::vector<double> terms(s.alpha.values.size());
  for (std::size_t k = 0; k < s.alpha.slices(); ++k) {
    auto a = s.alpha.slice(k);
    for (std::size_t c = 0; c < cells; ++c) terms[k * cells + c] = conjugate_Fstar(model.at(c), a[c]);
  }
  std::vector<double> initial(cells);
  auto p0 = s.phi.slice(0);
  for (std::size_t c = 0; c < cells; ++c) initial[c] = p0[c] * model.m0()[c];
  const double vol = g.cell_volume();
  return g.ht() * vol * pairwise_sum(terms) - vol * pairwise_sum(initial);
}

ScalarField hj_operator_stat(const DiscreteModel& model, double lambda, const ScalarField& phi) {
  const GridSpec& g = model.grid();
  check_stat(g, "hj_operator_stat");
  if (phi.grid != g) throw GridMismatch("hj_operator_stat: grid mismatch");
  const std::size_t cells = g.cells();
  ScalarField out(g, Staggering::Node);
  std::vector<double> grad(cells * g.dim);
  gradient(g, phi.slice(0), grad);
  std::array<double, 2> xi{};
  for (std::size_t c = 0; c < cells; ++c) {
    for (int a = 0; a < g.dim; ++a) xi[a] = grad[a * cells + c];
    out.values[c] = lambda + hamiltonian(model.at(c), std::span<const double>(xi.data(), g.dim));
  }
  return out;
}

double eval_A_stat(const DiscreteModel& model, double lambda, const ScalarField& phi) {
  const GridSpec& g = model.grid();
  const ScalarField arg = hj_operator_stat(model, lambda, phi);
  std::vector<double> terms(g.cells());
  for (std::size_t c = 0; c < terms.size(); ++c) terms[c] = conjugate_Fstar(model.at(c), arg.values[c]);
  return g.cell_volume() * pairwise_sum(terms) - lambda;
}

ExtendedReal eval_B_stat(const DiscreteModel& model, const ScalarField& m, const FluxField& w) {
  const GridSpec& g = model.grid();
  check_stat(g, "eval_B_stat");
  if (m.grid != g || w.grid != g) throw GridMismatch("eval_B_stat: grid mismatch");
  const std::size_t cells = g.cells();
  std::vector<double> terms(cells);
  std::array<double, 2> buf{};
  for (std::size_t c = 0; c < cells; ++c) {
    const LocalModel lm = model.at(c);
    const ExtendedReal p = perspective_B_integrand(lm, m.values[c], flux_at(w, 0, c, buf));
    if (p.infinite) return ExtendedReal::plus_infinity();
    terms[c] = p.value + antiderivative_F(lm, m.values[c]);
  }
  return ExtendedReal::finite(g.cell_volume() * pairwise_sum(terms));
}

double relative_gap(double A, const ExtendedReal& B) {
  if (B.infinite) return std::numeric_limits<double>::infinity();
  return std::abs(A + B.value) / (1.0 + std::abs(B.value));
}

double FeasibilityReport::worst_constraint() const {
  return std::max({continuity, initial, negativity, mass, trace});
}

FeasibilityReport feasibility_report(const DiscreteModel& model, const PrimalState& primal, const DualState& dual,
                                     double eps) {
  const GridSpec& g = model.grid();
  const std::size_t cells = g.cells();
  const double vol = g.cell_volume();
  FeasibilityReport rep;

  for (double v : continuity_residual(primal.m, primal.w).values) rep.continuity = std::max(rep.continuity, std::abs(v));
  for (double v : primal.m.values) rep.negativity = std::max(rep.negativity, -v);
  for (std::size_t k = 0; k < primal.m.slices(); ++k)
    rep.mass = std::max(rep.mass, std::abs(pairwise_sum(primal.m.slice(k)) * vol - 1.0));

  const bool td = !g.stationary();
  if (td) {
    auto m0 = primal.m.slice(0);
    for (std::size_t c = 0; c < cells; ++c) rep.initial = std::max(rep.initial, std::abs(m0[c] - model.m0()[c]));
    auto pT = dual.phi.slice(static_cast<std::size_t>(g.n_time));
    for (std::size_t c = 0; c < cells; ++c) rep.trace = std::max(rep.trace, pT[c] - model.phiT()[c]);
  } else {
    rep.phi_mean = std::abs(pairwise_sum(dual.phi.slice(0)) * vol);
  }

  const ScalarField hj = td ? hj_operator(model, dual.phi) : hj_operator_stat(model, dual.lambda, dual.phi);
  for (std::size_t i = 0; i < hj.values.size(); ++i)
    rep.hj = std::max(rep.hj, hj.values[i] - dual.alpha.values[i]);

  // Optimality couplings: alpha^k and w^k against m^(k+1), grad phi^k.
  const std::size_t nslices = td ? static_cast<std::size_t>(g.n_time) : 1;
  std::vector<double> comp(nslices * cells, 0.0);
  std::size_t active = 0;
  std::vector<double> grad(cells * g.dim);
  std::array<double, 2> xi{}, dh{};
  for (std::size_t k = 0; k < nslices; ++k) {
    auto m = primal.m.slice(td ? k + 1 : 0);
    auto a = dual.alpha.slice(k);
    gradient(g, dual.phi.slice(k), grad);
    for (std::size_t c = 0; c < cells; ++c) {
      const LocalModel lm = model.at(c);
      if (m[c] > eps) {
        comp[k * cells + c] = std::abs(a[c] - coupling(lm, m[c]));
        ++active;
      }
      for (int ax = 0; ax < g.dim; ++ax) xi[ax] = grad[ax * cells + c];
      d_xi_hamiltonian(lm, std::span<const double>(xi.data(), g.dim), std::span<double>(dh.data(), g.dim));
      for (int ax = 0; ax < g.dim; ++ax)
        rep.flux = std::max(rep.flux, std::abs(primal.w.component(k, ax)[c] + std::max(m[c], 0.0) * dh[ax]));
    }
  }
  const double total = pairwise_sum(comp);
  rep.complementarity = total * vol * (td ? g.ht() : 1.0);
  rep.complementarity_mean = active ? total / static_cast<double>(active) : 0.0;
  return rep;
}

}  // namespace mfg
