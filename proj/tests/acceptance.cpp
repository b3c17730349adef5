// Acceptance run: one PASS/FAIL line per criterion. With arguments, only the
// listed criteria (1-9) are run. Exit status is nonzero if any of them fails.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mfg/config.hpp"
#include "mfg/diagnostics.hpp"
#include "oracles.hpp"

using namespace mfg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Detail {
 public:
  [[gnu::format(printf, 2, 3)]] void add(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    if (!text_.empty()) text_ += "; ";
    text_ += buf;
  }
  void fail(const std::string& why) {
    pass_ = false;
    add("%s", why.c_str());
  }
  void require(bool ok, const std::string& why) {
    if (!ok) fail(why);
  }
  Outcome done() const { return {pass_, text_}; }

 private:
  bool pass_ = true;
  std::string text_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ModelSpec homogeneous(int dim) {
  ModelSpec s;
  s.dim = dim;
  return s;
}

std::string brief(const Entry& e) {
  if (!e.available) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", e.value);
  return buf;
}

RunConfig shipped(const std::string& name) { return load_config(std::string(MFG_CONFIG_DIR) + "/" + name + ".cfg"); }

SolveOptions single_thread(SolveOptions o) {
  o.threads = 1;
  return o;
}

// 1. Homogeneous time-dependent anchor.
Outcome homogeneous_td() {
  Detail d;
  for (int dim : {1, 2}) {
    const DiscreteModel model(homogeneous(dim), GridSpec::make(dim, 32, 32));
    SolveOptions o;
    o.gap_tol = 1e-8;
    o.residual_tol = 1e-8;
    const auto t0 = std::chrono::steady_clock::now();
    const SolveResult res = solve_time_dependent(model, single_thread(o));
    const double secs = seconds_since(t0);
    double merr = 0.0, perr = 0.0;
    for (double v : res.primal.m.values) merr = std::max(merr, std::abs(v - 1.0));
    const GridSpec& g = model.grid();
    const double shift = res.dual.phi.values[0] - g.T;
    for (std::size_t k = 0; k < res.dual.phi.slices(); ++k)
      for (double v : res.dual.phi.slice(k)) perr = std::max(perr, std::abs(v - (g.T - k * g.ht()) - shift));
    d.add("d=%d m err %.2e gap %.2e phi err %.2e, %d iterations %.2fs", dim, merr, res.report.gap, perr,
          res.report.iterations, secs);
    d.require(res.report.status == SolveStatus::Converged, "not converged");
    d.require(merr <= 1e-6 && res.report.gap < 1e-6 && perr <= 1e-6 && secs < 30.0, "anchor tolerance missed");
  }
  return d.done();
}

// 2. Homogeneous stationary anchor.
Outcome homogeneous_stat() {
  Detail d;
  for (int dim : {1, 2}) {
    const DiscreteModel model(homogeneous(dim), GridSpec::make(dim, 32));
    SolveOptions o;
    o.gap_tol = 1e-8;
    o.residual_tol = 1e-8;
    const auto t0 = std::chrono::steady_clock::now();
    const SolveResult res = solve_stationary(model, single_thread(o));
    const double secs = seconds_since(t0);
    double merr = 0.0;
    for (double v : res.primal.m.values) merr = std::max(merr, std::abs(v - 1.0));
    const double lerr = std::abs(res.dual.lambda - 1.0);
    d.add("d=%d lambda err %.2e m err %.2e gap %.2e, %d iterations %.2fs", dim, lerr, merr, res.report.gap,
          res.report.iterations, secs);
    d.require(res.report.status == SolveStatus::Converged, "not converged");
    d.require(lerr <= 1e-6 && merr <= 1e-6 && res.report.gap < 1e-6 && secs < 10.0, "anchor tolerance missed");
  }
  return d.done();
}

struct BumpRun {
  std::string name;
  DiscreteModel model;
  SolveResult result;
};

// Shipped bump models at 32^d x 32 (stationary: 32^d), solved once for criteria 3 and 4.
const std::vector<BumpRun>& bump_runs() {
  static const std::vector<BumpRun> runs = [] {
    std::vector<BumpRun> out;
    for (const char* name : {"td-bump-1d", "td-bump-2d", "stat-bump-1d", "stat-bump-2d"}) {
      const RunConfig cfg = shipped(name);
      const bool stat = std::string(name).rfind("stat", 0) == 0;
      const GridSpec g = GridSpec::make(cfg.dim, 32, stat ? 0 : 32, cfg.T);
      DiscreteModel model(cfg.model_spec(), g);
      SolveOptions o = single_thread(cfg.solver);
      o.max_iters = 10000;
      SolveResult res = stat ? solve_stationary(model, o) : solve_time_dependent(model, o);
      out.push_back({name, std::move(model), std::move(res)});
    }
    return out;
  }();
  return runs;
}

// 3. Duality on the bump models.
Outcome duality() {
  Detail d;
  for (const BumpRun& run : bump_runs()) {
    const SolveReport& r = run.result.report;
    double worst = std::numeric_limits<double>::infinity();
    for (const TraceRow& t : r.trace)
      if (std::isfinite(t.B)) worst = std::min(worst, t.A + t.B);
    d.add("%s gap %.2e in %d iterations, min A+B %.2e", run.name.c_str(), r.gap, r.iterations, worst);
    d.require(r.gap <= 1e-4 && r.iterations <= 10000, run.name + " gap above 1e-4");
    d.require(!(worst < -1e-8), run.name + " weak duality violated");
  }
  return d.done();
}

// 4. Optimality coupling at convergence.
Outcome optimality() {
  Detail d;
  for (const BumpRun& run : bump_runs()) {
    const FeasibilityReport f = feasibility_report(run.model, run.result.primal, run.result.dual, 1e-6);
    double amax = 0.0;
    for (double v : run.result.dual.alpha.values) amax = std::max(amax, std::abs(v));
    const double bound = 1e-4 * (1.0 + amax);
    d.add("%s complementarity %.2e (bound %.2e) flux %.2e", run.name.c_str(), f.complementarity_mean, bound, f.flux);
    d.require(run.result.report.status == SolveStatus::Converged, run.name + " not converged");
    d.require(f.complementarity_mean <= bound && f.flux <= 1e-4, run.name + " optimality residual too large");
  }
  return d.done();
}

// 5. Sobolev quantities stay bounded along the refinement ladders.
Outcome sobolev_boundedness() {
  Detail d;
  struct Study {
    const char* config;
    bool stationary;
  };
  for (const Study s : {Study{"homogeneous", false}, Study{"homogeneous", true}, Study{"td-bump-1d", false},
                        Study{"td-bump-2d", false}, Study{"stat-bump-1d", true}, Study{"stat-bump-2d", true}}) {
    const RunConfig cfg = shipped(s.config);
    const auto t0 = std::chrono::steady_clock::now();
    const RefinementResult study =
        refinement_study(cfg.model_spec(), cfg.ladder_grids(s.stationary), single_thread(cfg.solver), cfg.diagnostics);
    std::string values;
    for (const auto& row : study.rows) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%s%s/%s/%s", values.empty() ? "" : " ", brief(row.report.sob_space).c_str(),
                    brief(row.report.sob_second).c_str(), brief(row.report.sob_time).c_str());
      values += buf;
    }
    d.add("%s %s [%s] %.0fs", s.config, s.stationary ? "stat" : "td", values.c_str(), seconds_since(t0));
    d.require(!study.nonconvergence, std::string(s.config) + " ladder did not converge");
    for (const auto& f : study.flags) d.fail(std::string(s.config) + ": " + f);
  }
  return d.done();
}

// 6. Translation probe.
Outcome translation() {
  Detail d;
  for (const char* name : {"stat-bump-1d", "stat-bump-2d"}) {
    const RunConfig cfg = shipped(name);
    const DiscreteModel model(cfg.model_spec(), cfg.grid(true));
    const SolveResult res = solve_stationary(model, single_thread(cfg.solver));
    const ProbeResult pr = translation_probe(model, res.primal, res.dual, cfg.diagnostics.shifts);
    double biggest = 0.0;
    for (const auto& pt : pr.table) biggest = std::max(biggest, std::abs(pt.difference));
    d.add("%s slope %s (max |difference| %.2e) rearrangement %.2e", name, pr.slope.csv().c_str(), biggest,
          pr.rearrangement_error);
    d.require(pr.slope.available && pr.slope.value >= 1.9, std::string(name) + " slope below 1.9 or unavailable");
    d.require(pr.rearrangement_error <= 1e-12, std::string(name) + " rearrangement identity broken");
  }
  for (int dim : {1, 2}) {
    const DiscreteModel model(homogeneous(dim), GridSpec::make(dim, 32));
    const SolveResult res = solve_stationary(model, SolveOptions{});
    const ProbeResult pr = translation_probe(model, res.primal, res.dual, {1, 2, 4, 8});
    double biggest = 0.0;
    for (const auto& pt : pr.table) biggest = std::max(biggest, std::abs(pt.difference));
    d.add("homogeneous d=%d max |difference| %.2e", dim, biggest);
    d.require(biggest <= 1e-10, "homogeneous differences above 1e-10");
  }
  for (const char* name : {"td-bump-1d", "td-bump-2d"}) {
    const RunConfig cfg = shipped(name);
    const DiscreteModel model(cfg.model_spec(), cfg.grid(false));
    const SolveResult res = solve_time_dependent(model, single_thread(cfg.solver));
    const ProbeResult pr = translation_probe(model, res.primal, res.dual, cfg.diagnostics.shifts);
    d.add("%s slope %s rearrangement %.2e", name, brief(pr.slope).c_str(), pr.rearrangement_error);
    d.require(pr.rearrangement_error <= 1e-12, std::string(name) + " rearrangement identity broken");
  }
  return d.done();
}

// 7. Convex-kernel oracles.
Outcome kernel_oracles() {
  Detail d;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> expo(1.3, 3.5), coef(0.5, 2.0), arg(-3.0, 3.0), tau(0.1, 2.0);
  double conj_H = 0.0, conj_F = 0.0, prox = 0.0, fy = 0.0, quad = 0.0;
  for (int k = 0; k < 200; ++k) {
    const LocalModel lm{expo(rng), expo(rng), coef(rng), coef(rng)};
    // H* along the direction of zeta: by isotropy the sup is attained on that line.
    const double z = arg(rng);
    const double zeta[1] = {z};
    const double oh = testing::zoomed_sup(
        std::abs(z), [&](double t) { return lm.c2 * std::pow(std::abs(t), lm.r) / lm.r; }, -1e3, 1e3);
    conj_H = std::max(conj_H, std::abs(hamiltonian_conjugate(lm, zeta) - oh));
    const double a = arg(rng);
    const double of = testing::zoomed_sup(
        a, [&](double m) { return lm.c1 * (std::pow(m, lm.q) - 1.0) / lm.q; }, 0.0, 1e3);
    conj_F = std::max(conj_F, std::abs(conjugate_Fstar(lm, a) - of));

    const double mh = arg(rng) * 2.0 / 3.0, wh = arg(rng) * 2.0 / 3.0, t = tau(rng);
    const double w1[1] = {wh};
    const ProxResult p = prox_perspective(lm, mh, w1, t);
    const auto [om, ow] = testing::grid_prox(lm, mh, wh, t);
    prox = std::max({prox, std::abs(p.m - om), std::abs(p.w[0] - ow)});

    const double xi[2] = {arg(rng), arg(rng)}, zz[2] = {arg(rng), arg(rng)};
    fy = std::min(fy, hamiltonian(lm, xi) + hamiltonian_conjugate(lm, zz) - xi[0] * zz[0] - xi[1] * zz[1]);
    const double m = std::abs(arg(rng));
    fy = std::min(fy, antiderivative_F(lm, m) + conjugate_Fstar(lm, a) - a * m);

    const LocalModel l2{2.0, 2.0, lm.c1, lm.c2};
    CoercivityMaps maps;
    double ja[2], jb[2];
    maps.j1(xi, ja);
    maps.j2(l2, zz, jb);
    const double gap = hamiltonian(l2, xi) + hamiltonian_conjugate(l2, zz) - xi[0] * zz[0] - xi[1] * zz[1];
    const double rem = (ja[0] - jb[0]) * (ja[0] - jb[0]) + (ja[1] - jb[1]) * (ja[1] - jb[1]);
    // For r = 2 the gap is |xi - zeta/c2|^2 c2/2; compare with c2/2 times the remainder.
    quad = std::max(quad, std::abs(gap - 0.5 * l2.c2 * rem) / (1.0 + gap));
  }
  d.add("conjugate H err %.2e F err %.2e prox err %.2e min Fenchel-Young %.2e quadratic identity %.2e", conj_H,
        conj_F, prox, fy, quad);
  d.require(conj_H <= 1e-4 && conj_F <= 1e-4, "conjugate oracle mismatch");
  d.require(prox <= 1e-5, "prox oracle mismatch");
  d.require(fy >= -1e-10, "Fenchel-Young gap negative");
  d.require(quad <= 1e-12, "quadratic identity broken");

  for (const char* name : {"homogeneous", "td-bump-1d", "td-bump-2d", "stat-bump-1d", "stat-bump-2d"}) {
    const RunConfig cfg = shipped(name);
    const DiscreteModel model(cfg.model_spec(), cfg.grid(false));
    const CoercivityMaps maps = make_coercivity_maps(model);
    const CoercivityReport rep = verify_coercivity(model, maps, 200);
    d.require(rep.passed && rep.min_ratio_H >= maps.c0_H && rep.min_ratio_F >= maps.c0_F,
              std::string(name) + " coercivity sample below c0: " + rep.detail);
  }
  d.add("coercivity sampled on all shipped models");
  return d.done();
}

// 8. Discrete calculus identities and the Poisson solve.
Outcome discrete_calculus() {
  Detail d;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<GridSpec> grids;
  for (int dim : {1, 2})
    for (int n : {4, 8, 16, 32, 64}) {
      grids.push_back(GridSpec::make(dim, n, 0));
      grids.push_back(GridSpec::make(dim, n, dim == 2 && n == 64 ? 8 : n / 2));
    }
  double adj = 0.0, lap = 0.0, mass = 0.0, cont = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const GridSpec& g = grids[static_cast<std::size_t>(trial) % grids.size()];
    const std::size_t cells = g.cells();
    std::vector<double> phi(cells), w(cells * g.dim), grad(cells * g.dim), div(cells), l(cells);
    for (double& v : phi) v = U(rng);
    for (double& v : w) v = U(rng);
    gradient(g, phi, grad);
    divergence(g, w, div);
    double lhs = 0.0, rhs = 0.0, scale = 0.0, total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) lhs += grad[i] * w[i], scale += std::abs(grad[i] * w[i]);
    for (std::size_t c = 0; c < cells; ++c) rhs -= phi[c] * div[c], total += div[c], scale += std::abs(phi[c] * div[c]);
    adj = std::max(adj, std::abs(lhs - rhs) / scale);
    mass = std::max(mass, std::abs(total) * g.cell_volume());
    laplacian(g, phi, l);
    std::vector<double> dg(cells);
    divergence(g, grad, dg);
    for (std::size_t c = 0; c < cells; ++c) lap = std::max(lap, std::abs(l[c] - dg[c]) / (1.0 + std::abs(l[c])));

    if (!g.stationary()) {
      // Density transported by a random flux keeps unit mass on every node.
      ScalarField m(g, Staggering::Node);
      FluxField f(g, Staggering::Midpoint);
      for (double& v : m.slice(0)) v = 1.0 + 0.5 * U(rng);
      double m0 = 0.0;
      for (double v : m.slice(0)) m0 += v;
      for (double& v : m.slice(0)) v /= m0 * g.cell_volume();
      for (double& v : f.values) v = U(rng);
      for (std::size_t k = 0; k < static_cast<std::size_t>(g.n_time); ++k) {
        divergence(g, f.slice(k), div);
        for (std::size_t c = 0; c < cells; ++c) m.slice(k + 1)[c] = m.slice(k)[c] - g.ht() * div[c];
      }
      for (std::size_t k = 0; k < m.slices(); ++k) mass = std::max(mass, std::abs(pairwise_sum(m.slice(k)) * g.cell_volume() - 1.0));
      for (double v : continuity_residual(m, f).values) cont = std::max(cont, std::abs(v));
    }
  }
  double poisson = 0.0;
  for (const GridSpec& g : grids) {
    PoissonSolver solver(g, {0.7, 1.3});
    const std::size_t n = g.stationary() ? g.cells() : g.cells() * static_cast<std::size_t>(g.n_time);
    std::vector<double> rhs(n), u(n), back(n);
    for (double& v : rhs) v = U(rng);
    if (g.stationary()) {
      double mean = 0.0;
      for (double v : rhs) mean += v;
      for (double& v : rhs) v -= mean / static_cast<double>(n);
    }
    solver.solve(rhs, u);
    solver.apply(u, back);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) num += (back[i] - rhs[i]) * (back[i] - rhs[i]), den += rhs[i] * rhs[i];
    poisson = std::max(poisson, std::sqrt(num / den));
  }
  d.add("1000 fields: adjointness %.2e laplacian %.2e mass %.2e continuity %.2e; poisson residual %.2e", adj, lap,
        mass, cont, poisson);
  d.require(adj <= 1e-10 && lap <= 1e-10 && mass <= 1e-10 && cont <= 1e-10, "calculus identity violated");
  d.require(poisson < 1e-10, "poisson residual above 1e-10");
  return d.done();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// 9. Determinism of the command-line runs.
Outcome determinism() {
  Detail d;
  const fs::path root = fs::temp_directory_path() / "mfg_acceptance_determinism";
  fs::remove_all(root);
  struct Run {
    const char* config;
    const char* command;
  };
  for (const Run r : {Run{"td-bump-2d", "solve-td"}, Run{"stat-bump-2d", "solve-stat"}}) {
    std::vector<fs::path> outs;
    for (int i = 0; i < 2; ++i) {
      const fs::path out = root / (std::string(r.config) + "_" + std::to_string(i));
      const std::string cmd = std::string(MFG_CLI) + " " + r.command + " --config " + MFG_CONFIG_DIR + "/" + r.config +
                              ".cfg --out " + out.string() + " --seed 12345 --threads 1 > /dev/null";
      if (std::system(cmd.c_str()) != 0) {
        d.fail(std::string("command failed: ") + cmd);
        return d.done();
      }
      outs.push_back(out);
    }
    std::size_t files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(outs[0])) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), outs[0]);
      const fs::path other = outs[1] / rel;
      d.require(fs::exists(other) && slurp(entry.path()) == slurp(other), rel.string() + " differs");
      ++files;
    }
    d.require(fs::exists(outs[0] / "report.csv") && fs::exists(outs[0] / "checkpoint" / "manifest.txt"),
              "report or checkpoint missing");
    d.add("%s: %zu files identical", r.config, files);
  }
  fs::remove_all(root);
  return d.done();
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"closed-form anchor, time-dependent", homogeneous_td},
      {"closed-form anchor, stationary", homogeneous_stat},
      {"duality on bump models", duality},
      {"optimality coupling", optimality},
      {"Sobolev boundedness under refinement", sobolev_boundedness},
      {"translation probe", translation},
      {"convex-kernel oracles", kernel_oracles},
      {"discrete calculus", discrete_calculus},
      {"determinism", determinism},
  };
  std::vector<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.push_back(std::atoi(argv[i]));
  if (chosen.empty())
    for (int i = 1; i <= 9; ++i) chosen.push_back(i);

  bool all = true;
  for (int c : chosen) {
    if (c < 1 || c > 9) {
      std::fprintf(stderr, "unknown criterion %d\n", c);
      return 2;
    }
    const auto& [title, run] = criteria[static_cast<std::size_t>(c - 1)];
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", c, title, o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
