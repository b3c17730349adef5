#include "mfg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace mfg {

namespace {

constexpr double kVacuum = 1e-12;
constexpr double kProbeFloor = 1e-10;

/// Density slices paired with the gradient slices (m^(k+1) with node k), and
/// the time weight each contributes.
struct Pairing {
  std::size_t slices;
  std::size_t offset;
  double weight;
};

Pairing pairing(const GridSpec& g) {
  if (g.stationary()) return {1, 0, g.cell_volume()};
  return {static_cast<std::size_t>(g.n_time), 1, g.ht() * g.cell_volume()};
}

bool is_quadratic(double r) { return std::abs(r - 2.0) <= 1e-12; }

/// j1(grad phi) for one slice, laid out [axis][cell].
std::vector<double> j1_field(const GridSpec& g, const CoercivityMaps& maps, std::span<const double> phi) {
  const std::size_t cells = g.cells();
  std::vector<double> grad(cells * g.dim), out(cells * g.dim);
  gradient(g, phi, grad);
  std::array<double, 2> xi{}, j{};
  for (std::size_t c = 0; c < cells; ++c) {
    for (int a = 0; a < g.dim; ++a) xi[a] = grad[a * cells + c];
    maps.j1(std::span<const double>(xi.data(), g.dim), std::span<double>(j.data(), g.dim));
    for (int a = 0; a < g.dim; ++a) out[a * cells + c] = j[a];
  }
  return out;
}

/// Squared Frobenius norm of the forward-difference Jacobian of a face field at each cell.
std::vector<double> jacobian_sq(const GridSpec& g, const std::vector<double>& field) {
  const std::size_t cells = g.cells();
  const double inv = 1.0 / g.hx();
  std::vector<double> out(cells, 0.0);
  for (std::size_t c = 0; c < cells; ++c) {
    double s = 0.0;
    for (int i = 0; i < g.dim; ++i)
      for (int j = 0; j < g.dim; ++j) {
        const double d = (field[i * cells + g.neighbour(c, j, 1)] - field[i * cells + c]) * inv;
        s += d * d;
      }
    out[c] = s;
  }
  return out;
}

/// Sum of squared forward differences of a cell field, per cell.
std::vector<double> gradient_sq(const GridSpec& g, std::span<const double> v) {
  const std::size_t cells = g.cells();
  std::vector<double> grad(cells * g.dim), out(cells, 0.0);
  gradient(g, v, grad);
  for (std::size_t c = 0; c < cells; ++c)
    for (int a = 0; a < g.dim; ++a) out[c] += grad[a * cells + c] * grad[a * cells + c];
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Entry finite_or(double v, const char* why) {
  if (!std::isfinite(v)) return Entry::na(why);
  return Entry::of(v);
}

}  // namespace

std::string Entry::csv() const { return available ? fmt(value) : "NA:" + reason; }

Entry sobolev_space(const DiscreteModel& model, const ScalarField& m) {
  const GridSpec& g = model.grid();
  const Pairing pr = pairing(g);
  const double half = model.q() / 2.0;
  std::vector<double> terms;
  terms.reserve(pr.slices * g.cells());
  std::vector<double> powered(g.cells());
  for (std::size_t k = 0; k < pr.slices; ++k) {
    auto mk = m.slice(k + pr.offset);
    for (std::size_t c = 0; c < g.cells(); ++c) powered[c] = std::pow(std::max(mk[c], 0.0), half);
    const auto sq = gradient_sq(g, powered);
    terms.insert(terms.end(), sq.begin(), sq.end());
  }
  return finite_or(2.0 / model.q() * std::sqrt(pr.weight * pairwise_sum(terms)), "non-finite density");
}

Entry sobolev_space_direct(const DiscreteModel& model, const ScalarField& m) {
  const GridSpec& g = model.grid();
  const Pairing pr = pairing(g);
  const double e = model.q() / 2.0 - 1.0;
  const std::size_t cells = g.cells();
  const double inv = 1.0 / g.hx();
  std::vector<double> terms;
  terms.reserve(pr.slices * cells);
  for (std::size_t k = 0; k < pr.slices; ++k) {
    auto mk = m.slice(k + pr.offset);
    for (std::size_t c = 0; c < cells; ++c) {
      double s = 0.0;
      for (int a = 0; a < g.dim; ++a) {
        const std::size_t n = g.neighbour(c, a, 1);
        const double m0 = std::max(mk[c], 0.0), m1 = std::max(mk[n], 0.0);
        if (e < 0.0 && (m0 <= 0.0 || m1 <= 0.0)) return Entry::na("vacuum cell with q below 2");
        const double weight = 0.5 * (std::pow(m0, e) + std::pow(m1, e));
        const double d = weight * (m1 - m0) * inv;
        s += d * d;
      }
      terms.push_back(s);
    }
  }
  return finite_or(std::sqrt(pr.weight * pairwise_sum(terms)), "non-finite density");
}

Entry sobolev_second(const DiscreteModel& model, const ScalarField& m, const ScalarField& phi) {
  const GridSpec& g = model.grid();
  const Pairing pr = pairing(g);
  const CoercivityMaps maps = make_coercivity_maps(model);
  std::vector<double> terms;
  terms.reserve(pr.slices * g.cells());
  for (std::size_t k = 0; k < pr.slices; ++k) {
    const auto sq = jacobian_sq(g, j1_field(g, maps, phi.slice(k)));
    auto mk = m.slice(k + pr.offset);
    for (std::size_t c = 0; c < g.cells(); ++c) terms.push_back(std::max(mk[c], 0.0) * sq[c]);
  }
  return finite_or(std::sqrt(pr.weight * pairwise_sum(terms)), "non-finite potential gradient");
}

Entry sobolev_second_hessian(const DiscreteModel& model, const ScalarField& m, const ScalarField& phi) {
  if (!is_quadratic(model.r())) return Entry::na("Hessian form needs r = 2");
  const GridSpec& g = model.grid();
  const Pairing pr = pairing(g);
  const std::size_t cells = g.cells();
  const double inv2 = 1.0 / (g.hx() * g.hx());
  std::vector<double> terms;
  terms.reserve(pr.slices * cells);
  for (std::size_t k = 0; k < pr.slices; ++k) {
    auto p = phi.slice(k);
    auto mk = m.slice(k + pr.offset);
    for (std::size_t c = 0; c < cells; ++c) {
      double s = 0.0;
      for (int i = 0; i < g.dim; ++i)
        for (int j = 0; j < g.dim; ++j) {
          const std::size_t ci = g.neighbour(c, i, 1);
          const std::size_t cj = g.neighbour(c, j, 1);
          const std::size_t cij = g.neighbour(ci, j, 1);
          const double h = ((p[cij] - p[ci]) - (p[cj] - p[c])) * inv2;
          s += h * h;
        }
      terms.push_back(std::max(mk[c], 0.0) * s);
    }
  }
  return finite_or(std::sqrt(pr.weight * pairwise_sum(terms)), "non-finite potential");
}

Entry sobolev_time(const DiscreteModel& model, const ScalarField& m) {
  const GridSpec& g = model.grid();
  if (g.stationary()) return Entry::na("stationary grid");
  if (!is_quadratic(model.r())) return Entry::na("time bound requires r = 2");
  const double half = model.q() / 2.0;
  const std::size_t cells = g.cells();
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(g.n_time) * cells);
  for (std::size_t k = 0; k < static_cast<std::size_t>(g.n_time); ++k) {
    auto a = m.slice(k);
    auto b = m.slice(k + 1);
    for (std::size_t c = 0; c < cells; ++c)
      terms.push_back(std::abs(std::pow(std::max(b[c], 0.0), half) - std::pow(std::max(a[c], 0.0), half)));
  }
  // ht * |difference| / ht per cell and interval.
  return finite_or(g.cell_volume() * pairwise_sum(terms), "non-finite density");
}

StationaryH1 stationary_H1(const DiscreteModel& model, double lambda, const ScalarField& phi, const ScalarField& m) {
  const GridSpec& g = model.grid();
  if (!g.stationary()) return {Entry::na("stationary only"), Entry::na("stationary only")};
  const CoercivityMaps maps = make_coercivity_maps(model);
  const std::size_t cells = g.cells();
  std::vector<double> jm(cells), js(cells);
  for (std::size_t c = 0; c < cells; ++c) jm[c] = maps.J(std::max(m.values[c], 0.0));
  const ScalarField arg = hj_operator_stat(model, lambda, phi);
  for (std::size_t c = 0; c < cells; ++c) js[c] = maps.Jstar(model.at(c), arg.values[c]);
  const double vol = g.cell_volume();
  return {finite_or(std::sqrt(vol * pairwise_sum(gradient_sq(g, jm))), "non-finite density"),
          finite_or(std::sqrt(vol * pairwise_sum(gradient_sq(g, js))), "non-finite potential")};
}

PhiPlus phi_plus_bounds(const DiscreteModel& model, const ScalarField& phi) {
  const GridSpec& g = model.grid();
  const double d = g.dim, r = model.r(), p = model.p();
  const double threshold = 1.0 + d / r;
  PhiPlus out;
  if (std::abs(p - threshold) <= 1e-12 * threshold) {
    out.eta_norm = out.gamma_norm = Entry::na("borderline exponent p = 1 + d/r");
    out.eta = out.gamma = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const std::size_t cells = g.cells();
  const double vol = g.cell_volume();
  const std::size_t nodes = phi.slices();
  // Time integrals use the left nodes 0..n_time-1; the sup runs over all nodes.
  const std::size_t timed = g.stationary() ? 1 : static_cast<std::size_t>(g.n_time);
  const double tw = g.stationary() ? 1.0 : g.ht();

  if (p > threshold) {
    out.eta = out.gamma = std::numeric_limits<double>::infinity();
    double mx = 0.0;
    for (double v : phi.values) mx = std::max(mx, v);
    out.eta_norm = out.gamma_norm = Entry::of(mx);
    return out;
  }
  const double denom = d - r * (p - 1.0);
  out.eta = d * (r * (p - 1.0) + 1.0) / denom;
  out.gamma = r * p * (1.0 + d) / denom;

  std::vector<double> buf(cells);
  double sup = 0.0;
  for (std::size_t k = 0; k < nodes; ++k) {
    auto s = phi.slice(k);
    for (std::size_t c = 0; c < cells; ++c) buf[c] = std::pow(std::max(s[c], 0.0), out.eta);
    sup = std::max(sup, std::pow(vol * pairwise_sum(buf), 1.0 / out.eta));
  }
  std::vector<double> terms;
  terms.reserve(timed * cells);
  for (std::size_t k = 0; k < timed; ++k) {
    auto s = phi.slice(k);
    for (std::size_t c = 0; c < cells; ++c) terms.push_back(std::pow(std::max(s[c], 0.0), out.gamma));
  }
  out.eta_norm = finite_or(sup, "non-finite potential");
  out.gamma_norm = finite_or(std::pow(tw * vol * pairwise_sum(terms), 1.0 / out.gamma), "non-finite potential");
  return out;
}

Entry congestion_norm(const DiscreteModel& model, const ScalarField& m, const ScalarField& phi, double s) {
  if (!(s > 0.0)) return Entry::na("congestion exponent s must be positive");
  const GridSpec& g = model.grid();
  const Pairing pr = pairing(g);
  for (std::size_t k = 0; k < pr.slices; ++k)
    for (double v : m.slice(k + pr.offset))
      if (v <= kVacuum) return Entry::na("density reaches vacuum so 1/m is not summable");
  const double t = 2.0 * s / (s + 1.0);
  const CoercivityMaps maps = make_coercivity_maps(model);
  std::vector<double> terms;
  terms.reserve(pr.slices * g.cells());
  for (std::size_t k = 0; k < pr.slices; ++k)
    for (double v : jacobian_sq(g, j1_field(g, maps, phi.slice(k)))) terms.push_back(std::pow(v, t / 2.0));
  return finite_or(std::pow(pr.weight * pairwise_sum(terms), 1.0 / t), "non-finite potential gradient");
}

ProbeResult translation_probe(const DiscreteModel& model, const PrimalState& primal, const DualState& dual,
                              const std::vector<int>& shifts) {
  const GridSpec& g = model.grid();
  std::set<int> sorted;
  for (int s : shifts) {
    if (s < 1) throw std::invalid_argument("translation_probe: shifts below one lattice cell");
    sorted.insert(s);
  }
  if (sorted.empty()) throw std::invalid_argument("translation_probe: no shifts given");

  ProbeResult out;
  std::array<int, 2> delta{};
  auto shift_of = [&](int s) {
    delta = {s, 0};
    return std::span<const int>(delta.data(), g.dim);
  };

  if (g.stationary()) {
    const double base = eval_A_stat(model, dual.lambda, dual.phi);
    for (int s : sorted) {
      // phi_h(x) = phi(x - h).
      const std::array<int, 2> back{-s, 0};
      const ScalarField ph = translate(dual.phi, std::span<const int>(back.data(), g.dim));
      out.table.push_back({s, s * g.hx(), eval_A_stat(model, dual.lambda, ph) - base});
    }
    for (int s : sorted) {
      const DiscreteModel moved = model.translated(shift_of(s));
      const ExtendedReal b0 = eval_B_stat(model, primal.m, primal.w);
      const ExtendedReal b1 = eval_B_stat(moved, translate(primal.m, shift_of(s)), translate(primal.w, shift_of(s)));
      if (!b0.infinite && !b1.infinite)
        out.rearrangement_error = std::max(out.rearrangement_error, std::abs(b1.value - b0.value));
    }
  } else {
    const ExtendedReal base = eval_B_td(model, primal);
    if (base.infinite) {
      out.slope = Entry::na("primal energy is infinite");
      return out;
    }
    for (int s : sorted) {
      const DiscreteModel plus = model.translated(shift_of(s));
      const ExtendedReal bp = eval_B_td(plus, primal);
      const std::array<int, 2> neg{-s, 0};
      const DiscreteModel minus = model.translated(std::span<const int>(neg.data(), g.dim));
      const ExtendedReal bm = eval_B_td(minus, primal);
      const double diff = bp.infinite || bm.infinite ? std::numeric_limits<double>::infinity()
                                                     : bp.value + bm.value - 2.0 * base.value;
      out.table.push_back({s, s * g.hx(), diff});

      PrimalState moved{translate(primal.m, shift_of(s)), translate(primal.w, shift_of(s))};
      const ExtendedReal re = eval_B_td(plus, moved);
      if (!re.infinite) out.rearrangement_error = std::max(out.rearrangement_error, std::abs(re.value - base.value));
    }
  }

  // Least squares of log|difference| against log|h| over the four smallest shifts.
  const std::size_t window = std::min<std::size_t>(4, out.table.size());
  double biggest = 0.0;
  for (std::size_t i = 0; i < window; ++i) biggest = std::max(biggest, std::abs(out.table[i].difference));
  if (!(biggest > kProbeFloor)) {
    out.slope = Entry::na("differences below 1e-10");
    return out;
  }
  if (window < 2) {
    out.slope = Entry::na("fewer than two shifts");
    return out;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < window; ++i) {
    const double diff = out.table[i].difference;
    if (!(diff > 0.0) || !std::isfinite(diff)) {
      out.slope = Entry::na("non-positive difference at shift " + std::to_string(out.table[i].shift));
      return out;
    }
    const double x = std::log(out.table[i].length), y = std::log(diff);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(window);
  out.slope = Entry::of((n * sxy - sx * sy) / (n * sxx - sx * sx));
  return out;
}

DiagnosticsReport diagnose(const DiscreteModel& model, const SolveResult& result, const DiagnosticsOptions& opts) {
  const GridSpec& g = model.grid();
  const PrimalState& pr = result.primal;
  const DualState& du = result.dual;
  DiagnosticsReport rep;
  rep.grid = g;
  rep.converged = result.report.status == SolveStatus::Converged;

  if (g.stationary()) {
    rep.gap = relative_gap(eval_A_stat(model, du.lambda, du.phi), eval_B_stat(model, pr.m, pr.w));
  } else {
    rep.gap = relative_gap(eval_A_td(model, du), eval_B_td(model, pr));
  }
  const auto& trace = result.report.trace;
  const auto it = std::find_if(trace.begin(), trace.end(),
                               [&](const TraceRow& t) { return t.iteration == result.report.returned_iteration; });
  rep.res_cont = it != trace.end() ? it->continuity : 0.0;
  rep.feasibility = feasibility_report(model, pr, du);

  rep.sob_space = sobolev_space(model, pr.m);
  rep.sob_space_direct = sobolev_space_direct(model, pr.m);
  rep.sob_second = sobolev_second(model, pr.m, du.phi);
  rep.sob_time = sobolev_time(model, pr.m);
  const StationaryH1 h1 = stationary_H1(model, du.lambda, du.phi, pr.m);
  rep.h1_Jm = h1.Jm;
  rep.h1_Jstar = h1.Jstar;
  rep.translation = translation_probe(model, pr, du, opts.shifts);
  const PhiPlus pp = phi_plus_bounds(model, du.phi);
  rep.phi_plus_eta = pp.eta_norm;
  rep.phi_plus_gamma = pp.gamma_norm;
  rep.congestion = congestion_norm(model, pr.m, du.phi, opts.congestion_s);
  return rep;
}

bool growth_flagged(const Entry& coarse, const Entry& fine, double factor, double zero_floor) {
  if (!coarse.available || !fine.available) return false;
  const double a = std::abs(coarse.value), b = std::abs(fine.value);
  if (b <= zero_floor) return false;
  if (a <= zero_floor) return true;
  return b > factor * a;
}

RefinementResult refinement_study(const ModelSpec& spec, const std::vector<GridSpec>& ladder, const SolveOptions& opts,
                                  const DiagnosticsOptions& dopts) {
  if (ladder.size() < 3) throw std::invalid_argument("refinement_study: ladder needs at least three grids");
  for (std::size_t i = 1; i < ladder.size(); ++i) {
    const GridSpec &a = ladder[i - 1], &b = ladder[i];
    if (a.dim != b.dim || b.n_space != 2 * a.n_space || a.stationary() != b.stationary())
      throw std::invalid_argument("refinement_study: ladder must be dyadic in space with a fixed dimension");
  }
  RefinementResult out;
  for (const GridSpec& g : ladder) {
    const DiscreteModel model(spec, g);
    const SolveResult res = g.stationary() ? solve_stationary(model, opts) : solve_time_dependent(model, opts);
    RefinementRow row{diagnose(model, res, dopts), res.report.status};
    if (res.report.status != SolveStatus::Converged) out.nonconvergence = true;
    out.rows.push_back(std::move(row));
  }
  const auto label = [](const GridSpec& g) { return std::to_string(g.n_space); };
  for (std::size_t i = 1; i < out.rows.size(); ++i) {
    const DiagnosticsReport &a = out.rows[i - 1].report, &b = out.rows[i].report;
    const std::pair<const char*, const Entry DiagnosticsReport::*> tracked[] = {
        {"sob_space", &DiagnosticsReport::sob_space},
        {"sob_second", &DiagnosticsReport::sob_second},
        {"sob_time", &DiagnosticsReport::sob_time},
    };
    for (const auto& [name, field] : tracked) {
      if (growth_flagged(a.*field, b.*field, dopts.growth_factor, dopts.zero_floor)) {
        std::ostringstream msg;
        msg << name << " grew from " << fmt((a.*field).value) << " at n_space " << label(a.grid) << " to "
            << fmt((b.*field).value) << " at n_space " << label(b.grid);
        out.flags.push_back(msg.str());
      }
    }
  }
  return out;
}

std::string csv_header() {
  return "grid,n_time,gap,res_cont,sob_space,sob_second,sob_time,h1_Jm,h1_Jstar,trans_slope,phi_plus_eta,"
         "phi_plus_gamma,congestion";
}

std::string csv_row(const DiagnosticsReport& rep) {
  std::ostringstream os;
  os << rep.grid.n_space;
  if (rep.grid.dim == 2) os << 'x' << rep.grid.n_space;
  os << ',' << rep.grid.n_time << ',' << fmt(rep.gap) << ',' << fmt(rep.res_cont) << ',' << rep.sob_space.csv()
     << ',' << rep.sob_second.csv() << ',' << rep.sob_time.csv() << ',' << rep.h1_Jm.csv() << ','
     << rep.h1_Jstar.csv() << ',' << rep.translation.slope.csv() << ',' << rep.phi_plus_eta.csv() << ','
     << rep.phi_plus_gamma.csv() << ',' << rep.congestion.csv();
  return os.str();
}

void write_report_csv(const std::filesystem::path& path, const std::vector<DiagnosticsReport>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << csv_header() << '\n';
  for (const auto& r : rows) f << csv_row(r) << '\n';
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "iteration,gap,residual,multiplier_residual,continuity,penalty,A,B\n";
  for (const auto& t : trace)
    f << t.iteration << ',' << fmt(t.gap) << ',' << fmt(t.residual) << ',' << fmt(t.multiplier_residual) << ','
      << fmt(t.continuity) << ',' << fmt(t.penalty) << ',' << fmt(t.A) << ',' << fmt(t.B) << '\n';
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace mfg
