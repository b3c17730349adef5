#include "mfg/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mfg {

void SolveOptions::validate() const {
  std::vector<std::string> errors;
  if (!(penalty > 0.0)) errors.emplace_back("penalty must be > 0");
  if (!(gap_tol > 0.0)) errors.emplace_back("gap_tol must be > 0");
  if (!(residual_tol > 0.0)) errors.emplace_back("residual_tol must be > 0");
  if (!(relaxation > 0.0 && relaxation < 2.0)) errors.emplace_back("relaxation must lie in (0, 2)");
  if (max_iters < 0) errors.emplace_back("max_iters must be >= 0");
  if (checkpoint_every < 0) errors.emplace_back("checkpoint_every must be >= 0");
  if (threads < 1) errors.emplace_back("threads must be >= 1");
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "; ") + e;
    throw std::invalid_argument(msg);
  }
}

std::string to_string(SolveStatus s) { return s == SolveStatus::Converged ? "converged" : "nonconvergence"; }

namespace {

constexpr int kPenaltyWindow = 10;
constexpr double kPenaltyImbalance = 10.0;
constexpr double kSeedAmplitude = 0.05;
// Density below which the projection's flux correction is scaled down.
constexpr double kMobilityScale = 1e-3;
// Density threshold of the complementarity part of the stopping residual.
constexpr double kOptimalityEps = 1e-6;

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw CheckpointError("checkpoint: malformed number '" + s + "'");
  return v;
}

double max_abs(std::span<const double> v) {
  double r = 0.0;
  for (double x : v) r = std::max(r, std::abs(x));
  return r;
}

double sum_sq(std::span<const double> v) {
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
  return pairwise_sum(sq);
}

struct Reported {
  PrimalState primal;
  DualState dual;
  double A = 0.0;
  ExtendedReal B;
  double gap = 0.0;
  /// Max-norm constraint residual of the projected pair.
  double infeasibility = 0.0;
  /// Flux optimality (max norm) and mean complementarity on {m > kOptimalityEps}.
  double optimality = 0.0;
};

class AlmEngine {
 public:
  AlmEngine(const DiscreteModel& model, const SolveOptions& opts)
      : model_(model), grid_(model.grid()), opts_(opts), td_(!grid_.stationary()), poisson_(grid_) {
    opts_.validate();
    if (td_ && grid_.n_time < 1) throw GridMismatch("solver: time-dependent solve needs n_time >= 1");
    cells_ = grid_.cells();
    nslices_ = td_ ? static_cast<std::size_t>(grid_.n_time) : 1;
    m_ = ScalarField(grid_, Staggering::Node);
    w_ = FluxField(grid_, Staggering::Midpoint);
    qa_ = ScalarField(grid_, Staggering::Midpoint);
    qb_ = FluxField(grid_, Staggering::Midpoint);
    phi_ = ScalarField(grid_, Staggering::Node);
    rho_ = opts_.penalty;
    configured_penalty_ = opts_.penalty;
  }

  void initialize() {
    for (std::size_t k = 0; k < m_.slices(); ++k) std::copy(model_.m0().begin(), model_.m0().end(), m_.slice(k).begin());
    for (std::size_t k = 0; k < phi_.slices(); ++k)
      std::copy(model_.phiT().begin(), model_.phiT().end(), phi_.slice(k).begin());
    for (std::size_t k = 0; k < nslices_; ++k) {
      auto qa = qa_.slice(k);
      for (std::size_t c = 0; c < cells_; ++c) {
        const double f = coupling(model_.at(c), model_.m0()[c]);
        qa[c] = td_ ? -f : f;
      }
    }
    if (opts_.seed != 0) {
      std::mt19937_64 rng(opts_.seed);
      std::uniform_real_distribution<double> U(-kSeedAmplitude, kSeedAmplitude);
      const std::size_t first = td_ ? 1 : 0;
      for (std::size_t k = first; k < m_.slices(); ++k)
        for (double& v : m_.slice(k)) v *= 1.0 + U(rng);
      for (double& v : qa_.values) v += U(rng);
    }
  }

  SolveResult run() {
    const auto start = std::chrono::steady_clock::now();
#ifdef _OPENMP
    omp_set_num_threads(opts_.threads);
#endif
    SolveResult result;
    bool converged = status_ == "converged";
    std::optional<Reported> last;
    while (!converged && iteration_ < opts_.max_iters) {
      ++iteration_;
      Reported rep = step();
      const TraceRow& row = trace_.back();
      converged = row.gap <= opts_.gap_tol && row.residual <= opts_.residual_tol;
      const double merit = std::max(row.gap / opts_.gap_tol, row.residual / opts_.residual_tol);
      if (merit < best_merit_ || best_iteration_ == 0) {
        best_merit_ = merit;
        best_iteration_ = iteration_;
        best_ = rep;
      }
      if (converged) status_ = "converged";
      else if (iteration_ >= opts_.max_iters) status_ = "nonconvergence";
      last = std::move(rep);
      if (!opts_.checkpoint_dir.empty() && opts_.checkpoint_every > 0 && iteration_ % opts_.checkpoint_every == 0 &&
          !converged && iteration_ < opts_.max_iters)
        write_checkpoint(opts_.checkpoint_dir, *last);
    }
    if (!converged && iteration_ >= opts_.max_iters) status_ = "nonconvergence";

    Reported out;
    int returned = iteration_;
    if (converged && last) {
      out = *last;
    } else if (converged && loaded_rep_) {
      out = *loaded_rep_;
    } else if (best_) {
      out = *best_;
      returned = best_iteration_;
    } else {
      // No iteration was run: report the initial iterate.
      out = reported_from(m_, w_, phi_, lambda_);
      returned = iteration_;
    }
    if (!opts_.checkpoint_dir.empty()) write_checkpoint(opts_.checkpoint_dir, last ? *last : out);

    result.primal = out.primal;
    result.dual = out.dual;
    SolveReport& r = result.report;
    r.status = converged ? SolveStatus::Converged : SolveStatus::NonConvergence;
    r.iterations = iteration_;
    r.returned_iteration = returned;
    r.A = out.A;
    r.B = out.B;
    r.gap = out.gap;
    r.trace = trace_;
    const auto it = std::find_if(trace_.begin(), trace_.end(), [&](const TraceRow& t) { return t.iteration == returned; });
    r.residual = it != trace_.end() ? it->residual : 0.0;
    r.feasibility = feasibility_report(model_, out.primal, out.dual);
    r.final_penalty = rho_;
    r.penalty_changed_on_resume = penalty_changed_;
    r.seed = opts_.seed;
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
  }

  void load(const std::filesystem::path& dir);
  void write_checkpoint(const std::filesystem::path& dir, const Reported& rep) const;
  /// States a finished (or interrupted) run would hand back.
  Reported loaded_result() const {
    if (status_ != "converged" && best_) return *best_;
    return *loaded_rep_;
  }
  int loaded_returned_iteration() const { return status_ != "converged" && best_ ? best_iteration_ : iteration_; }
  const std::string& status() const { return status_; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  double penalty() const { return rho_; }
  bool penalty_changed() const { return penalty_changed_; }
  int iteration() const { return iteration_; }
  std::uint64_t seed() const { return opts_.seed; }
  const DiscreteModel& model() const { return model_; }

 private:
  Reported step();
  void phi_step_td();
  void phi_step_stat();
  Reported reported_from(const ScalarField& m, const FluxField& w, const ScalarField& phi, double lambda);
  PrimalState project_td(const ScalarField& m, const FluxField& w, const ScalarField& phi);
  PrimalState project_stat(const ScalarField& m, const FluxField& w);
  void limit_outflow(std::span<const double> m0, std::span<double> ws, double speed) const;
  void complete(Reported& rep) const;

  const DiscreteModel& model_;
  GridSpec grid_;
  SolveOptions opts_;
  bool td_;
  PoissonSolver poisson_;
  std::size_t cells_ = 0;
  std::size_t nslices_ = 0;

  // Iterate: sigma = (m, w), auxiliary q = (qa, qb), potential phi, constant lambda.
  ScalarField m_;
  FluxField w_;
  ScalarField qa_;
  FluxField qb_;
  ScalarField phi_;
  double lambda_ = 0.0;
  double rho_ = 1.0;
  double configured_penalty_ = 1.0;
  bool penalty_changed_ = false;
  int iteration_ = 0;
  std::string status_ = "running";
  std::vector<TraceRow> trace_;

  std::optional<Reported> best_;
  std::optional<Reported> loaded_rep_;
  double best_merit_ = std::numeric_limits<double>::infinity();
  int best_iteration_ = 0;

};

void AlmEngine::phi_step_td() {
  const std::size_t nt = nslices_;
  const double ht = grid_.ht();
  const double inv_ht = 1.0 / ht;
  // u^k = rho (c^k - qa^k) - m^(k+1), with c carrying phiT/ht on the last interval.
  std::vector<double> u(nt * cells_);
  for (std::size_t k = 0; k < nt; ++k) {
    auto qa = qa_.slice(k);
    auto m = m_.slice(k + 1);
    for (std::size_t c = 0; c < cells_; ++c) {
      const double cterm = k + 1 == nt ? model_.phiT()[c] * inv_ht : 0.0;
      u[k * cells_ + c] = rho_ * (cterm - qa[c]) - m[c];
    }
  }
  std::vector<double> rhs(nt * cells_);
  std::vector<double> flux(cells_ * grid_.dim), div(cells_);
  for (std::size_t k = 0; k < nt; ++k) {
    auto w = w_.slice(k);
    auto qb = qb_.slice(k);
    for (std::size_t i = 0; i < flux.size(); ++i) flux[i] = -w[i] - rho_ * qb[i];
    divergence(grid_, flux, div);
    for (std::size_t c = 0; c < cells_; ++c) {
      const double prev = k == 0 ? 0.0 : u[(k - 1) * cells_ + c];
      double v = (u[k * cells_ + c] - prev) * inv_ht + div[c];
      if (k == 0) v += model_.m0()[c] * inv_ht;
      rhs[k * cells_ + c] = v / rho_;
    }
  }
  poisson_.solve(rhs, std::span<double>(phi_.values).first(nt * cells_));
  std::copy(model_.phiT().begin(), model_.phiT().end(), phi_.slice(nt).begin());
}

void AlmEngine::phi_step_stat() {
  const double vol = grid_.cell_volume();
  lambda_ = vol * pairwise_sum(qa_.values) + (1.0 - vol * pairwise_sum(m_.values)) / rho_;
  std::vector<double> flux(cells_ * grid_.dim), div(cells_);
  for (std::size_t i = 0; i < flux.size(); ++i) flux[i] = w_.values[i] + rho_ * qb_.values[i];
  divergence(grid_, flux, div);
  for (double& v : div) v = -v / rho_;
  const double mean = pairwise_sum(div) / static_cast<double>(cells_);
  for (double& v : div) v -= mean;
  poisson_.solve_space(div, phi_.values);
}

Reported AlmEngine::step() {
  if (td_)
    phi_step_td();
  else
    phi_step_stat();

  const int d = grid_.dim;
  const double inv_ht = td_ ? 1.0 / grid_.ht() : 0.0;
  const std::size_t total = nslices_ * cells_;
  ScalarField m_new = m_;
  FluxField w_new = w_;
  std::vector<double> grad(total * d);
  for (std::size_t k = 0; k < nslices_; ++k)
    gradient(grid_, phi_.slice(k), std::span<double>(grad).subspan(k * cells_ * d, cells_ * d));

  std::vector<double> dq(qa_.values.size() + qb_.values.size());
  std::vector<double> dsigma(dq.size());
  bool failed = false;
  const std::size_t mshift = td_ ? 1 : 0;

#pragma omp parallel for schedule(static)
  for (long flat = 0; flat < static_cast<long>(total); ++flat) {
    const std::size_t k = static_cast<std::size_t>(flat) / cells_;
    const std::size_t c = static_cast<std::size_t>(flat) % cells_;
    const LocalModel lm = model_.at(c);
    const double m_old = m_.values[(k + mshift) * cells_ + c];
    const std::size_t ia = k * cells_ + c;
    const double a_exact = td_ ? (phi_.values[(k + 1) * cells_ + c] - phi_.values[k * cells_ + c]) * inv_ht : lambda_;
    const double a = opts_.relaxation * a_exact + (1.0 - opts_.relaxation) * qa_.values[ia];
    const double m_hat = td_ ? m_old - rho_ * a : m_old + rho_ * a;
    std::array<double, 2> w_hat{}, b{};
    for (int ax = 0; ax < d; ++ax) {
      const std::size_t iw = (k * d + ax) * cells_ + c;
      b[ax] = opts_.relaxation * grad[iw] + (1.0 - opts_.relaxation) * qb_.values[iw];
      w_hat[ax] = w_.values[(k * d + ax) * cells_ + c] - rho_ * b[ax];
    }
    ProxResult p;
    try {
      p = prox_perspective(lm, m_hat, std::span<const double>(w_hat.data(), d), rho_, m_old);
    } catch (const ConvergenceFailure&) {
#pragma omp atomic write
      failed = true;
      continue;
    }
    m_new.values[(k + mshift) * cells_ + c] = p.m;
    const double qa_new = td_ ? a + (p.m - m_old) / rho_ : a + (m_old - p.m) / rho_;
    dq[ia] = qa_new - qa_.values[ia];
    dsigma[ia] = (p.m - m_old) / rho_;
    qa_.values[ia] = qa_new;
    for (int ax = 0; ax < d; ++ax) {
      const std::size_t iw = (k * d + ax) * cells_ + c;
      const double w_old = w_.values[iw];
      w_new.values[iw] = p.w[ax];
      const double qb_new = td_ ? b[ax] + (p.w[ax] - w_old) / rho_ : b[ax] + (p.w[ax] - w_old) / rho_;
      dq[qa_.values.size() + iw] = qb_new - qb_.values[iw];
      dsigma[qa_.values.size() + iw] = (p.w[ax] - w_old) / rho_;
      qb_.values[iw] = qb_new;
    }
  }
  if (failed) throw ConvergenceFailure("solver: proximal step failed to converge");

  m_ = std::move(m_new);
  w_ = std::move(w_new);

  // Residuals: |Lambda phi - q| equals the sigma increment over rho.
  const double mult_res = max_abs(dsigma);
  const double primal_l2 = std::sqrt(sum_sq(dsigma));
  const double dual_l2 = rho_ * std::sqrt(sum_sq(dq));

  double continuity = 0.0;
  if (td_) {
    for (double v : continuity_residual(m_, w_).values) continuity = std::max(continuity, std::abs(v));
  } else {
    continuity = max_abs(divergence(w_).values);
    continuity = std::max(continuity, std::abs(grid_.cell_volume() * pairwise_sum(m_.values) - 1.0));
  }

  Reported rep = reported_from(m_, w_, phi_, lambda_);

  TraceRow row;
  row.iteration = iteration_;
  row.gap = rep.gap;
  row.multiplier_residual = mult_res;
  row.continuity = continuity;
  // Residuals of the reported pair itself: constraints, flux optimality and
  // complementarity. The raw continuity and multiplier residuals of the
  // splitting are traced but do not gate stopping.
  row.residual = std::max(rep.infeasibility, rep.optimality);
  row.penalty = rho_;
  row.A = rep.A;
  row.B = rep.B.as_double();
  trace_.push_back(row);

  if (opts_.adaptive_penalty && iteration_ % kPenaltyWindow == 0) {
    if (primal_l2 > kPenaltyImbalance * dual_l2)
      rho_ *= 2.0;
    else if (dual_l2 > kPenaltyImbalance * primal_l2)
      rho_ *= 0.5;
  }
  return rep;
}

PrimalState AlmEngine::project_td(const ScalarField& m, const FluxField& w, const ScalarField& phi) {
  const std::size_t nt = nslices_;
  const double vol = grid_.cell_volume();
  const double ht = grid_.ht();
  const double inv_ht = 1.0 / ht;
  const int d = grid_.dim;
  PrimalState out{m, w};
  std::copy(model_.m0().begin(), model_.m0().end(), out.m.slice(0).begin());
  for (std::size_t k = 1; k <= nt; ++k) {
    auto s = out.m.slice(k);
    const double mass = vol * pairwise_sum(s);
    if (mass > 0.0)
      for (double& v : s) v /= mass;
  }
  std::vector<double> r(cells_), psi(cells_), div(cells_), grad(cells_ * d);
  std::array<double, 2> xi{}, dh{};
  for (std::size_t k = 0; k < nt; ++k) {
    auto m0 = out.m.slice(k);
    auto m1 = out.m.slice(k + 1);
    auto ws = out.w.slice(k);
    // Flux correction w += theta grad psi with Lap psi = -(Dt m + div w). The
    // mobility theta fades the correction out on nearly empty cells, where
    // any flux without matching mass makes B blow up.
    divergence(grid_, ws, div);
    for (std::size_t c = 0; c < cells_; ++c) r[c] = (m1[c] - m0[c]) * inv_ht + div[c];
    const double mean = pairwise_sum(r) / static_cast<double>(cells_);
    for (double& v : r) v -= mean;
    poisson_.solve_space(r, psi);
    gradient(grid_, psi, grad);
    for (std::size_t i = 0; i < ws.size(); ++i) ws[i] += std::min(1.0, m1[i % cells_] / kMobilityScale) * grad[i];

    // Speed cap for the limiter: the optimal flux moves mass at |D_xi H(grad phi)|.
    gradient(grid_, phi.slice(k), grad);
    double vmax = 0.0;
    for (std::size_t c = 0; c < cells_; ++c) {
      for (int a = 0; a < d; ++a) xi[a] = grad[a * cells_ + c];
      d_xi_hamiltonian(model_.at(c), std::span<const double>(xi.data(), d), std::span<double>(dh.data(), d));
      for (int a = 0; a < d; ++a) vmax = std::max(vmax, std::abs(dh[a]));
    }
    // What the correction leaves behind is absorbed by integrating the
    // density forward, m^(k+1) = m^k - ht div w^k, which conserves mass and
    // makes the continuity constraint hold to rounding.
    limit_outflow(m0, ws, 1.01 * grid_.hx() / ht + 2.0 * vmax);
    divergence(grid_, ws, div);
    for (std::size_t c = 0; c < cells_; ++c) m1[c] = std::max(m0[c] - ht * div[c], 0.0);
  }
  return out;
}

void AlmEngine::limit_outflow(std::span<const double> m0, std::span<double> ws, double speed) const {
  // Scales the outgoing fluxes of every cell whose updated mass would fall
  // below |owned flux| / speed. Fluxes only shrink, so the sweeps settle;
  // speed > hx/ht guarantees a cell with no outflow always qualifies.
  const int d = grid_.dim;
  const double lam = grid_.ht() / grid_.hx();
  std::vector<double> in(cells_), out(cells_), own_in(cells_), own_out(cells_), theta(cells_);
  for (int sweep = 0; sweep < 200; ++sweep) {
    std::fill(in.begin(), in.end(), 0.0);
    std::fill(out.begin(), out.end(), 0.0);
    std::fill(own_in.begin(), own_in.end(), 0.0);
    std::fill(own_out.begin(), own_out.end(), 0.0);
    for (int a = 0; a < d; ++a)
      for (std::size_t c = 0; c < cells_; ++c) {
        const double f = ws[a * cells_ + c];
        const std::size_t n = grid_.neighbour(c, a, 1);
        if (f > 0.0) {
          out[c] += f;
          own_out[c] += f;
          in[n] += f;
        } else {
          out[n] -= f;
          in[c] -= f;
          own_in[c] -= f;
        }
      }
    bool changed = false;
    for (std::size_t c = 0; c < cells_; ++c) {
      theta[c] = 1.0;
      const double after = m0[c] + lam * (in[c] - out[c]);
      const double need = (own_in[c] + own_out[c]) / speed;
      if (out[c] > 0.0 && after < need * (1.0 + 1e-12)) {
        const double t = (m0[c] + lam * in[c] - own_in[c] / speed) / (lam * out[c] + own_out[c] / speed);
        theta[c] = std::clamp((1.0 - 1e-9) * t, 0.0, 1.0);
        changed = true;
      }
    }
    if (!changed) return;
    for (int a = 0; a < d; ++a)
      for (std::size_t c = 0; c < cells_; ++c) {
        double& f = ws[a * cells_ + c];
        f *= f > 0.0 ? theta[c] : theta[grid_.neighbour(c, a, 1)];
      }
  }
}

PrimalState AlmEngine::project_stat(const ScalarField& m, const FluxField& w) {
  PrimalState out{m, w};
  const double mass = grid_.cell_volume() * pairwise_sum(out.m.values);
  if (mass > 0.0)
    for (double& v : out.m.values) v /= mass;
  std::vector<double> div(cells_), psi(cells_), grad(cells_ * grid_.dim);
  divergence(grid_, out.w.values, div);
  const double mean = pairwise_sum(div) / static_cast<double>(cells_);
  for (double& v : div) v -= mean;
  poisson_.solve_space(div, psi);
  gradient(grid_, psi, grad);
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (out.m.values[i % cells_] > 0.0) out.w.values[i] += grad[i];
  return out;
}

Reported AlmEngine::reported_from(const ScalarField& m, const FluxField& w, const ScalarField& phi, double lambda) {
  Reported rep;
  rep.primal = td_ ? project_td(m, w, phi) : project_stat(m, w);
  rep.dual.phi = phi;
  rep.dual.lambda = td_ ? 0.0 : lambda;
  complete(rep);
  return rep;
}

void AlmEngine::complete(Reported& rep) const {
  if (td_) {
    rep.dual.alpha = hj_operator(model_, rep.dual.phi);
    rep.A = eval_A_td(model_, rep.dual);
    rep.B = eval_B_td(model_, rep.primal);
  } else {
    rep.dual.alpha = hj_operator_stat(model_, rep.dual.lambda, rep.dual.phi);
    rep.dual.alpha.staggering = Staggering::Midpoint;
    rep.A = eval_A_stat(model_, rep.dual.lambda, rep.dual.phi);
    rep.B = eval_B_stat(model_, rep.primal.m, rep.primal.w);
  }
  // B carries the indicator of the constraints: a pair the projection could
  // not make feasible counts as +infinity.
  double residual = 0.0;
  for (double v : continuity_residual(rep.primal.m, rep.primal.w).values) residual = std::max(residual, std::abs(v));
  const double vol = grid_.cell_volume();
  for (std::size_t k = 0; k < rep.primal.m.slices(); ++k)
    residual = std::max(residual, std::abs(vol * pairwise_sum(rep.primal.m.slice(k)) - 1.0));
  rep.infeasibility = residual;
  if (!(residual <= kFeasibilityTol)) rep.B = ExtendedReal::plus_infinity();
  const FeasibilityReport fr = feasibility_report(model_, rep.primal, rep.dual, kOptimalityEps);
  rep.optimality = std::max(fr.flux, fr.complementarity_mean);
  rep.gap = relative_gap(rep.A, rep.B);
}

// ---------------------------------------------------------------------------
// Checkpoints

void AlmEngine::write_checkpoint(const std::filesystem::path& dir, const Reported& rep) const {
  std::filesystem::create_directories(dir);
  write_field(dir / "m.mfgf", m_);
  write_field(dir / "qa.mfgf", qa_);
  for (int a = 0; a < grid_.dim; ++a) {
    const std::string ax = std::to_string(a);
    std::vector<double> buf;
    auto pack = [&](const FluxField& f) {
      buf.clear();
      for (std::size_t k = 0; k < f.slices(); ++k) {
        auto comp = f.component(k, a);
        buf.insert(buf.end(), comp.begin(), comp.end());
      }
      return std::span<const double>(buf);
    };
    write_field(dir / ("w" + ax + ".mfgf"), grid_, Staggering::Midpoint, pack(w_));
    write_field(dir / ("qb" + ax + ".mfgf"), grid_, Staggering::Midpoint, pack(qb_));
    write_field(dir / ("rep_w" + ax + ".mfgf"), grid_, Staggering::Midpoint, pack(rep.primal.w));
    if (best_) write_field(dir / ("best_w" + ax + ".mfgf"), grid_, Staggering::Midpoint, pack(best_->primal.w));
  }
  write_field(dir / "rep_phi.mfgf", rep.dual.phi);
  write_field(dir / "rep_m.mfgf", rep.primal.m);
  if (best_) {
    write_field(dir / "best_phi.mfgf", best_->dual.phi);
    write_field(dir / "best_m.mfgf", best_->primal.m);
  }

  std::ofstream os(dir / "manifest.txt", std::ios::trunc);
  if (!os) throw CheckpointError("checkpoint: cannot write " + (dir / "manifest.txt").string());
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(model_.hash()));
  os << "MFGCHECKPOINT 1\n";
  os << "setting " << (td_ ? "td" : "stat") << "\n";
  os << "model_hash " << hash << "\n";
  os << "grid " << grid_.dim << ' ' << grid_.n_space << ' ' << grid_.n_time << ' ' << hex(grid_.T) << "\n";
  os << "iteration " << iteration_ << "\n";
  os << "status " << status_ << "\n";
  os << "penalty " << hex(rho_) << "\n";
  os << "configured_penalty " << hex(configured_penalty_) << "\n";
  os << "penalty_changed " << (penalty_changed_ ? 1 : 0) << "\n";
  os << "seed " << opts_.seed << "\n";
  os << "lambda " << hex(lambda_) << "\n";
  os << "rep_lambda " << hex(rep.dual.lambda) << "\n";
  os << "best_iteration " << best_iteration_ << "\n";
  os << "best_merit " << hex(best_merit_) << "\n";
  os << "best_lambda " << hex(best_ ? best_->dual.lambda : 0.0) << "\n";
  os << "trace_rows " << trace_.size() << "\n";
  for (const auto& t : trace_)
    os << t.iteration << ' ' << hex(t.gap) << ' ' << hex(t.residual) << ' ' << hex(t.multiplier_residual) << ' '
       << hex(t.continuity) << ' ' << hex(t.penalty) << ' ' << hex(t.A) << ' ' << hex(t.B) << "\n";
  if (!os) throw CheckpointError("checkpoint: write failed in " + dir.string());
}

struct Manifest {
  std::string setting, status;
  std::uint64_t hash = 0;
  int dim = 0, n_space = 0, n_time = 0;
  double T = 0.0;
  int iteration = 0, best_iteration = 0;
  double penalty = 0.0, configured_penalty = 0.0, lambda = 0.0, rep_lambda = 0.0, best_merit = 0.0, best_lambda = 0.0;
  bool penalty_changed = false;
  std::uint64_t seed = 0;
  std::vector<TraceRow> trace;
};

Manifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.txt");
  if (!is) throw CheckpointError("checkpoint: cannot open " + (dir / "manifest.txt").string());
  Manifest mf;
  std::string line, key;
  std::getline(is, line);
  if (line != "MFGCHECKPOINT 1") throw CheckpointError("checkpoint: bad manifest header in " + dir.string());
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    ls >> key;
    std::string v;
    if (key == "setting") ls >> mf.setting;
    else if (key == "status") ls >> mf.status;
    else if (key == "model_hash") { ls >> v; mf.hash = std::stoull(v, nullptr, 16); }
    else if (key == "grid") { ls >> mf.dim >> mf.n_space >> mf.n_time >> v; mf.T = parse_hex(v); }
    else if (key == "iteration") ls >> mf.iteration;
    else if (key == "penalty") { ls >> v; mf.penalty = parse_hex(v); }
    else if (key == "configured_penalty") { ls >> v; mf.configured_penalty = parse_hex(v); }
    else if (key == "penalty_changed") { int b = 0; ls >> b; mf.penalty_changed = b != 0; }
    else if (key == "seed") ls >> mf.seed;
    else if (key == "lambda") { ls >> v; mf.lambda = parse_hex(v); }
    else if (key == "rep_lambda") { ls >> v; mf.rep_lambda = parse_hex(v); }
    else if (key == "best_iteration") ls >> mf.best_iteration;
    else if (key == "best_merit") { ls >> v; mf.best_merit = parse_hex(v); }
    else if (key == "best_lambda") { ls >> v; mf.best_lambda = parse_hex(v); }
    else if (key == "trace_rows") {
      ls >> rows;
      for (std::size_t i = 0; i < rows; ++i) {
        if (!std::getline(is, line)) throw CheckpointError("checkpoint: truncated trace in " + dir.string());
        std::istringstream ts(line);
        TraceRow t;
        std::string g, r, mr, c, p, a, b;
        ts >> t.iteration >> g >> r >> mr >> c >> p >> a >> b;
        if (!ts) throw CheckpointError("checkpoint: malformed trace row in " + dir.string());
        t.gap = parse_hex(g);
        t.residual = parse_hex(r);
        t.multiplier_residual = parse_hex(mr);
        t.continuity = parse_hex(c);
        t.penalty = parse_hex(p);
        t.A = parse_hex(a);
        t.B = parse_hex(b);
        mf.trace.push_back(t);
      }
    } else {
      throw CheckpointError("checkpoint: unknown manifest key '" + key + "'");
    }
    if (ls.fail()) throw CheckpointError("checkpoint: malformed manifest line '" + line + "'");
  }
  return mf;
}

ScalarField read_checked(const std::filesystem::path& path, const GridSpec& g, Staggering s) {
  ScalarField f = read_field(path, g.T);
  if (f.grid != g || f.staggering != s) throw GridMismatch("checkpoint: field " + path.string() + " does not match the grid");
  return f;
}

FluxField read_flux(const std::filesystem::path& dir, const std::string& stem, const GridSpec& g) {
  FluxField out(g, Staggering::Midpoint);
  for (int a = 0; a < g.dim; ++a) {
    ScalarField comp = read_checked(dir / (stem + std::to_string(a) + ".mfgf"), g, Staggering::Midpoint);
    for (std::size_t k = 0; k < out.slices(); ++k) {
      auto src = comp.slice(k);
      std::copy(src.begin(), src.end(), out.component(k, a).begin());
    }
  }
  return out;
}

void check_compatible(const Manifest& mf, const DiscreteModel& model) {
  const GridSpec& g = model.grid();
  if (mf.dim != g.dim || mf.n_space != g.n_space || mf.n_time != g.n_time || (!g.stationary() && mf.T != g.T))
    throw GridMismatch("checkpoint: grid does not match the configured grid");
  if (mf.setting != (g.stationary() ? "stat" : "td")) throw GridMismatch("checkpoint: setting mismatch");
  if (mf.hash != model.hash()) throw CheckpointError("checkpoint: model data do not match the checkpoint");
}

void AlmEngine::load(const std::filesystem::path& dir) {
  const Manifest mf = read_manifest(dir);
  check_compatible(mf, model_);
  m_ = read_checked(dir / "m.mfgf", grid_, Staggering::Node);
  qa_ = read_checked(dir / "qa.mfgf", grid_, Staggering::Midpoint);
  w_ = read_flux(dir, "w", grid_);
  qb_ = read_flux(dir, "qb", grid_);
  iteration_ = mf.iteration;
  status_ = mf.status;
  lambda_ = mf.lambda;
  trace_ = mf.trace;
  best_iteration_ = mf.best_iteration;
  best_merit_ = mf.best_merit;
  if (opts_.seed != mf.seed) opts_.seed = mf.seed;
  penalty_changed_ = mf.penalty_changed;
  if (opts_.penalty != mf.configured_penalty) {
    rho_ = opts_.penalty;
    configured_penalty_ = opts_.penalty;
    penalty_changed_ = true;
  } else {
    rho_ = mf.penalty;
    configured_penalty_ = mf.configured_penalty;
  }
  if (best_iteration_ > 0) {
    Reported b;
    b.primal.m = read_checked(dir / "best_m.mfgf", grid_, Staggering::Node);
    b.primal.w = read_flux(dir, "best_w", grid_);
    b.dual.phi = read_checked(dir / "best_phi.mfgf", grid_, Staggering::Node);
    b.dual.lambda = mf.best_lambda;
    complete(b);
    best_ = b;
  }
  Reported r;
  r.primal.m = read_checked(dir / "rep_m.mfgf", grid_, Staggering::Node);
  r.primal.w = read_flux(dir, "rep_w", grid_);
  r.dual.phi = read_checked(dir / "rep_phi.mfgf", grid_, Staggering::Node);
  r.dual.lambda = mf.rep_lambda;
  complete(r);
  loaded_rep_ = r;
  // phi is recomputed from (sigma, q) in the next step; keep the reported one.
  phi_ = r.dual.phi;
}

}  // namespace

SolveResult solve_time_dependent(const DiscreteModel& model, const SolveOptions& opts) {
  if (model.grid().stationary()) throw GridMismatch("solve_time_dependent: grid has no time axis");
  AlmEngine engine(model, opts);
  engine.initialize();
  return engine.run();
}

SolveResult solve_stationary(const DiscreteModel& model, const SolveOptions& opts) {
  if (!model.grid().stationary()) throw GridMismatch("solve_stationary: grid must have n_time = 0");
  AlmEngine engine(model, opts);
  engine.initialize();
  return engine.run();
}

SolveResult resume(const std::filesystem::path& checkpoint, const DiscreteModel& model, const SolveOptions& opts) {
  AlmEngine engine(model, opts);
  engine.load(checkpoint);
  return engine.run();
}

SolveResult load_checkpoint_result(const std::filesystem::path& checkpoint, const DiscreteModel& model) {
  SolveOptions opts;
  const Manifest mf = read_manifest(checkpoint);
  opts.penalty = mf.configured_penalty > 0.0 ? mf.configured_penalty : 1.0;
  AlmEngine engine(model, opts);
  engine.load(checkpoint);
  SolveResult res;
  Reported rep = engine.loaded_result();
  res.primal = rep.primal;
  res.dual = rep.dual;
  SolveReport& r = res.report;
  r.status = engine.status() == "converged" ? SolveStatus::Converged : SolveStatus::NonConvergence;
  r.iterations = engine.iteration();
  r.returned_iteration = engine.loaded_returned_iteration();
  r.A = rep.A;
  r.B = rep.B;
  r.gap = rep.gap;
  r.trace = engine.trace();
  const auto it = std::find_if(r.trace.begin(), r.trace.end(),
                               [&](const TraceRow& t) { return t.iteration == r.returned_iteration; });
  r.residual = it != r.trace.end() ? it->residual : 0.0;
  r.feasibility = feasibility_report(model, rep.primal, rep.dual);
  r.final_penalty = engine.penalty();
  r.penalty_changed_on_resume = engine.penalty_changed();
  r.seed = engine.seed();
  return res;
}

}  // namespace mfg
