#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mfg/solver.hpp"

namespace mfg {

/// A reported number, or an explicit not-applicable reason.
struct Entry {
  bool available = false;
  double value = 0.0;
  std::string reason;

  static Entry of(double v) { return {true, v, {}}; }
  static Entry na(std::string why) { return {false, 0.0, std::move(why)}; }
  /// `%.17g` for values, `NA:<reason>` otherwise.
  std::string csv() const;
};

struct ProbePoint {
  int shift = 0;         // lattice steps along the first axis
  double length = 0.0;   // |h| = shift * hx
  double difference = 0.0;
};

struct ProbeResult {
  Entry slope;
  std::vector<ProbePoint> table;
  /// |B^delta(m^delta, w^delta) - B(m, w)| maximised over the shifts.
  double rearrangement_error = 0.0;
};

struct DiagnosticsOptions {
  std::vector<int> shifts{1, 2, 4, 8};
  double growth_factor = 1.10;
  double zero_floor = 1e-6;
  /// Integrability exponent s of 1/m for the congestion norm.
  double congestion_s = 2.0;
};

struct DiagnosticsReport {
  GridSpec grid;
  double gap = 0.0;
  double res_cont = 0.0;
  FeasibilityReport feasibility;
  Entry sob_space;
  Entry sob_space_direct;
  Entry sob_second;
  Entry sob_time;
  Entry h1_Jm;
  Entry h1_Jstar;
  ProbeResult translation;
  Entry phi_plus_eta;
  Entry phi_plus_gamma;
  Entry congestion;
  bool converged = true;
};

/// (2/q) |grad m^(q/2)|_2 over the density nodes paired with each interval.
Entry sobolev_space(const DiscreteModel& model, const ScalarField& m);
/// Face-averaged m^(q/2-1) times grad m, the unsubstituted form.
Entry sobolev_space_direct(const DiscreteModel& model, const ScalarField& m);
/// |m^(1/2) D(j1(grad phi))|_2 by forward differences of the face field j1(grad phi).
Entry sobolev_second(const DiscreteModel& model, const ScalarField& m, const ScalarField& phi);
/// Quadratic Hamiltonian only: |m^(1/2) D^2 phi|_2 with the Hessian differenced directly.
Entry sobolev_second_hessian(const DiscreteModel& model, const ScalarField& m, const ScalarField& phi);
/// |d/dt m^(q/2)|_1; not applicable unless r = 2.
Entry sobolev_time(const DiscreteModel& model, const ScalarField& m);

struct StationaryH1 {
  Entry Jm;
  Entry Jstar;
};
StationaryH1 stationary_H1(const DiscreteModel& model, double lambda, const ScalarField& phi, const ScalarField& m);

struct PhiPlus {
  Entry eta_norm;
  Entry gamma_norm;
  /// Exponents; infinite when the bounds are in max norm.
  double eta = 0.0;
  double gamma = 0.0;
};
PhiPlus phi_plus_bounds(const DiscreteModel& model, const ScalarField& phi);

/// |D j1(grad phi)|_(2s/(s+1)) when min m > 1e-12.
Entry congestion_norm(const DiscreteModel& model, const ScalarField& m, const ScalarField& phi, double s);

/// Stationary: A(lambda, phi(. - h)) - A(lambda, phi). Time-dependent: the centred
/// second difference B^delta + B^-delta - 2B of data-translated energies at the
/// fixed state. Slope of the log-log least-squares fit against |h|.
ProbeResult translation_probe(const DiscreteModel& model, const PrimalState& primal, const DualState& dual,
                              const std::vector<int>& shifts);

DiagnosticsReport diagnose(const DiscreteModel& model, const SolveResult& result, const DiagnosticsOptions& opts = {});

// Refinement studies.

struct RefinementRow {
  DiagnosticsReport report;
  SolveStatus status = SolveStatus::Converged;
};

struct RefinementResult {
  std::vector<RefinementRow> rows;
  std::vector<std::string> flags;  // one message per flagged growth
  bool nonconvergence = false;
};

/// Growth above `factor` between consecutive entries; values below `zero_floor` count as zero.
bool growth_flagged(const Entry& coarse, const Entry& fine, double factor, double zero_floor);

/// Solves on each grid of the ladder (at least three) and tabulates the reports.
RefinementResult refinement_study(const ModelSpec& spec, const std::vector<GridSpec>& ladder, const SolveOptions& opts,
                                  const DiagnosticsOptions& dopts = {});

std::string csv_header();
std::string csv_row(const DiagnosticsReport& rep);
void write_report_csv(const std::filesystem::path& path, const std::vector<DiagnosticsReport>& rows);
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace);

}  // namespace mfg
