#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mfg/energies.hpp"

namespace mfg {

struct SolveOptions {
  double penalty = 1.0;
  int max_iters = 10000;
  double gap_tol = 1e-4;
  double residual_tol = 1e-6;
  std::uint64_t seed = 0;
  bool adaptive_penalty = true;
  /// Over-relaxation factor of the multiplier step, in (0, 2).
  double relaxation = 1.8;
  /// Write a checkpoint every k iterations into checkpoint_dir (0 disables).
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  int threads = 1;

  void validate() const;
};

enum class SolveStatus { Converged, NonConvergence };

std::string to_string(SolveStatus s);

struct TraceRow {
  int iteration = 0;
  double gap = 0.0;
  double residual = 0.0;
  double multiplier_residual = 0.0;  // |Lambda phi - q| max norm
  double continuity = 0.0;           // raw constraint residual before projection
  double penalty = 0.0;
  double A = 0.0;
  double B = 0.0;
};

struct SolveReport {
  SolveStatus status = SolveStatus::NonConvergence;
  int iterations = 0;
  /// Iteration whose states are returned (the last one, or the best by merit).
  int returned_iteration = 0;
  double gap = 0.0;
  double residual = 0.0;
  double A = 0.0;
  ExtendedReal B;
  FeasibilityReport feasibility;
  std::vector<TraceRow> trace;
  double wall_seconds = 0.0;
  double final_penalty = 0.0;
  bool penalty_changed_on_resume = false;
  std::uint64_t seed = 0;
};

struct SolveResult {
  PrimalState primal;
  DualState dual;
  SolveReport report;
};

/// Augmented-Lagrangian solve of the time-dependent dual pair. The returned
/// primal is exactly feasible; the returned alpha is the tight HJ operator of phi.
SolveResult solve_time_dependent(const DiscreteModel& model, const SolveOptions& opts);

/// Stationary counterpart; the ergodic constant is returned in dual.lambda.
SolveResult solve_stationary(const DiscreteModel& model, const SolveOptions& opts);

/// Continues from a checkpoint directory. The grid and model must match the
/// checkpoint; a different configured penalty is accepted and flagged.
SolveResult resume(const std::filesystem::path& checkpoint, const DiscreteModel& model, const SolveOptions& opts);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rebuilds the reported states stored in a checkpoint (best iterate when the
/// run did not converge, last iterate otherwise).
SolveResult load_checkpoint_result(const std::filesystem::path& checkpoint, const DiscreteModel& model);

}  // namespace mfg
