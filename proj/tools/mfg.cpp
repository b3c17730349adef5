// Command-line front end: solves, diagnostics, refinement studies and the
// convex-kernel property suite, driven by a key = value configuration file.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

#include "mfg/config.hpp"
#include "mfg/diagnostics.hpp"
#include "mfg/solver.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNonConvergence = 2;
constexpr int kExitGrowthFlag = 3;

struct Flags {
  std::string config;
  std::string out;
  std::string resume;
  int threads = 0;
  std::uint64_t seed = 0;
};

void print_summary(const mfg::SolveReport& r, const fs::path& out) {
  std::printf("status %s after %d iterations (returned iterate %d)\n", mfg::to_string(r.status).c_str(), r.iterations,
              r.returned_iteration);
  std::printf("gap %.3e residual %.3e penalty %.3g wall %.2fs\n", r.gap, r.residual, r.final_penalty, r.wall_seconds);
  const mfg::FeasibilityReport& f = r.feasibility;
  std::printf("constraints %.3e complementarity mean %.3e flux %.3e hj %.3e\n", f.worst_constraint(),
              f.complementarity_mean, f.flux, f.hj);
  if (r.penalty_changed_on_resume) std::printf("note: penalty differs from the checkpoint\n");
  std::printf("wrote %s\n", out.string().c_str());
}

int run_solve(const mfg::RunConfig& cfg, const Flags& fl, bool stationary) {
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  const mfg::DiscreteModel model(cfg.model_spec(), cfg.grid(stationary));
  mfg::SolveOptions opts = cfg.solver;
  opts.checkpoint_dir = out / "checkpoint";

  mfg::SolveResult res;
  if (!fl.resume.empty()) {
    res = mfg::resume(fl.resume, model, opts);
  } else {
    res = stationary ? mfg::solve_stationary(model, opts) : mfg::solve_time_dependent(model, opts);
  }
  const mfg::DiagnosticsReport rep = mfg::diagnose(model, res, cfg.diagnostics);
  mfg::write_report_csv(out / "report.csv", {rep});
  mfg::write_trace_csv(out / "trace.csv", res.report.trace);
  print_summary(res.report, out);
  return res.report.status == mfg::SolveStatus::Converged ? kExitOk : kExitNonConvergence;
}

int run_diagnose(const mfg::RunConfig& cfg, const Flags& fl) {
  const fs::path ckpt = fl.resume.empty() ? fs::path(cfg.output_dir) / "checkpoint" : fs::path(fl.resume);
  if (!fs::exists(ckpt / "manifest.txt")) throw mfg::CheckpointError("no checkpoint found at " + ckpt.string());
  const mfg::GridSpec grid = mfg::read_field(ckpt / "m.mfgf", cfg.T).grid;
  const mfg::DiscreteModel model(cfg.model_spec(), grid);
  const mfg::SolveResult res = mfg::load_checkpoint_result(ckpt, model);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  mfg::write_report_csv(out / "report.csv", {mfg::diagnose(model, res, cfg.diagnostics)});
  mfg::write_trace_csv(out / "trace.csv", res.report.trace);
  std::printf("diagnosed %s (%s)\n", ckpt.string().c_str(), mfg::to_string(res.report.status).c_str());
  return res.report.status == mfg::SolveStatus::Converged ? kExitOk : kExitNonConvergence;
}

int run_refine(const mfg::RunConfig& cfg, bool stationary) {
  if (cfg.ladder.size() < 3) throw mfg::ConfigError({"refine: grid.ladder needs at least three entries"});
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  const auto ladder = cfg.ladder_grids(stationary);
  const mfg::RefinementResult study = mfg::refinement_study(cfg.model_spec(), ladder, cfg.solver, cfg.diagnostics);

  std::vector<mfg::DiagnosticsReport> rows;
  for (const auto& r : study.rows) rows.push_back(r.report);
  mfg::write_report_csv(out / "report.csv", rows);
  for (std::size_t i = 0; i < study.rows.size(); ++i) {
    const auto& row = study.rows[i];
    std::printf("n_space %d n_time %d: %s gap %.3e\n", row.report.grid.n_space, row.report.grid.n_time,
                mfg::to_string(row.status).c_str(), row.report.gap);
  }
  for (const auto& f : study.flags) std::printf("flag: %s\n", f.c_str());
  if (study.nonconvergence) return kExitNonConvergence;
  return study.flags.empty() ? kExitOk : kExitGrowthFlag;
}

int run_kernel_check(const mfg::RunConfig& cfg, bool stationary) {
  const mfg::DiscreteModel model(cfg.model_spec(), cfg.grid(stationary));
  const auto checks = mfg::run_kernel_checks(model, static_cast<std::size_t>(cfg.kernel_samples), cfg.solver.seed);
  bool ok = true;
  for (const auto& c : checks) {
    std::printf("%s %s %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    ok = ok && c.passed;
  }
  return ok ? kExitOk : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational mean field game solver and diagnostics"};
  app.require_subcommand(1);
  Flags fl;
  std::string kind = "td";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", fl.config, "configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", fl.out, "output directory (overrides output.dir)");
    sub->add_option("--threads", fl.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", fl.seed, "seed for the iterate perturbation");
  };

  auto* solve_td = app.add_subcommand("solve-td", "time-dependent solve");
  auto* solve_stat = app.add_subcommand("solve-stat", "stationary solve");
  auto* diagnose = app.add_subcommand("diagnose", "recompute report.csv from a checkpoint");
  auto* refine = app.add_subcommand("refine", "refinement study over grid.ladder");
  auto* kernel = app.add_subcommand("kernel-check", "convex-kernel property suite");
  for (auto* sub : {solve_td, solve_stat, diagnose, refine, kernel}) add_common(sub);
  for (auto* sub : {solve_td, solve_stat, diagnose})
    sub->add_option("--resume", fl.resume, "checkpoint directory")->check(CLI::ExistingDirectory);
  for (auto* sub : {refine, kernel})
    sub->add_option("--setting", kind, "td or stat")->check(CLI::IsMember({"td", "stat"}));

  CLI11_PARSE(app, argc, argv);

  try {
    mfg::RunConfig cfg = mfg::load_config(fl.config);
    CLI::App* chosen = app.get_subcommands().front();
    cfg.subcommand = *mfg::subcommand_from_string(chosen->get_name());
    if (!fl.out.empty()) cfg.output_dir = fl.out;
    if (fl.threads > 0) cfg.solver.threads = fl.threads;
    if (chosen->count("--seed")) cfg.solver.seed = fl.seed;

    switch (cfg.subcommand) {
      case mfg::Subcommand::SolveTd: return run_solve(cfg, fl, false);
      case mfg::Subcommand::SolveStat: return run_solve(cfg, fl, true);
      case mfg::Subcommand::Diagnose: return run_diagnose(cfg, fl);
      case mfg::Subcommand::Refine: return run_refine(cfg, kind == "stat");
      case mfg::Subcommand::KernelCheck: return run_kernel_check(cfg, kind == "stat");
    }
  } catch (const mfg::ConfigError& e) {
    for (const auto& msg : e.errors()) std::fprintf(stderr, "config error: %s\n", msg.c_str());
    return kExitError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
