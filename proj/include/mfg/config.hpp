#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/diagnostics.hpp"

namespace mfg {

/// Every problem found while parsing, one message per entry.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

/// Parsed coefficient expression over (x, y).
///
/// Grammar (whitespace ignored):
///   expr   := term (('+' | '-') term)*
///   term   := factor ('*' factor)*
///   factor := ('+' | '-') factor | number | 'pi' | '(' expr ')' | ('cos' | 'sin') '(' phase ')'
///   phase  := linear combination of constants, x and y, where the coefficients
///             of x and y are integer multiples of 2*pi
/// x and y may appear only inside a phase, so every expression is periodic.
class Expression {
 public:
  /// Throws ConfigError on malformed input; `dim` = 1 forbids y.
  static Expression parse(const std::string& text, int dim);
  double operator()(double x, double y) const;
  const std::string& text() const { return text_; }

  struct Node;

 private:
  std::string text_;
  std::shared_ptr<const Node> root_;
};

enum class Subcommand { SolveTd, SolveStat, Diagnose, Refine, KernelCheck };

std::string to_string(Subcommand s);
std::optional<Subcommand> subcommand_from_string(const std::string& s);

struct RunConfig {
  Subcommand subcommand = Subcommand::SolveTd;

  // [model]
  double r = 2.0;
  double q = 2.0;
  double T = 1.0;
  int dim = 1;
  std::string c1 = "1";
  std::string c2 = "1";
  std::string m0 = "1";
  std::string phiT = "0";

  // [grid]
  int n_space = 32;
  int n_time = 32;
  /// Refinement ladder of n_space values; time steps scale by n_time / n_space.
  std::vector<int> ladder;
  /// Keep n_time on every ladder grid instead of scaling it.
  bool ladder_fixed_time = false;

  SolveOptions solver;
  DiagnosticsOptions diagnostics;
  /// Number of property samples for kernel-check.
  int kernel_samples = 2000;

  std::string output_dir = "out";

  ModelSpec model_spec() const;
  /// Time-dependent or stationary grid according to the subcommand.
  GridSpec grid(bool stationary) const;
  std::vector<GridSpec> ladder_grids(bool stationary) const;
};

/// Parses `key = value` lines with `#` comments and `[block]` headers
/// (model, grid, solver, diagnostics, output). Unknown keys, malformed
/// values and model-class violations are all collected before throwing.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace mfg
