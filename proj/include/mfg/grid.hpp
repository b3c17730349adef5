#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfg {

/// Periodic lattice on the unit torus, optionally extended by a uniform time
/// partition of [0, T]. n_time == 0 marks a stationary (space-only) grid.
struct GridSpec {
  int dim = 1;
  int n_space = 0;
  int n_time = 0;
  double T = 1.0;

  /// Validating factory: dim in {1,2}, n_space a power of two >= 4,
  /// n_time >= 0, T > 0.
  static GridSpec make(int dim, int n_space, int n_time = 0, double T = 1.0);

  double hx() const { return 1.0 / n_space; }
  double ht() const { return n_time > 0 ? T / n_time : 0.0; }
  std::size_t cells() const;
  double cell_volume() const;
  bool stationary() const { return n_time == 0; }

  /// Periodic neighbour of `cell` shifted by `offset` lattice steps along `axis`.
  std::size_t neighbour(std::size_t cell, int axis, int offset) const;
  /// Cell centre coordinate along `axis`.
  double centre(std::size_t cell, int axis) const;

  bool operator==(const GridSpec& other) const;
  bool operator!=(const GridSpec& other) const { return !(*this == other); }
};

enum class Staggering { Node, Midpoint };

std::string to_string(Staggering s);
Staggering staggering_from_string(const std::string& s);

/// Number of time slices a field with the given staggering carries.
/// Stationary grids always carry a single slice.
std::size_t slice_count(const GridSpec& grid, Staggering s);

class GridMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Cell-centred scalar values, slice-major (time outermost).
struct ScalarField {
  GridSpec grid;
  Staggering staggering = Staggering::Node;
  std::vector<double> values;

  ScalarField() = default;
  ScalarField(const GridSpec& g, Staggering s, double fill = 0.0);

  std::size_t slices() const { return slice_count(grid, staggering); }
  std::span<double> slice(std::size_t k);
  std::span<const double> slice(std::size_t k) const;
};

/// Marker-and-cell flux: component `axis` of cell c lives on the face
/// between c and c + e_axis. Layout is [slice][axis][cell].
struct FluxField {
  GridSpec grid;
  Staggering staggering = Staggering::Midpoint;
  std::vector<double> values;

  FluxField() = default;
  FluxField(const GridSpec& g, Staggering s, double fill = 0.0);

  std::size_t slices() const { return slice_count(grid, staggering); }
  std::span<double> slice(std::size_t k);
  std::span<const double> slice(std::size_t k) const;
  std::span<double> component(std::size_t k, int axis);
  std::span<const double> component(std::size_t k, int axis) const;
};

// Slice-level discrete calculus. Flux spans hold dim * cells values.

/// Forward differences onto faces.
void gradient(const GridSpec& grid, std::span<const double> phi, std::span<double> out);
/// Backward differences back to cells; the negative adjoint of gradient().
void divergence(const GridSpec& grid, std::span<const double> w, std::span<double> out);
/// Standard (2*dim+1)-point periodic Laplacian, divergence(gradient(phi)).
void laplacian(const GridSpec& grid, std::span<const double> phi, std::span<double> out);

FluxField gradient(const ScalarField& phi);
ScalarField divergence(const FluxField& w);

/// (m^{k+1} - m^k) / ht on midpoints. Requires node staggering.
ScalarField time_derivative(const ScalarField& m);

/// time_derivative(m) + divergence(w) for time-dependent grids,
/// divergence(w) alone for stationary ones.
ScalarField continuity_residual(const ScalarField& m, const FluxField& w);

/// out[x] = in[x + delta] with periodic wrap; delta in lattice steps.
void translate(const GridSpec& grid, std::span<const double> in, std::span<const int> delta,
               std::span<double> out);
ScalarField translate(const ScalarField& field, std::span<const int> delta);
FluxField translate(const FluxField& field, std::span<const int> delta);

/// Cell-volume (and, across slices, time-step) weighted inner products.
double inner(const GridSpec& grid, std::span<const double> a, std::span<const double> b);

/// Deterministic pairwise summation.
double pairwise_sum(std::span<const double> v);

struct PoissonWeights {
  double time = 1.0;
  double space = 1.0;
};

/// Spectral solver for the augmented-Lagrangian normal equations.
///
/// Time-dependent grids: solves (time * Dt^T Dt + space * (-Lap)) u = rhs for the
/// node slices 0..n_time-1; slice n_time is a homogeneous Dirichlet node and
/// slice 0 carries the natural (Neumann) condition. Space is diagonalised by a
/// real FFT, time by a tridiagonal solve per Fourier mode.
///
/// Stationary grids: solves space * (-Lap) u = rhs for mean-free rhs and returns
/// the mean-free solution.
///
/// Instances own FFT work buffers; one instance must not be used from two
/// threads at once.
class PoissonSolver {
 public:
  explicit PoissonSolver(const GridSpec& grid, PoissonWeights weights = {});
  ~PoissonSolver();
  PoissonSolver(const PoissonSolver&) = delete;
  PoissonSolver& operator=(const PoissonSolver&) = delete;
  PoissonSolver(PoissonSolver&&) noexcept;
  PoissonSolver& operator=(PoissonSolver&&) noexcept;

  const GridSpec& grid() const;

  /// rhs/out span all unknown slices: n_time * cells (time-dependent) or cells.
  void solve(std::span<const double> rhs, std::span<double> out);
  /// Applies the operator being inverted, for residual checks.
  void apply(std::span<const double> u, std::span<double> out) const;

  /// Field form; node staggering, top slice treated as the Dirichlet node.
  ScalarField solve(const ScalarField& rhs);

  /// Space-only solve on a single slice of a time-dependent grid:
  /// (-Lap) u = rhs with mean-free rhs.
  void solve_space(std::span<const double> rhs, std::span<double> out);

  /// Batched space-only solves over the n_time midpoint slices (or the single
  /// stationary slice); each slice's rhs must be mean-free.
  void solve_space_slices(std::span<const double> rhs, std::span<double> out);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ScalarField poisson_solve(const ScalarField& rhs, PoissonWeights weights = {});

// Field checkpoint format: one text header line
//   MFGF1 <dim> <n_space> <n_time> <staggering>
// followed by little-endian IEEE-754 doubles, slice-major.

void write_field(const std::filesystem::path& path, const GridSpec& grid, Staggering s,
                 std::span<const double> values);
void write_field(const std::filesystem::path& path, const ScalarField& field);
/// Reads a field written by write_field. T is not stored in the header and is
/// taken from the caller.
ScalarField read_field(const std::filesystem::path& path, double T = 1.0);

}  // namespace mfg
