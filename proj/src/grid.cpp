#include "mfg/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mfg {

GridSpec GridSpec::make(int dim, int n_space, int n_time, double T) {
  if (dim != 1 && dim != 2) throw std::invalid_argument("grid: dim must be 1 or 2");
  if (n_space < 4 || !std::has_single_bit(static_cast<unsigned>(n_space)))
    throw std::invalid_argument("grid: n_space must be a power of two >= 4");
  if (n_time < 0) throw std::invalid_argument("grid: n_time must be >= 0");
  if (!(T > 0.0)) throw std::invalid_argument("grid: T must be > 0");
  return GridSpec{dim, n_space, n_time, T};
}

std::size_t GridSpec::cells() const {
  std::size_t n = static_cast<std::size_t>(n_space);
  return dim == 1 ? n : n * n;
}

double GridSpec::cell_volume() const { return dim == 1 ? hx() : hx() * hx(); }

std::size_t GridSpec::neighbour(std::size_t cell, int axis, int offset) const {
  const auto n = static_cast<long>(n_space);
  long ix = static_cast<long>(cell) % n;
  long iy = static_cast<long>(cell) / n;
  long& i = axis == 0 ? ix : iy;
  i = ((i + offset) % n + n) % n;
  return static_cast<std::size_t>(ix + n * iy);
}

double GridSpec::centre(std::size_t cell, int axis) const {
  const auto n = static_cast<std::size_t>(n_space);
  std::size_t i = axis == 0 ? cell % n : cell / n;
  return (static_cast<double>(i) + 0.5) * hx();
}

bool GridSpec::operator==(const GridSpec& o) const {
  return dim == o.dim && n_space == o.n_space && n_time == o.n_time && T == o.T;
}

std::string to_string(Staggering s) { return s == Staggering::Node ? "node" : "mid"; }

Staggering staggering_from_string(const std::string& s) {
  if (s == "node") return Staggering::Node;
  if (s == "mid") return Staggering::Midpoint;
  throw std::invalid_argument("unknown staggering tag '" + s + "'");
}

std::size_t slice_count(const GridSpec& grid, Staggering s) {
  if (grid.stationary()) return 1;
  auto nt = static_cast<std::size_t>(grid.n_time);
  return s == Staggering::Node ? nt + 1 : nt;
}

ScalarField::ScalarField(const GridSpec& g, Staggering s, double fill)
    : grid(g), staggering(s), values(slice_count(g, s) * g.cells(), fill) {}

std::span<double> ScalarField::slice(std::size_t k) {
  const auto n = grid.cells();
  return std::span<double>(values).subspan(k * n, n);
}

std::span<const double> ScalarField::slice(std::size_t k) const {
  const auto n = grid.cells();
  return std::span<const double>(values).subspan(k * n, n);
}

FluxField::FluxField(const GridSpec& g, Staggering s, double fill)
    : grid(g), staggering(s), values(slice_count(g, s) * g.cells() * g.dim, fill) {}

std::span<double> FluxField::slice(std::size_t k) {
  const auto n = grid.cells() * grid.dim;
  return std::span<double>(values).subspan(k * n, n);
}

std::span<const double> FluxField::slice(std::size_t k) const {
  const auto n = grid.cells() * grid.dim;
  return std::span<const double>(values).subspan(k * n, n);
}

std::span<double> FluxField::component(std::size_t k, int axis) {
  return slice(k).subspan(static_cast<std::size_t>(axis) * grid.cells(), grid.cells());
}

std::span<const double> FluxField::component(std::size_t k, int axis) const {
  return slice(k).subspan(static_cast<std::size_t>(axis) * grid.cells(), grid.cells());
}

void gradient(const GridSpec& grid, std::span<const double> phi, std::span<double> out) {
  const std::size_t n = grid.cells();
  const auto ns = static_cast<std::size_t>(grid.n_space);
  const double inv_h = static_cast<double>(grid.n_space);
  // axis 0: contiguous rows
  for (std::size_t row = 0; row < n; row += ns) {
    for (std::size_t i = 0; i + 1 < ns; ++i) out[row + i] = (phi[row + i + 1] - phi[row + i]) * inv_h;
    out[row + ns - 1] = (phi[row] - phi[row + ns - 1]) * inv_h;
  }
  if (grid.dim == 2) {
    auto out1 = out.subspan(n, n);
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t up = c + ns < n ? c + ns : c + ns - n;
      out1[c] = (phi[up] - phi[c]) * inv_h;
    }
  }
}

void divergence(const GridSpec& grid, std::span<const double> w, std::span<double> out) {
  const std::size_t n = grid.cells();
  const auto ns = static_cast<std::size_t>(grid.n_space);
  const double inv_h = static_cast<double>(grid.n_space);
  for (std::size_t row = 0; row < n; row += ns) {
    out[row] = (w[row] - w[row + ns - 1]) * inv_h;
    for (std::size_t i = 1; i < ns; ++i) out[row + i] = (w[row + i] - w[row + i - 1]) * inv_h;
  }
  if (grid.dim == 2) {
    auto w1 = w.subspan(n, n);
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t down = c >= ns ? c - ns : c + n - ns;
      out[c] += (w1[c] - w1[down]) * inv_h;
    }
  }
}

void laplacian(const GridSpec& grid, std::span<const double> phi, std::span<double> out) {
  std::vector<double> g(grid.cells() * grid.dim);
  gradient(grid, phi, g);
  divergence(grid, g, out);
}

FluxField gradient(const ScalarField& phi) {
  FluxField out(phi.grid, phi.staggering);
  for (std::size_t k = 0; k < phi.slices(); ++k) gradient(phi.grid, phi.slice(k), out.slice(k));
  return out;
}

ScalarField divergence(const FluxField& w) {
  ScalarField out(w.grid, w.staggering);
  for (std::size_t k = 0; k < w.slices(); ++k) divergence(w.grid, w.slice(k), out.slice(k));
  return out;
}

ScalarField time_derivative(const ScalarField& m) {
  if (m.staggering != Staggering::Node) throw GridMismatch("time_derivative: m must be node-staggered");
  if (m.grid.stationary()) throw GridMismatch("time_derivative: stationary grid has no time axis");
  ScalarField out(m.grid, Staggering::Midpoint);
  const double inv_ht = 1.0 / m.grid.ht();
  for (std::size_t k = 0; k < out.slices(); ++k) {
    auto a = m.slice(k);
    auto b = m.slice(k + 1);
    auto o = out.slice(k);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] = (b[c] - a[c]) * inv_ht;
  }
  return out;
}

ScalarField continuity_residual(const ScalarField& m, const FluxField& w) {
  if (m.grid != w.grid) throw GridMismatch("continuity_residual: grids differ");
  if (m.grid.stationary()) return divergence(w);
  if (w.staggering != Staggering::Midpoint)
    throw GridMismatch("continuity_residual: w must be midpoint-staggered");
  ScalarField out = time_derivative(m);
  std::vector<double> div(m.grid.cells());
  for (std::size_t k = 0; k < out.slices(); ++k) {
    divergence(m.grid, w.slice(k), div);
    auto o = out.slice(k);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += div[c];
  }
  return out;
}

void translate(const GridSpec& grid, std::span<const double> in, std::span<const int> delta,
               std::span<double> out) {
  const auto n = static_cast<long>(grid.n_space);
  const long dx = delta.size() > 0 ? ((delta[0] % n) + n) % n : 0;
  const long dy = grid.dim == 2 && delta.size() > 1 ? ((delta[1] % n) + n) % n : 0;
  if (grid.dim == 1) {
    for (long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = in[static_cast<std::size_t>((i + dx) % n)];
    return;
  }
  for (long j = 0; j < n; ++j) {
    const long sj = (j + dy) % n;
    for (long i = 0; i < n; ++i)
      out[static_cast<std::size_t>(i + n * j)] = in[static_cast<std::size_t>((i + dx) % n + n * sj)];
  }
}

ScalarField translate(const ScalarField& field, std::span<const int> delta) {
  ScalarField out(field.grid, field.staggering);
  for (std::size_t k = 0; k < field.slices(); ++k) translate(field.grid, field.slice(k), delta, out.slice(k));
  return out;
}

FluxField translate(const FluxField& field, std::span<const int> delta) {
  FluxField out(field.grid, field.staggering);
  for (std::size_t k = 0; k < field.slices(); ++k)
    for (int a = 0; a < field.grid.dim; ++a)
      translate(field.grid, field.component(k, a), delta, out.component(k, a));
  return out;
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double inner(const GridSpec& grid, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw GridMismatch("inner: size mismatch");
  std::vector<double> prod(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) prod[i] = a[i] * b[i];
  double w = grid.cell_volume();
  if (!grid.stationary()) w *= grid.ht();
  return w * pairwise_sum(prod);
}

// ---------------------------------------------------------------------------
// PoissonSolver

namespace {

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const {
    if (p) fftw_destroy_plan(p);
  }
};
using Plan = std::unique_ptr<fftw_plan_s, FftwPlanDeleter>;

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

struct PoissonSolver::Impl {
  GridSpec grid;
  PoissonWeights weights;
  std::size_t cells = 0;
  std::size_t modes = 0;
  std::size_t nslices = 1;
  std::vector<double> symbol;  // eigenvalues of -Lap per mode
  // Thomas factorisation per mode: forward multipliers and inverse pivots.
  std::vector<double> thomas_c;
  std::vector<double> thomas_inv;

  std::unique_ptr<double, FftwFree> real_buf;
  std::unique_ptr<fftw_complex, FftwFree> spec_buf;
  Plan forward, backward, forward1, backward1;

  explicit Impl(const GridSpec& g, PoissonWeights w) : grid(g), weights(w) {
    cells = g.cells();
    const int n = g.n_space;
    modes = g.dim == 1 ? static_cast<std::size_t>(n / 2 + 1)
                       : static_cast<std::size_t>(n) * static_cast<std::size_t>(n / 2 + 1);
    nslices = g.stationary() ? 1 : static_cast<std::size_t>(g.n_time);

    real_buf.reset(static_cast<double*>(fftw_malloc(sizeof(double) * cells * nslices)));
    spec_buf.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * modes * nslices)));

    int dims[2] = {n, n};
    const int rank = g.dim;
    const int howmany = static_cast<int>(nslices);
    forward.reset(fftw_plan_many_dft_r2c(rank, dims, howmany, real_buf.get(), nullptr, 1,
                                         static_cast<int>(cells), spec_buf.get(), nullptr, 1,
                                         static_cast<int>(modes), FFTW_ESTIMATE));
    backward.reset(fftw_plan_many_dft_c2r(rank, dims, howmany, spec_buf.get(), nullptr, 1,
                                          static_cast<int>(modes), real_buf.get(), nullptr, 1,
                                          static_cast<int>(cells), FFTW_ESTIMATE));
    forward1.reset(fftw_plan_many_dft_r2c(rank, dims, 1, real_buf.get(), nullptr, 1,
                                          static_cast<int>(cells), spec_buf.get(), nullptr, 1,
                                          static_cast<int>(modes), FFTW_ESTIMATE));
    backward1.reset(fftw_plan_many_dft_c2r(rank, dims, 1, spec_buf.get(), nullptr, 1,
                                           static_cast<int>(modes), real_buf.get(), nullptr, 1,
                                           static_cast<int>(cells), FFTW_ESTIMATE));
    if (!forward || !backward || !forward1 || !backward1)
      throw std::runtime_error("PoissonSolver: FFTW plan creation failed");

    symbol.resize(modes);
    const double inv_h2 = static_cast<double>(n) * static_cast<double>(n);
    auto s1 = [&](std::size_t k) {
      double s = std::sin(std::numbers::pi * static_cast<double>(k) / n);
      return 4.0 * inv_h2 * s * s;
    };
    const std::size_t half = static_cast<std::size_t>(n / 2 + 1);
    for (std::size_t mode = 0; mode < modes; ++mode) {
      if (g.dim == 1) {
        symbol[mode] = s1(mode);
      } else {
        symbol[mode] = s1(mode / half) + s1(mode % half);
      }
    }

    if (!g.stationary()) {
      const double a = weights.time / (g.ht() * g.ht());
      const std::size_t nt = nslices;
      thomas_c.resize(modes * nt);
      thomas_inv.resize(modes * nt);
      for (std::size_t mode = 0; mode < modes; ++mode) {
        const double s = weights.space * symbol[mode];
        double* c = &thomas_c[mode * nt];
        double* inv = &thomas_inv[mode * nt];
        // diag: a*1 at k=0, a*2 for k>=1; off-diagonal -a.
        double prev_c = 0.0;
        for (std::size_t k = 0; k < nt; ++k) {
          const double diag = (k == 0 ? a : 2.0 * a) + s;
          const double lower = k == 0 ? 0.0 : -a;
          const double piv = diag - lower * prev_c;
          inv[k] = 1.0 / piv;
          c[k] = (k + 1 < nt) ? -a * inv[k] : 0.0;
          prev_c = c[k];
        }
      }
    }
  }
};

PoissonSolver::PoissonSolver(const GridSpec& grid, PoissonWeights weights)
    : impl_(std::make_unique<Impl>(grid, weights)) {}
PoissonSolver::~PoissonSolver() = default;
PoissonSolver::PoissonSolver(PoissonSolver&&) noexcept = default;
PoissonSolver& PoissonSolver::operator=(PoissonSolver&&) noexcept = default;

const GridSpec& PoissonSolver::grid() const { return impl_->grid; }

namespace {

void check_mean_free(std::span<const double> rhs) {
  double scale = 0.0;
  for (double v : rhs) scale = std::max(scale, std::abs(v));
  const double mean = pairwise_sum(rhs) / static_cast<double>(rhs.size());
  if (std::abs(mean) > 1e-10 * (scale + 1e-300) && std::abs(mean) > 1e-300)
    throw std::invalid_argument("poisson_solve: right-hand side must have zero mean on a periodic grid");
}

}  // namespace

void PoissonSolver::solve_space(std::span<const double> rhs, std::span<double> out) {
  Impl& s = *impl_;
  if (rhs.size() != s.cells || out.size() != s.cells)
    throw GridMismatch("PoissonSolver::solve_space: size mismatch");
  check_mean_free(rhs);
  std::copy(rhs.begin(), rhs.end(), s.real_buf.get());
  fftw_execute(s.forward1.get());
  fftw_complex* spec = s.spec_buf.get();
  const double norm = 1.0 / static_cast<double>(s.cells);
  spec[0][0] = 0.0;
  spec[0][1] = 0.0;
  for (std::size_t mode = 1; mode < s.modes; ++mode) {
    const double f = norm / s.symbol[mode];
    spec[mode][0] *= f;
    spec[mode][1] *= f;
  }
  fftw_execute(s.backward1.get());
  std::copy(s.real_buf.get(), s.real_buf.get() + s.cells, out.begin());
}

void PoissonSolver::solve_space_slices(std::span<const double> rhs, std::span<double> out) {
  Impl& s = *impl_;
  const std::size_t total = s.cells * s.nslices;
  if (rhs.size() != total || out.size() != total)
    throw GridMismatch("PoissonSolver::solve_space_slices: size mismatch");
  for (std::size_t k = 0; k < s.nslices; ++k) check_mean_free(rhs.subspan(k * s.cells, s.cells));
  std::copy(rhs.begin(), rhs.end(), s.real_buf.get());
  fftw_execute(s.forward.get());
  fftw_complex* spec = s.spec_buf.get();
  const double norm = 1.0 / static_cast<double>(s.cells);
  for (std::size_t k = 0; k < s.nslices; ++k) {
    fftw_complex* sl = spec + k * s.modes;
    sl[0][0] = 0.0;
    sl[0][1] = 0.0;
    for (std::size_t mode = 1; mode < s.modes; ++mode) {
      const double f = norm / s.symbol[mode];
      sl[mode][0] *= f;
      sl[mode][1] *= f;
    }
  }
  fftw_execute(s.backward.get());
  std::copy(s.real_buf.get(), s.real_buf.get() + total, out.begin());
}

void PoissonSolver::solve(std::span<const double> rhs, std::span<double> out) {
  Impl& s = *impl_;
  const std::size_t total = s.cells * s.nslices;
  if (rhs.size() != total || out.size() != total) throw GridMismatch("PoissonSolver::solve: size mismatch");
  if (s.grid.stationary()) {
    solve_space(rhs, out);
    const double inv = 1.0 / s.weights.space;
    for (double& v : out) v *= inv;
    return;
  }
  std::copy(rhs.begin(), rhs.end(), s.real_buf.get());
  fftw_execute(s.forward.get());
  fftw_complex* spec = s.spec_buf.get();
  const std::size_t nt = s.nslices;
  const double norm = 1.0 / static_cast<double>(s.cells);
  for (std::size_t mode = 0; mode < s.modes; ++mode) {
    const double* c = &s.thomas_c[mode * nt];
    const double* inv = &s.thomas_inv[mode * nt];
    const double a = s.weights.time / (s.grid.ht() * s.grid.ht());
    // forward sweep
    double pr = 0.0, pi = 0.0;
    for (std::size_t k = 0; k < nt; ++k) {
      fftw_complex& v = spec[k * s.modes + mode];
      const double lower = k == 0 ? 0.0 : -a;
      v[0] = (v[0] - lower * pr) * inv[k];
      v[1] = (v[1] - lower * pi) * inv[k];
      pr = v[0];
      pi = v[1];
    }
    // back substitution
    for (std::size_t k = nt - 1; k-- > 0;) {
      fftw_complex& v = spec[k * s.modes + mode];
      const fftw_complex& nx = spec[(k + 1) * s.modes + mode];
      v[0] -= c[k] * nx[0];
      v[1] -= c[k] * nx[1];
    }
    for (std::size_t k = 0; k < nt; ++k) {
      fftw_complex& v = spec[k * s.modes + mode];
      v[0] *= norm;
      v[1] *= norm;
    }
  }
  fftw_execute(s.backward.get());
  std::copy(s.real_buf.get(), s.real_buf.get() + total, out.begin());
}

void PoissonSolver::apply(std::span<const double> u, std::span<double> out) const {
  const Impl& s = *impl_;
  const std::size_t total = s.cells * s.nslices;
  if (u.size() != total || out.size() != total) throw GridMismatch("PoissonSolver::apply: size mismatch");
  std::vector<double> lap(s.cells);
  for (std::size_t k = 0; k < s.nslices; ++k) {
    auto uk = u.subspan(k * s.cells, s.cells);
    auto ok = out.subspan(k * s.cells, s.cells);
    laplacian(s.grid, uk, lap);
    for (std::size_t c = 0; c < s.cells; ++c) ok[c] = -s.weights.space * lap[c];
  }
  if (s.grid.stationary()) return;
  const double a = s.weights.time / (s.grid.ht() * s.grid.ht());
  const std::size_t nt = s.nslices;
  for (std::size_t k = 0; k < nt; ++k) {
    auto ok = out.subspan(k * s.cells, s.cells);
    for (std::size_t c = 0; c < s.cells; ++c) {
      const double here = u[k * s.cells + c];
      const double below = k > 0 ? u[(k - 1) * s.cells + c] : 0.0;
      const double above = k + 1 < nt ? u[(k + 1) * s.cells + c] : 0.0;  // Dirichlet top node
      const double diag = k == 0 ? 1.0 : 2.0;
      ok[c] += a * (diag * here - (k > 0 ? below : 0.0) - above);
    }
  }
}

ScalarField PoissonSolver::solve(const ScalarField& rhs) {
  const Impl& s = *impl_;
  if (rhs.grid != s.grid) throw GridMismatch("PoissonSolver::solve: grid mismatch");
  if (rhs.staggering != Staggering::Node) throw GridMismatch("PoissonSolver::solve: rhs must be node-staggered");
  ScalarField out(rhs.grid, Staggering::Node);
  const std::size_t total = s.cells * s.nslices;
  solve(std::span<const double>(rhs.values).first(total), std::span<double>(out.values).first(total));
  return out;
}

ScalarField poisson_solve(const ScalarField& rhs, PoissonWeights weights) {
  PoissonSolver solver(rhs.grid, weights);
  return solver.solve(rhs);
}

// ---------------------------------------------------------------------------
// Field IO

namespace {

void write_le_doubles(std::ostream& os, std::span<const double> values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

void write_field(const std::filesystem::path& path, const GridSpec& grid, Staggering s,
                 std::span<const double> values) {
  if (values.size() != slice_count(grid, s) * grid.cells())
    throw GridMismatch("write_field: value count does not match grid");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_field: cannot open " + path.string());
  os << "MFGF1 " << grid.dim << ' ' << grid.n_space << ' ' << grid.n_time << ' ' << to_string(s) << '\n';
  write_le_doubles(os, values);
  if (!os) throw std::runtime_error("write_field: write failed for " + path.string());
}

void write_field(const std::filesystem::path& path, const ScalarField& field) {
  write_field(path, field.grid, field.staggering, field.values);
}

ScalarField read_field(const std::filesystem::path& path, double T) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_field: cannot open " + path.string());
  std::string header;
  std::getline(is, header);
  std::istringstream hs(header);
  std::string magic, stag;
  int dim = 0, n_space = 0, n_time = -1;
  hs >> magic >> dim >> n_space >> n_time >> stag;
  if (magic != "MFGF1" || !hs) throw std::runtime_error("read_field: bad header in " + path.string());
  GridSpec grid = GridSpec::make(dim, n_space, n_time, T);
  ScalarField field(grid, staggering_from_string(stag));
  std::vector<unsigned char> bytes(field.values.size() * 8);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (is.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw std::runtime_error("read_field: truncated payload in " + path.string());
  if (is.peek() != std::char_traits<char>::eof())
    throw std::runtime_error("read_field: trailing bytes in " + path.string());
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    field.values[i] = std::bit_cast<double>(bits);
  }
  return field;
}

}  // namespace mfg
