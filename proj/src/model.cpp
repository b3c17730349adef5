#include "mfg/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

namespace mfg {

namespace {

std::vector<double> sample(const Coefficient& f, const GridSpec& g) {
  std::vector<double> out(g.cells());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double x = g.centre(c, 0);
    const double y = g.dim == 2 ? g.centre(c, 1) : 0.0;
    out[c] = f(x, y);
  }
  return out;
}

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
}

void fnv_double(std::uint64_t& h, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  fnv(h, b, 8);
}

}  // namespace

DiscreteModel::DiscreteModel(const ModelSpec& spec, const GridSpec& grid) : grid_(grid), r_(spec.r), q_(spec.q) {
  std::vector<std::string> errors;
  if (!(spec.r > 1.0)) errors.push_back("r must be > 1 (Hamiltonian growth exponent range)");
  if (!(spec.q > 1.0)) errors.push_back("q must be > 1 (coupling growth exponent range)");
  if (!(spec.T > 0.0)) errors.push_back("T must be > 0");
  if (spec.dim != grid.dim) errors.push_back("model dimension does not match grid dimension");
  if (!grid.stationary() && spec.T != grid.T) errors.push_back("model horizon does not match grid horizon");
  if (!errors.empty()) {
    std::ostringstream os;
    for (std::size_t i = 0; i < errors.size(); ++i) os << (i ? "; " : "") << errors[i];
    throw InfeasibleModel(os.str());
  }

  c1_ = sample(spec.c1, grid);
  c2_ = sample(spec.c2, grid);
  m0_ = sample(spec.m0, grid);
  phiT_ = sample(spec.phiT, grid);

  auto all_finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!all_finite(c1_) || !all_finite(c2_) || !all_finite(m0_) || !all_finite(phiT_))
    errors.push_back("coefficient fields must be finite");
  else {
    if (*std::min_element(c1_.begin(), c1_.end()) <= 0.0) errors.push_back("c1 must be strictly positive");
    if (*std::min_element(c2_.begin(), c2_.end()) <= 0.0) errors.push_back("c2 must be strictly positive");
    if (*std::min_element(m0_.begin(), m0_.end()) <= 0.0)
      errors.push_back("m0 must be strictly positive on every cell");
  }
  if (!errors.empty()) {
    std::ostringstream os;
    for (std::size_t i = 0; i < errors.size(); ++i) os << (i ? "; " : "") << errors[i];
    throw InfeasibleModel(os.str());
  }

  const double mass = pairwise_sum(m0_) * grid.cell_volume();
  for (double& v : m0_) v /= mass;
}

DiscreteModel DiscreteModel::translated(std::span<const int> delta) const {
  DiscreteModel out;
  out.grid_ = grid_;
  out.r_ = r_;
  out.q_ = q_;
  auto shift = [&](const std::vector<double>& in) {
    std::vector<double> o(in.size());
    translate(grid_, in, delta, o);
    return o;
  };
  out.c1_ = shift(c1_);
  out.c2_ = shift(c2_);
  out.m0_ = shift(m0_);
  out.phiT_ = shift(phiT_);
  return out;
}

std::uint64_t DiscreteModel::hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  fnv_double(h, r_);
  fnv_double(h, q_);
  fnv_double(h, grid_.T);
  fnv_double(h, static_cast<double>(grid_.dim));
  for (const auto* field : {&c1_, &c2_, &m0_, &phiT_})
    for (double v : *field) fnv_double(h, v);
  return h;
}

bool DiscreteModel::homogeneous_coefficients() const {
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  return constant(c1_) && constant(c2_);
}

}  // namespace mfg
