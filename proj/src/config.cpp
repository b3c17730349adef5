#include "mfg/config.hpp"

#include <cctype>
#include <cerrno>
#include <limits>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace mfg {

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : "\n") + s;
  return out;
}

std::vector<std::string> split(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t pos; (pos = s.find(sep, start)) != std::string::npos; start = pos + sep.size())
    out.push_back(s.substr(start, pos - start));
  out.push_back(s.substr(start));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

// ---------------------------------------------------------------------------
// Expressions

struct Expression::Node {
  enum Kind { Const, Add, Sub, Mul, Neg, Cos, Sin } kind = Const;
  double value = 0.0;
  // Phase c + ax * x + ay * y for the trigonometric nodes.
  double ax = 0.0, ay = 0.0;
  std::shared_ptr<const Node> a, b;

  double eval(double x, double y) const {
    switch (kind) {
      case Const: return value;
      case Add: return a->eval(x, y) + b->eval(x, y);
      case Sub: return a->eval(x, y) - b->eval(x, y);
      case Mul: return a->eval(x, y) * b->eval(x, y);
      case Neg: return -a->eval(x, y);
      case Cos: return std::cos(value + ax * x + ay * y);
      case Sin: return std::sin(value + ax * x + ay * y);
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

struct Linear {
  double c = 0.0, ax = 0.0, ay = 0.0;
  bool constant() const { return ax == 0.0 && ay == 0.0; }
};

class Parser {
 public:
  Parser(const std::string& text, int dim) : s_(text), dim_(dim) {}

  NodePtr parse() {
    NodePtr n = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

 private:
  const std::string& s_;
  int dim_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError({"expression '" + s_ + "': " + why + " at column " + std::to_string(pos_ + 1)});
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  std::string identifier() {
    skip();
    const std::size_t b = pos_;
    while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    return s_.substr(b, pos_ - b);
  }

  bool number(double& out) {
    skip();
    if (pos_ >= s_.size() || !(std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) return false;
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    out = std::strtod(begin, &end);
    if (end == begin) fail("malformed number");
    pos_ += static_cast<std::size_t>(end - begin);
    return true;
  }

  static NodePtr make(Expression::Node::Kind k, NodePtr a = nullptr, NodePtr b = nullptr, double v = 0.0) {
    auto n = std::make_shared<Expression::Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    n->value = v;
    return n;
  }

  NodePtr expr() {
    NodePtr n = term();
    for (;;) {
      if (accept('+')) n = make(Expression::Node::Add, n, term());
      else if (accept('-')) n = make(Expression::Node::Sub, n, term());
      else return n;
    }
  }

  NodePtr term() {
    NodePtr n = factor();
    while (accept('*')) n = make(Expression::Node::Mul, n, factor());
    skip();
    if (pos_ < s_.size() && s_[pos_] == '/') fail("division is not part of the grammar");
    return n;
  }

  NodePtr factor() {
    if (accept('-')) return make(Expression::Node::Neg, factor());
    if (accept('+')) return factor();
    double v = 0.0;
    if (number(v)) return make(Expression::Node::Const, nullptr, nullptr, v);
    if (accept('(')) {
      NodePtr n = expr();
      expect(')');
      return n;
    }
    const std::size_t at = pos_;
    const std::string id = identifier();
    if (id == "pi") return make(Expression::Node::Const, nullptr, nullptr, std::numbers::pi);
    if (id == "cos" || id == "sin") {
      expect('(');
      const Linear ph = phase_sum();
      expect(')');
      check_periodic(ph);
      auto n = std::make_shared<Expression::Node>();
      n->kind = id == "cos" ? Expression::Node::Cos : Expression::Node::Sin;
      n->value = ph.c;
      n->ax = ph.ax;
      n->ay = ph.ay;
      return n;
    }
    pos_ = at;
    if (id == "x" || id == "y") fail("coordinates may only appear inside cos or sin");
    if (id.empty()) fail(pos_ < s_.size() ? "unexpected '" + std::string(1, s_[pos_]) + "'" : "unexpected end");
    fail("unknown name '" + id + "'");
  }

  void check_periodic(const Linear& ph) const {
    const double two_pi = 2.0 * std::numbers::pi;
    for (double a : {ph.ax, ph.ay}) {
      const double k = a / two_pi;
      if (std::abs(k - std::round(k)) > 1e-9)
        fail("coordinate coefficient must be an integer multiple of 2*pi");
    }
  }

  Linear phase_sum() {
    Linear l = phase_term();
    for (;;) {
      double sign;
      if (accept('+')) sign = 1.0;
      else if (accept('-')) sign = -1.0;
      else return l;
      const Linear r = phase_term();
      l.c += sign * r.c;
      l.ax += sign * r.ax;
      l.ay += sign * r.ay;
    }
  }

  Linear phase_term() {
    Linear l = phase_factor();
    while (accept('*')) {
      const Linear r = phase_factor();
      if (!l.constant() && !r.constant()) fail("phase must be linear in the coordinates");
      const Linear& k = l.constant() ? l : r;
      const Linear& v = l.constant() ? r : l;
      l = {k.c * v.c, k.c * v.ax, k.c * v.ay};
    }
    return l;
  }

  Linear phase_factor() {
    if (accept('-')) {
      const Linear l = phase_factor();
      return {-l.c, -l.ax, -l.ay};
    }
    if (accept('+')) return phase_factor();
    double v = 0.0;
    if (number(v)) return {v, 0.0, 0.0};
    if (accept('(')) {
      const Linear l = phase_sum();
      expect(')');
      return l;
    }
    const std::string id = identifier();
    if (id == "pi") return {std::numbers::pi, 0.0, 0.0};
    if (id == "x") return {0.0, 1.0, 0.0};
    if (id == "y") {
      if (dim_ < 2) fail("y is not available in one dimension");
      return {0.0, 0.0, 1.0};
    }
    if (id.empty()) fail("expected a phase term");
    fail("'" + id + "' is not allowed inside a phase");
  }
};

}  // namespace

Expression Expression::parse(const std::string& text, int dim) {
  Expression e;
  e.text_ = text;
  Parser p(e.text_, dim);
  e.root_ = p.parse();
  return e;
}

double Expression::operator()(double x, double y) const { return root_->eval(x, y); }

// ---------------------------------------------------------------------------
// Subcommands

std::string to_string(Subcommand s) {
  switch (s) {
    case Subcommand::SolveTd: return "solve-td";
    case Subcommand::SolveStat: return "solve-stat";
    case Subcommand::Diagnose: return "diagnose";
    case Subcommand::Refine: return "refine";
    case Subcommand::KernelCheck: return "kernel-check";
  }
  return "?";
}

std::optional<Subcommand> subcommand_from_string(const std::string& s) {
  for (Subcommand c : {Subcommand::SolveTd, Subcommand::SolveStat, Subcommand::Diagnose, Subcommand::Refine,
                       Subcommand::KernelCheck})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// RunConfig

ModelSpec RunConfig::model_spec() const {
  ModelSpec spec;
  spec.r = r;
  spec.q = q;
  spec.T = T;
  spec.dim = dim;
  auto wrap = [&](const std::string& text) -> Coefficient {
    const Expression e = Expression::parse(text, dim);
    return [e](double x, double y) { return e(x, y); };
  };
  spec.c1 = wrap(c1);
  spec.c2 = wrap(c2);
  spec.m0 = wrap(m0);
  spec.phiT = wrap(phiT);
  return spec;
}

GridSpec RunConfig::grid(bool stationary) const {
  return GridSpec::make(dim, n_space, stationary ? 0 : n_time, T);
}

std::vector<GridSpec> RunConfig::ladder_grids(bool stationary) const {
  std::vector<GridSpec> out;
  for (int n : ladder) {
    // Keep ht / hx fixed along the ladder unless the time grid is pinned.
    const int nt = stationary         ? 0
                   : ladder_fixed_time ? n_time
                                       : static_cast<int>(static_cast<long long>(n_time) * n / n_space);
    out.push_back(GridSpec::make(dim, n, nt, T));
  }
  return out;
}

namespace {

struct ValueParser {
  std::vector<std::string>& errors;
  std::string where;

  bool real(const std::string& v, double& out) {
    const char* b = v.c_str();
    char* e = nullptr;
    const double x = std::strtod(b, &e);
    if (v.empty() || *e != '\0' || !std::isfinite(x)) {
      errors.push_back(where + ": expected a finite number, got '" + v + "'");
      return false;
    }
    out = x;
    return true;
  }

  bool integer(const std::string& v, long long& out) {
    const char* b = v.c_str();
    char* e = nullptr;
    const long long x = std::strtoll(b, &e, 10);
    if (v.empty() || *e != '\0') {
      errors.push_back(where + ": expected an integer, got '" + v + "'");
      return false;
    }
    out = x;
    return true;
  }

  void as_int(const std::string& v, int& out) {
    long long x;
    if (!integer(v, x)) return;
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      errors.push_back(where + ": integer out of range");
      return;
    }
    out = static_cast<int>(x);
  }

  void as_u64(const std::string& v, std::uint64_t& out) {
    const char* b = v.c_str();
    char* e = nullptr;
    if (v.empty() || v[0] == '-') {
      errors.push_back(where + ": expected an unsigned integer, got '" + v + "'");
      return;
    }
    errno = 0;
    const unsigned long long x = std::strtoull(b, &e, 10);
    if (*e != '\0' || errno == ERANGE) {
      errors.push_back(where + ": expected an unsigned integer, got '" + v + "'");
      return;
    }
    out = x;
  }

  void as_bool(const std::string& v, bool& out) {
    if (v == "true") out = true;
    else if (v == "false") out = false;
    else errors.push_back(where + ": expected true or false, got '" + v + "'");
  }

  void as_int_list(const std::string& v, std::vector<int>& out) {
    std::vector<int> list;
    for (const std::string& item : split(v, ",")) {
      int x = 0;
      const std::size_t before = errors.size();
      as_int(trim(item), x);
      if (errors.size() != before) return;
      list.push_back(x);
    }
    out = std::move(list);
  }
};

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::vector<std::string> errors;
  std::string block;
  std::map<std::string, int> seen;
  bool expressions_ok = true;
  // Where each coefficient expression was set, for error messages.
  std::map<const std::string*, std::string> expression_where;

  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string where = "line " + std::to_string(lineno);
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back(where + ": malformed block header '" + line + "'");
        continue;
      }
      block = trim(line.substr(1, line.size() - 2));
      if (block != "model" && block != "grid" && block != "solver" && block != "diagnostics" && block != "output")
        errors.push_back(where + ": unknown block [" + block + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string qualified = block + "." + key;
    if (block.empty()) {
      errors.push_back(where + ": key '" + key + "' outside a block");
      continue;
    }
    if (seen[qualified]++) errors.push_back(where + ": duplicate key " + qualified);
    ValueParser vp{errors, where + " (" + qualified + ")"};

    auto expression = [&](std::string& dst) {
      dst = value;
      expression_where[&dst] = vp.where;
      if (value.empty()) {
        errors.push_back(vp.where + ": empty expression");
        expressions_ok = false;
      }
    };

    if (block == "model") {
      if (key == "r") vp.real(value, cfg.r);
      else if (key == "q") vp.real(value, cfg.q);
      else if (key == "T") vp.real(value, cfg.T);
      else if (key == "dim") vp.as_int(value, cfg.dim);
      else if (key == "c1") expression(cfg.c1);
      else if (key == "c2") expression(cfg.c2);
      else if (key == "m0") expression(cfg.m0);
      else if (key == "phiT") expression(cfg.phiT);
      else errors.push_back(where + ": unknown key " + qualified);
    } else if (block == "grid") {
      if (key == "n_space") vp.as_int(value, cfg.n_space);
      else if (key == "n_time") vp.as_int(value, cfg.n_time);
      else if (key == "ladder") vp.as_int_list(value, cfg.ladder);
      else if (key == "ladder_fixed_time") vp.as_bool(value, cfg.ladder_fixed_time);
      else errors.push_back(where + ": unknown key " + qualified);
    } else if (block == "solver") {
      SolveOptions& s = cfg.solver;
      if (key == "penalty") vp.real(value, s.penalty);
      else if (key == "max_iters") vp.as_int(value, s.max_iters);
      else if (key == "gap_tol") vp.real(value, s.gap_tol);
      else if (key == "residual_tol") vp.real(value, s.residual_tol);
      else if (key == "seed") vp.as_u64(value, s.seed);
      else if (key == "adaptive_penalty") vp.as_bool(value, s.adaptive_penalty);
      else if (key == "relaxation") vp.real(value, s.relaxation);
      else if (key == "checkpoint_every") vp.as_int(value, s.checkpoint_every);
      else if (key == "threads") vp.as_int(value, s.threads);
      else errors.push_back(where + ": unknown key " + qualified);
    } else if (block == "diagnostics") {
      DiagnosticsOptions& d = cfg.diagnostics;
      if (key == "shifts") vp.as_int_list(value, d.shifts);
      else if (key == "growth_factor") vp.real(value, d.growth_factor);
      else if (key == "zero_floor") vp.real(value, d.zero_floor);
      else if (key == "congestion_s") vp.real(value, d.congestion_s);
      else if (key == "kernel_samples") vp.as_int(value, cfg.kernel_samples);
      else errors.push_back(where + ": unknown key " + qualified);
    } else if (block == "output") {
      if (key == "dir") cfg.output_dir = value;
      else errors.push_back(where + ": unknown key " + qualified);
    }
  }

  // Cross-field validation.
  const bool dim_ok = cfg.dim == 1 || cfg.dim == 2;
  if (!dim_ok) errors.push_back("model.dim must be 1 or 2");
  if (dim_ok) {
    for (const std::string* e : {&cfg.c1, &cfg.c2, &cfg.m0, &cfg.phiT}) {
      if (e->empty()) continue;
      try {
        (void)Expression::parse(*e, cfg.dim);
      } catch (const ConfigError& ex) {
        expressions_ok = false;
        const auto it = expression_where.find(e);
        const std::string prefix = it != expression_where.end() ? it->second + ": " : "";
        for (const auto& msg : ex.errors()) errors.push_back(prefix + msg);
      }
    }
  }
  if (cfg.n_space < 4 || (cfg.n_space & (cfg.n_space - 1)) != 0)
    errors.push_back("grid.n_space must be a power of two >= 4");
  if (cfg.n_time < 1) errors.push_back("grid.n_time must be >= 1");
  for (int n : cfg.ladder)
    if (n < 4 || (n & (n - 1)) != 0) errors.push_back("grid.ladder entries must be powers of two >= 4");
  for (std::size_t i = 1; i < cfg.ladder.size(); ++i)
    if (cfg.ladder[i] != 2 * cfg.ladder[i - 1]) errors.push_back("grid.ladder must double at every step");
  if (cfg.n_space >= 4 && cfg.n_time >= 1 && !cfg.ladder_fixed_time)
    for (int n : cfg.ladder)
      if ((static_cast<long long>(cfg.n_time) * n) % cfg.n_space != 0)
        errors.push_back("grid.ladder entry " + std::to_string(n) + " does not give an integer number of time steps");
  try {
    cfg.solver.validate();
  } catch (const std::invalid_argument& ex) {
    for (const auto& m : split(ex.what(), "; ")) errors.push_back("solver." + m);
  }
  for (int s : cfg.diagnostics.shifts)
    if (s < 1) errors.push_back("diagnostics.shifts: shifts below one lattice cell");
  if (!(cfg.diagnostics.growth_factor > 1.0)) errors.push_back("diagnostics.growth_factor must be > 1");
  if (!(cfg.diagnostics.zero_floor >= 0.0)) errors.push_back("diagnostics.zero_floor must be >= 0");
  if (!(cfg.diagnostics.congestion_s > 0.0)) errors.push_back("diagnostics.congestion_s must be > 0");
  if (cfg.kernel_samples < 1) errors.push_back("diagnostics.kernel_samples must be >= 1");

  // Model class: exponent ranges, positivity, horizon. Sampled on a
  // validation grid so that a bad grid block does not hide model errors.
  if (dim_ok && expressions_ok) {
    const int n = cfg.n_space >= 4 && (cfg.n_space & (cfg.n_space - 1)) == 0 ? cfg.n_space : 32;
    try {
      const ModelSpec spec = cfg.model_spec();
      if (cfg.T > 0.0) {
        (void)DiscreteModel(spec, GridSpec::make(cfg.dim, n, 1, cfg.T));
      } else {
        (void)DiscreteModel(spec, GridSpec::make(cfg.dim, n, 0, 1.0));
      }
    } catch (const InfeasibleModel& ex) {
      for (const auto& m : split(ex.what(), "; ")) errors.push_back("model: " + m);
    }
  }

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError({"cannot read config file " + path});
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

}  // namespace mfg
