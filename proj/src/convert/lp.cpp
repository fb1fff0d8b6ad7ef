#include "zett/convert/lp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "zett/common/error.hpp"
#include "zett/common/rng.hpp"

namespace zett::convert {

std::string_view to_string(LpBackend b) {
  switch (b) {
    case LpBackend::Auto: return "auto";
    case LpBackend::Simplex: return "simplex";
    case LpBackend::Subgradient: return "subgradient";
  }
  return "?";
}

namespace {

constexpr double kEps = 1e-9;

double activation(const LpConstraint& c, std::span<const double> s) {
  double v = 0.0;
  for (auto [var, coef] : c.terms) v += coef * s[var];
  return v;
}

void validate(const LpProblem& p) {
  for (double x : p.prior) require(std::isfinite(x), ErrorCode::InvalidArgument, "non-finite prior score");
  require(p.delta >= 0, ErrorCode::InvalidArgument, "margin must be non-negative");
  for (const auto& c : p.constraints)
    for (auto [var, coef] : c.terms) {
      require(var < p.prior.size(), ErrorCode::InvalidArgument, "constraint references unknown variable");
      require(std::isfinite(coef), ErrorCode::InvalidArgument, "non-finite constraint coefficient");
    }
}

std::vector<std::uint32_t> referenced_vars(const LpProblem& p) {
  std::vector<std::uint32_t> vars;
  for (const auto& c : p.constraints)
    for (auto [var, coef] : c.terms)
      if (coef != 0.0) vars.push_back(var);
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  return vars;
}

LpSolution solve_simplex(const LpProblem& p, const LpOptions& opts) {
  auto vars = referenced_vars(p);
  std::unordered_map<std::uint32_t, std::size_t> local;
  for (std::size_t i = 0; i < vars.size(); ++i) local[vars[i]] = i;
  const std::size_t n = vars.size(), m = p.constraints.size();
  // Columns: x+ [0,n), x- [n,2n), t [2n,2n+m), e [2n+m,2n+2m).
  const std::size_t cols = 2 * n + 2 * m;
  std::vector<std::vector<double>> a(m, std::vector<double>(cols, 0.0));
  std::vector<double> b(m), c(cols, 0.0);
  std::vector<std::size_t> basis(m);
  for (std::size_t j = 0; j < m; ++j) {
    auto& row = a[j];
    for (auto [var, coef] : p.constraints[j].terms) {
      row[local[var]] -= coef;
      row[n + local[var]] += coef;
    }
    row[2 * n + j] = 1.0;
    row[2 * n + m + j] = -1.0;
    b[j] = activation(p.constraints[j], p.prior) + p.delta;
    if (b[j] < 0) {
      for (double& v : row) v = -v;
      b[j] = -b[j];
      basis[j] = 2 * n + m + j;
    } else {
      basis[j] = 2 * n + j;
    }
    c[2 * n + j] = 1.0;
  }
  LpSolution sol;
  auto z = simplex_standard_form(std::move(a), std::move(b), c, std::move(basis), opts.simplex_max_pivots,
                                 &sol.iterations);
  sol.scores = p.prior;
  for (std::size_t i = 0; i < n; ++i) sol.scores[vars[i]] += z[i] - z[n + i];
  sol.objective = hinge_objective(p, sol.scores);
  sol.backend = LpBackend::Simplex;
  return sol;
}

LpSolution solve_subgradient(const LpProblem& p, const LpOptions& opts) {
  std::vector<double> s = opts.warm_start ? *opts.warm_start : p.prior;
  require(s.size() == p.prior.size(), ErrorCode::InvalidArgument, "warm start size mismatch");
  LpSolution best{s, hinge_objective(p, s), LpBackend::Subgradient, 0};
  std::vector<std::size_t> order(p.constraints.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(opts.seed).split("subgradient");
  const double margin = std::max(opts.subgradient_margin, p.delta);
  for (std::size_t epoch = 0; epoch < opts.subgradient_epochs && best.objective > 0; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double step = opts.subgradient_step / std::sqrt(1.0 + double(epoch));
    std::size_t violated = 0;
    for (std::size_t j : order) {
      const auto& con = p.constraints[j];
      if (activation(con, s) + margin <= 0) continue;
      ++violated;
      double norm2 = 0;
      for (auto [var, coef] : con.terms) norm2 += coef * coef;
      if (norm2 == 0) continue;
      for (auto [var, coef] : con.terms) {
        double v = s[var] - step * coef / std::sqrt(norm2);
        s[var] = std::clamp(v, p.prior[var] - opts.subgradient_bound, p.prior[var] + opts.subgradient_bound);
      }
    }
    ++best.iterations;
    double obj = hinge_objective(p, s);
    if (obj < best.objective) {
      best.objective = obj;
      best.scores = s;
    }
    if (violated == 0) break;
  }
  return best;
}

}  // namespace

double hinge_objective(const LpProblem& p, std::span<const double> scores) {
  double total = 0.0;
  for (const auto& c : p.constraints) total += std::max(0.0, activation(c, scores) + p.delta);
  return total;
}

LpSolution solve_lp(const LpProblem& p, const LpOptions& opts) {
  validate(p);
  if (p.constraints.empty()) return {p.prior, 0.0, LpBackend::Simplex, 0};
  LpBackend backend = opts.backend;
  if (backend == LpBackend::Auto) {
    std::size_t n = referenced_vars(p).size(), m = p.constraints.size();
    bool small = n <= opts.simplex_max_vars && m * (2 * n + 2 * m) <= opts.simplex_max_cells;
    backend = small ? LpBackend::Simplex : LpBackend::Subgradient;
  }
  return backend == LpBackend::Simplex ? solve_simplex(p, opts) : solve_subgradient(p, opts);
}

std::vector<double> simplex_standard_form(std::vector<std::vector<double>> a, std::vector<double> b,
                                          const std::vector<double>& c, std::vector<std::size_t> basis,
                                          std::size_t max_pivots, std::size_t* pivots) {
  const std::size_t m = a.size();
  const std::size_t cols = c.size();
  require(b.size() == m && basis.size() == m, ErrorCode::InvalidArgument, "simplex dimension mismatch");
  for (std::size_t i = 0; i < m; ++i) {
    require(a[i].size() == cols, ErrorCode::InvalidArgument, "simplex row width mismatch");
    require(b[i] >= 0, ErrorCode::InvalidArgument, "simplex requires b >= 0");
  }
  // Reduced costs d = c - c_B^T A (A is already B^{-1} A for an identity basis).
  std::vector<double> d = c;
  for (std::size_t i = 0; i < m; ++i) {
    double cb = c[basis[i]];
    if (cb != 0.0)
      for (std::size_t k = 0; k < cols; ++k) d[k] -= cb * a[i][k];
  }

  std::size_t count = 0, degenerate_run = 0;
  constexpr std::size_t kBlandAfter = 50;
  for (;;) {
    bool bland = degenerate_run >= kBlandAfter;
    std::size_t enter = cols;
    double most = -kEps;
    for (std::size_t k = 0; k < cols; ++k) {
      if (d[k] < most) {
        enter = k;
        if (bland) break;
        most = d[k];
      }
    }
    if (enter == cols) break;

    std::size_t leave = m;
    double best_ratio = 0;
    for (std::size_t i = 0; i < m; ++i) {
      double coef = a[i][enter];
      if (coef <= kEps) continue;
      double ratio = b[i] / coef;
      if (leave == m || ratio < best_ratio - 1e-12 ||
          (ratio <= best_ratio + 1e-12 && basis[i] < basis[leave])) {
        leave = i;
        best_ratio = ratio;
      }
    }
    if (leave == m) fail(ErrorCode::Unbounded, "linear program is unbounded");
    if (++count > max_pivots) fail(ErrorCode::IterationLimit, "simplex pivot limit reached");
    degenerate_run = best_ratio <= 1e-12 ? degenerate_run + 1 : 0;

    auto& prow = a[leave];
    double pivot = prow[enter];
    for (double& v : prow) v /= pivot;
    b[leave] /= pivot;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == leave) continue;
      double f = a[i][enter];
      if (f == 0.0) continue;
      auto& row = a[i];
      for (std::size_t k = 0; k < cols; ++k) row[k] -= f * prow[k];
      b[i] = std::max(0.0, b[i] - f * b[leave]);
    }
    double f = d[enter];
    for (std::size_t k = 0; k < cols; ++k) d[k] -= f * prow[k];
    basis[leave] = enter;
  }
  if (pivots) *pivots = count;
  std::vector<double> z(cols, 0.0);
  for (std::size_t i = 0; i < m; ++i) z[basis[i]] = b[i];
  return z;
}

}  // namespace zett::convert
