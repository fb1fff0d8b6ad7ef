#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace zett::convert {

// One hinge term max(0, sum_i coef_i * s[var_i] + delta).
struct LpConstraint {
  std::vector<std::pair<std::uint32_t, double>> terms;
};

// minimize sum_j max(0, a_j . s + delta) over scores s. Variables are
// offsets from `prior`; variables no constraint touches stay at the prior.
// In epigraph form: min sum t_j  s.t.  t_j >= a_j . s + delta, t_j >= 0.
struct LpProblem {
  std::vector<double> prior;
  std::vector<LpConstraint> constraints;
  double delta = 1e-6;
};

enum class LpBackend { Auto, Simplex, Subgradient };

std::string_view to_string(LpBackend b);

struct LpOptions {
  LpBackend backend = LpBackend::Auto;
  std::size_t simplex_max_vars = 5000;
  std::size_t simplex_max_cells = 30'000'000;  // tableau size limit for Auto
  std::size_t simplex_max_pivots = 200'000;
  std::size_t subgradient_epochs = 300;
  double subgradient_step = 0.5;
  double subgradient_margin = 0.05;  // working margin; the objective is still reported at delta
  double subgradient_bound = 100.0;  // |s - prior| box
  std::uint64_t seed = 0;
  const std::vector<double>* warm_start = nullptr;  // subgradient only
};

struct LpSolution {
  std::vector<double> scores;
  double objective = 0.0;
  LpBackend backend = LpBackend::Auto;
  std::size_t iterations = 0;
};

double hinge_objective(const LpProblem& p, std::span<const double> scores);

// Throws InvalidArgument for malformed problems, IterationLimit when the
// simplex exceeds its pivot budget.
LpSolution solve_lp(const LpProblem& p, const LpOptions& opts = {});

// Dense standard-form simplex: min c.z s.t. A z = b, z >= 0, with b >= 0 and
// `basis` naming an identity submatrix of A. Dantzig pricing, switching to
// Bland's rule after a run of degenerate pivots. Returns z.
std::vector<double> simplex_standard_form(std::vector<std::vector<double>> a, std::vector<double> b,
                                          const std::vector<double>& c, std::vector<std::size_t> basis,
                                          std::size_t max_pivots, std::size_t* pivots = nullptr);

}  // namespace zett::convert
