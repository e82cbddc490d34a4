#pragma once

#include <functional>
#include <vector>

namespace lungpipe::ml {

struct LbfgsOptions {
  int max_iter = 200;
  double gtol = 1e-5;  // stop when max |gradient| falls below this
  int history = 10;
};

struct LbfgsResult {
  int iterations = 0;
  bool converged = false;
  double value = 0.0;
};

/// Fills `grad` and returns the objective at `x`.
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

/// Limited-memory BFGS with a backtracking Armijo line search. `x` holds the
/// starting point on entry and the minimizer on return.
LbfgsResult minimize_lbfgs(const Objective& f, std::vector<double>& x, const LbfgsOptions& opts = {});

}  // namespace lungpipe::ml
