#pragma once

#include <Eigen/Dense>

#include <functional>

namespace mesvar {

struct NelderMeadOptions {
  double deviance_tolerance = 1e-8;  // terminate when best-worst spread is below
  double simplex_tolerance = 1e-6;   // ... and every vertex is this close to the best
  int max_evaluations = 0;           // 0 means 5000 * dimension
  double initial_step = 0.25;        // simplex edge relative to max(|x0_i|, 0.1)
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Standard downhill simplex (reflection 1, expansion 2, contraction 0.5,
// shrink 0.5). Unconstrained; callers with sign symmetry fold signs after.
NelderMeadResult minimize_nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                      const Eigen::VectorXd& start,
                                      const NelderMeadOptions& options = {});

}  // namespace mesvar
