#include "mesvar/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace mesvar {

NelderMeadResult minimize_nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                      const Eigen::VectorXd& start,
                                      const NelderMeadOptions& options) {
  const int dim = static_cast<int>(start.size());
  const int max_evals = options.max_evaluations > 0 ? options.max_evaluations : 5000 * dim;

  NelderMeadResult result;
  result.x = start;
  if (dim == 0) {
    result.value = f(start);
    result.evaluations = 1;
    result.converged = true;
    return result;
  }

  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> values;
  simplex.reserve(static_cast<std::size_t>(dim) + 1);
  simplex.push_back(start);
  for (int i = 0; i < dim; ++i) {
    Eigen::VectorXd v = start;
    v[i] += options.initial_step * std::max(std::abs(start[i]), 0.1);
    simplex.push_back(v);
  }
  int evals = 0;
  for (const auto& v : simplex) {
    values.push_back(f(v));
    ++evals;
  }

  std::vector<int> order(simplex.size());
  auto sort_order = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)]; });
  };

  Eigen::VectorXd centroid(dim), reflected(dim), trial(dim);
  while (evals < max_evals) {
    sort_order();
    const int best = order.front();
    const int worst = order.back();
    const int second_worst = order[order.size() - 2];

    const double spread = values[static_cast<std::size_t>(worst)] - values[static_cast<std::size_t>(best)];
    double diameter = 0.0;
    for (const auto& v : simplex)
      diameter = std::max(diameter, (v - simplex[static_cast<std::size_t>(best)]).lpNorm<Eigen::Infinity>());
    if (spread < options.deviance_tolerance && diameter < options.simplex_tolerance) {
      result.converged = true;
      break;
    }

    centroid.setZero();
    for (int i : order)
      if (i != worst) centroid += simplex[static_cast<std::size_t>(i)];
    centroid /= static_cast<double>(dim);

    reflected = centroid + (centroid - simplex[static_cast<std::size_t>(worst)]);
    const double f_reflected = f(reflected);
    ++evals;

    if (f_reflected < values[static_cast<std::size_t>(best)]) {
      trial = centroid + 2.0 * (centroid - simplex[static_cast<std::size_t>(worst)]);
      const double f_expanded = f(trial);
      ++evals;
      if (f_expanded < f_reflected) {
        simplex[static_cast<std::size_t>(worst)] = trial;
        values[static_cast<std::size_t>(worst)] = f_expanded;
      } else {
        simplex[static_cast<std::size_t>(worst)] = reflected;
        values[static_cast<std::size_t>(worst)] = f_reflected;
      }
    } else if (f_reflected < values[static_cast<std::size_t>(second_worst)]) {
      simplex[static_cast<std::size_t>(worst)] = reflected;
      values[static_cast<std::size_t>(worst)] = f_reflected;
    } else {
      const bool outside = f_reflected < values[static_cast<std::size_t>(worst)];
      if (outside)
        trial = centroid + 0.5 * (reflected - centroid);
      else
        trial = centroid - 0.5 * (centroid - simplex[static_cast<std::size_t>(worst)]);
      const double f_contracted = f(trial);
      ++evals;
      const double bar = outside ? f_reflected : values[static_cast<std::size_t>(worst)];
      if (f_contracted < bar) {
        simplex[static_cast<std::size_t>(worst)] = trial;
        values[static_cast<std::size_t>(worst)] = f_contracted;
      } else {
        for (int i : order) {
          if (i == best) continue;
          simplex[static_cast<std::size_t>(i)] =
              simplex[static_cast<std::size_t>(best)] +
              0.5 * (simplex[static_cast<std::size_t>(i)] - simplex[static_cast<std::size_t>(best)]);
          values[static_cast<std::size_t>(i)] = f(simplex[static_cast<std::size_t>(i)]);
          ++evals;
        }
      }
    }
  }

  sort_order();
  result.x = simplex[static_cast<std::size_t>(order.front())];
  result.value = values[static_cast<std::size_t>(order.front())];
  result.evaluations = evals;
  return result;
}

}  // namespace mesvar
