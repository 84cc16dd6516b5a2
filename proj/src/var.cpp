#include "mesvar/var.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace mesvar {

LaggedDesign build_lagged_design(const Eigen::MatrixXd& samples, int p) {
  const Eigen::Index t = samples.rows();
  const Eigen::Index r = samples.cols();
  if (p < 1) throw UsageError("lag order must be positive");
  if (t <= r * p + 1)
    throw DataError("need more than R*p + 1 = " + std::to_string(r * p + 1) +
                    " samples for a VAR(" + std::to_string(p) + ") fit, got " + std::to_string(t));
  const Eigen::Index rows = t - p;
  LaggedDesign design;
  design.response = samples.bottomRows(rows);
  design.regressors.resize(rows, r * p);
  for (int k = 1; k <= p; ++k)
    design.regressors.middleCols(static_cast<Eigen::Index>(k - 1) * r, r) =
        samples.middleRows(p - k, rows);
  return design;
}

namespace {

VarFit make_fit_from_coefficients(const Eigen::MatrixXd& beta, const LaggedDesign& design, int p,
                                  Eigen::Index r) {
  // beta is (R*p) x R, one column per target equation.
  VarFit fit;
  fit.lag_order = p;
  fit.t_effective = design.response.rows();
  fit.coefficients.resize(static_cast<std::size_t>(p));
  for (int k = 1; k <= p; ++k)
    fit.coefficients[static_cast<std::size_t>(k - 1)] =
        beta.middleRows(static_cast<Eigen::Index>(k - 1) * r, r).transpose();
  const Eigen::MatrixXd residuals = design.response - design.regressors * beta;
  fit.residual_covariance =
      residuals.transpose() * residuals / static_cast<double>(fit.t_effective);
  fit.residual_variances = fit.residual_covariance.diagonal();
  return fit;
}

}  // namespace

VarFit fit_var_ols(const MultiChannelSeries& series, int p) {
  const Eigen::Index r = series.samples.cols();
  const LaggedDesign design = build_lagged_design(series.samples, p);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.regressors);
  if (qr.rank() < design.regressors.cols())
    throw NumericalError("rank-deficient VAR regressor matrix (collinear channels): rank " +
                         std::to_string(qr.rank()) + " < " + std::to_string(design.regressors.cols()));
  const Eigen::MatrixXd beta = qr.solve(design.response);

  VarFit fit = make_fit_from_coefficients(beta, design, p, r);
  fit.support.assign(static_cast<std::size_t>(p),
                     std::vector<bool>(static_cast<std::size_t>(r * r), true));
  fit.free_coefficient_count = static_cast<std::size_t>(p) * static_cast<std::size_t>(r * r);
  return fit;
}

Eigen::VectorXd lasso_coordinate_descent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                         double lambda, const LassoOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  // Standardize columns to unit scale (1/n second moment); signals are
  // zero-mean so no centering.
  Eigen::VectorXd scale(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    scale[j] = std::sqrt(x.col(j).squaredNorm() * inv_n);
    if (!(scale[j] > 0.0)) throw NumericalError("constant regressor column in LASSO");
  }

  // Gram-based coordinate descent: gram = Xs'Xs / n has unit diagonal.
  Eigen::MatrixXd gram = x.transpose() * x * inv_n;
  gram = scale.cwiseInverse().asDiagonal() * gram * scale.cwiseInverse().asDiagonal();
  Eigen::VectorXd xty = (x.transpose() * y * inv_n).cwiseQuotient(scale);

  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd gram_b = Eigen::VectorXd::Zero(m);  // gram * b, kept incrementally
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double old = b[j];
      const double rho = xty[j] - gram_b[j] + old;  // partial residual correlation
      double next = 0.0;
      if (rho > lambda)
        next = rho - lambda;
      else if (rho < -lambda)
        next = rho + lambda;
      if (next != old) {
        gram_b += gram.col(j) * (next - old);
        b[j] = next;
        max_change = std::max(max_change, std::abs(next - old));
      }
    }
    if (max_change < options.tolerance) return b.cwiseQuotient(scale);
  }
  throw NumericalError("LASSO coordinate descent did not converge in " +
                       std::to_string(options.max_iterations) + " iterations");
}

namespace {

// Per-equation lambda by 5-fold CV over contiguous row blocks, using the
// one-standard-error rule on held-out MSE.
double cross_validate_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             const LassoOptions& options) {
  constexpr int kFolds = 5;
  constexpr int kGridSize = 40;
  const Eigen::Index n = x.rows();

  Eigen::VectorXd scale(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    scale[j] = std::sqrt(x.col(j).squaredNorm() / static_cast<double>(n));
  const double lambda_max =
      ((x.transpose() * y).cwiseQuotient(scale) / static_cast<double>(n)).cwiseAbs().maxCoeff();
  if (!(lambda_max > 0.0)) return 0.0;

  std::vector<double> grid(kGridSize);
  const double ratio = std::pow(1e-3, 1.0 / (kGridSize - 1));
  grid[0] = lambda_max;
  for (int i = 1; i < kGridSize; ++i) grid[static_cast<std::size_t>(i)] = grid[static_cast<std::size_t>(i - 1)] * ratio;

  Eigen::MatrixXd fold_mse(kFolds, kGridSize);
  for (int fold = 0; fold < kFolds; ++fold) {
    const Eigen::Index lo = n * fold / kFolds;
    const Eigen::Index hi = n * (fold + 1) / kFolds;
    const Eigen::Index held = hi - lo;
    Eigen::MatrixXd x_train(n - held, x.cols());
    Eigen::VectorXd y_train(n - held);
    x_train.topRows(lo) = x.topRows(lo);
    y_train.head(lo) = y.head(lo);
    x_train.bottomRows(n - hi) = x.bottomRows(n - hi);
    y_train.tail(n - hi) = y.tail(n - hi);
    for (int g = 0; g < kGridSize; ++g) {
      const Eigen::VectorXd b = lasso_coordinate_descent(x_train, y_train, grid[static_cast<std::size_t>(g)], options);
      fold_mse(fold, g) =
          (y.segment(lo, held) - x.middleRows(lo, held) * b).squaredNorm() / static_cast<double>(held);
    }
  }

  Eigen::VectorXd mean_mse = fold_mse.colwise().mean();
  Eigen::VectorXd se_mse(kGridSize);
  for (int g = 0; g < kGridSize; ++g) {
    const double var = (fold_mse.col(g).array() - mean_mse[g]).square().sum() / (kFolds - 1);
    se_mse[g] = std::sqrt(var / kFolds);
  }
  Eigen::Index best;
  mean_mse.minCoeff(&best);
  // Largest lambda whose mean CV error is within one SE of the minimum.
  const double bar = mean_mse[best] + se_mse[best];
  for (int g = 0; g < kGridSize; ++g)
    if (mean_mse[g] <= bar) return grid[static_cast<std::size_t>(g)];
  return grid[static_cast<std::size_t>(best)];
}

}  // namespace

VarFit fit_var_lassle(const MultiChannelSeries& series, int p, std::optional<double> lambda,
                      const LassoOptions& options) {
  if (lambda && *lambda < 0.0) throw UsageError("LASSO penalty must be nonnegative");
  const Eigen::Index r = series.samples.cols();
  const LaggedDesign design = build_lagged_design(series.samples, p);
  const Eigen::Index m = design.regressors.cols();

  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(m, r);
  std::vector<std::vector<bool>> support(static_cast<std::size_t>(p),
                                         std::vector<bool>(static_cast<std::size_t>(r * r), false));
  std::size_t free_count = 0;

  for (Eigen::Index eq = 0; eq < r; ++eq) {
    const Eigen::VectorXd y = design.response.col(eq);
    const double lam = lambda ? *lambda : cross_validate_lambda(design.regressors, y, options);
    const Eigen::VectorXd b_lasso = lasso_coordinate_descent(design.regressors, y, lam, options);

    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < m; ++j)
      if (b_lasso[j] != 0.0) active.push_back(j);

    if (!active.empty()) {
      Eigen::MatrixXd x_active(design.regressors.rows(), static_cast<Eigen::Index>(active.size()));
      for (std::size_t j = 0; j < active.size(); ++j)
        x_active.col(static_cast<Eigen::Index>(j)) = design.regressors.col(active[j]);
      const Eigen::VectorXd refit = x_active.colPivHouseholderQr().solve(y);
      for (std::size_t j = 0; j < active.size(); ++j)
        beta(active[j], eq) = refit[static_cast<Eigen::Index>(j)];
    }
    for (Eigen::Index j : active) {
      const int k = static_cast<int>(j / r);       // lag index (0-based)
      const Eigen::Index source = j % r;
      support[static_cast<std::size_t>(k)][static_cast<std::size_t>(eq * r + source)] = true;
      ++free_count;
    }
  }

  VarFit fit = make_fit_from_coefficients(beta, design, p, r);
  fit.support = std::move(support);
  fit.free_coefficient_count = free_count;
  return fit;
}

double InformationCriteria::value(const std::string& name) const {
  if (name == "aic") return aic;
  if (name == "bic") return bic;
  if (name == "hq") return hq;
  throw UsageError("unknown information criterion '" + name + "' (use aic, bic or hq)");
}

InformationCriteria information_criteria(const VarFit& fit) {
  const double t_eff = static_cast<double>(fit.t_effective);
  const double k = static_cast<double>(fit.free_coefficient_count);
  Eigen::LLT<Eigen::MatrixXd> llt(fit.residual_covariance);
  double log_det;
  if (llt.info() == Eigen::Success) {
    log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  } else {
    // Not SPD within LLT tolerance; fall back to LU and demand positivity.
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(fit.residual_covariance);
    const double det = lu.determinant();
    if (!(det > 0.0) || !std::isfinite(det))
      throw NumericalError("singular residual covariance; information criteria undefined");
    log_det = std::log(det);
  }
  InformationCriteria ic;
  ic.aic = log_det + 2.0 * k / t_eff;
  ic.bic = log_det + k * std::log(t_eff) / t_eff;
  ic.hq = log_det + 2.0 * k * std::log(std::log(t_eff)) / t_eff;
  return ic;
}

LagSelectionReport select_lag(const StudyDataset& dataset, int p_max, LagEstimator estimator) {
  if (p_max < 1) throw UsageError("p_max must be positive");
  LagSelectionReport report;
  report.criteria = {"aic", "bic", "hq"};

  for (const auto& subject : dataset.subjects) {
    std::vector<InformationCriteria> ics;
    try {
      for (int p = 1; p <= p_max; ++p) {
        const VarFit fit = estimator == LagEstimator::kOls
                               ? fit_var_ols(subject.series, p)
                               : fit_var_lassle(subject.series, p);
        ics.push_back(information_criteria(fit));
      }
    } catch (const Error& e) {
      report.failed_subjects.push_back(subject.subject_id + ": " + e.what());
      continue;
    }
    report.subject_ids.push_back(subject.subject_id);
    std::vector<int> row;
    for (const auto& criterion : report.criteria) {
      int best_p = 1;
      double best_value = std::numeric_limits<double>::infinity();
      for (int p = 1; p <= p_max; ++p) {
        const double v = ics[static_cast<std::size_t>(p - 1)].value(criterion);
        report.table.push_back({subject.subject_id, criterion, p, v});
        if (v < best_value) {
          best_value = v;
          best_p = p;
        }
      }
      row.push_back(best_p);
    }
    report.selected.push_back(std::move(row));
  }

  report.modal_selection.assign(report.criteria.size(), 0);
  for (std::size_t c = 0; c < report.criteria.size(); ++c) {
    std::map<int, int> counts;
    for (const auto& row : report.selected) ++counts[row[c]];
    int best_p = 0, best_count = -1;
    for (const auto& [p, count] : counts) {
      if (count > best_count) {  // ties resolve to the smaller lag
        best_count = count;
        best_p = p;
      }
    }
    report.modal_selection[c] = best_p;
  }
  return report;
}

Eigen::MatrixXd companion_matrix(const std::vector<Eigen::MatrixXd>& coefficients) {
  if (coefficients.empty()) throw UsageError("companion matrix needs at least one coefficient matrix");
  const Eigen::Index r = coefficients.front().rows();
  for (const auto& phi : coefficients)
    if (phi.rows() != r || phi.cols() != r)
      throw DataError("coefficient matrices must all be the same square size");
  const auto p = static_cast<Eigen::Index>(coefficients.size());
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p * r, p * r);
  for (Eigen::Index k = 0; k < p; ++k)
    companion.block(0, k * r, r, r) = coefficients[static_cast<std::size_t>(k)];
  if (p > 1)
    companion.block(r, 0, (p - 1) * r, (p - 1) * r).setIdentity();
  return companion;
}

double companion_spectral_radius(const std::vector<Eigen::MatrixXd>& coefficients) {
  const Eigen::MatrixXd companion = companion_matrix(coefficients);
  const Eigen::VectorXcd eigenvalues = Eigen::EigenSolver<Eigen::MatrixXd>(companion, false).eigenvalues();
  return eigenvalues.cwiseAbs().maxCoeff();
}

}  // namespace mesvar
