#pragma once

#include "mesvar/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mesvar {

// Lagged regression layout shared by the single-subject and mixed-model
// fits: response row t is Y(t), regressor column (k-1)*R + r' is Y_{r'}(t-k).
struct LaggedDesign {
  Eigen::MatrixXd response;    // (T-p) x R
  Eigen::MatrixXd regressors;  // (T-p) x (R*p)
};
LaggedDesign build_lagged_design(const Eigen::MatrixXd& samples, int p);

struct VarFit {
  int lag_order = 0;
  std::vector<Eigen::MatrixXd> coefficients;  // Phi_1..Phi_p, each R x R; (r, r') = effect of r' on r
  Eigen::MatrixXd residual_covariance;        // R x R, ML denominator T_eff
  Eigen::VectorXd residual_variances;         // per-equation diagonal
  Eigen::Index t_effective = 0;
  std::vector<std::vector<bool>> support;     // per lag, (r, r') free/selected; all-true for OLS
  std::size_t free_coefficient_count = 0;

  double coefficient(int lag, Eigen::Index target, Eigen::Index source) const {
    return coefficients[static_cast<std::size_t>(lag - 1)](target, source);
  }
};

// Equation-by-equation least squares of Y(t) on [Y(t-1)..Y(t-p)], no
// intercept (signals are zero-mean upstream). Throws NumericalError on a
// rank-deficient regressor matrix.
VarFit fit_var_ols(const MultiChannelSeries& series, int p);

// LASSO objective used for support selection, per equation:
//   (1/(2T)) ||y - X b||^2 + lambda ||b||_1
// with regressors standardized to unit in-sample scale. Returns coefficients
// on the original scale.
struct LassoOptions {
  double tolerance = 1e-7;  // max coefficient change per sweep
  int max_iterations = 10000;
};
Eigen::VectorXd lasso_coordinate_descent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                         double lambda, const LassoOptions& options = {});

// Two-stage LASSLE: LASSO selects the support, unpenalized least squares
// refits on it; coefficients outside the support are exactly zero. When
// lambda is not given it is chosen per equation by 5-fold cross-validation
// over contiguous time blocks (one-standard-error rule).
VarFit fit_var_lassle(const MultiChannelSeries& series, int p,
                      std::optional<double> lambda = std::nullopt,
                      const LassoOptions& options = {});

struct InformationCriteria {
  double aic = 0.0;
  double bic = 0.0;
  double hq = 0.0;
  double value(const std::string& name) const;
};
// AIC = ln det(Sigma) + 2k/T, BIC = ln det(Sigma) + k ln(T)/T,
// HQ = ln det(Sigma) + 2k ln(ln T)/T with k the free coefficient count.
InformationCriteria information_criteria(const VarFit& fit);

enum class LagEstimator { kOls, kLassle };

struct LagSelectionRow {
  std::string subject_id;
  std::string criterion;
  int lag = 0;
  double value = 0.0;
};

struct LagSelectionReport {
  std::vector<LagSelectionRow> table;  // p_max rows per subject per criterion
  // selected[subject][criterion] = argmin lag
  std::vector<std::string> subject_ids;
  std::vector<std::string> criteria;
  std::vector<std::vector<int>> selected;      // subject x criterion
  std::vector<int> modal_selection;            // per criterion, mode across subjects
  std::vector<std::string> failed_subjects;    // fit errors, reported without aborting
};

LagSelectionReport select_lag(const StudyDataset& dataset, int p_max,
                              LagEstimator estimator = LagEstimator::kOls);

// Spectral radius of the pR x pR companion matrix; < 1 iff the VAR is
// causal/stationary.
double companion_spectral_radius(const std::vector<Eigen::MatrixXd>& coefficients);
Eigen::MatrixXd companion_matrix(const std::vector<Eigen::MatrixXd>& coefficients);

}  // namespace mesvar
