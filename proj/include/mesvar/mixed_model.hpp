#pragma once

#include "mesvar/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mesvar {

// Identifies one fixed-effect column / random-effect component: the lag-k
// influence of `source` on the target channel, within `group`.
struct CoefficientLabel {
  int group = 0;   // 1 or 2
  int source = 0;  // 0-based channel index
  int lag = 0;     // 1-based
  bool operator==(const CoefficientLabel&) const = default;
};

// Stacked mixed-model regression for one target channel:
//   y = X beta + Z b + eps
// Rows are (subject, time) ordered; fixed columns are the per-group copies
// of the lagged regressors, and each subject's random block reuses the same
// regressors. The per-subject blocks are stored once; the dense X and Z
// views exist for oracle-scale problems.
class MixedDesign {
 public:
  static MixedDesign build(const StudyDataset& dataset, Eigen::Index target_channel, int p);

  Eigen::Index n_rows() const { return n_rows_; }
  Eigen::Index n_subjects() const { return static_cast<Eigen::Index>(blocks_.size()); }
  Eigen::Index block_width() const { return block_width_; }  // m = R * p
  Eigen::Index n_fixed() const { return 2 * block_width_; }  // G = 2 group blocks
  int lag_order() const { return lag_order_; }
  Eigen::Index target_channel() const { return target_channel_; }
  int group_of(Eigen::Index subject) const { return groups_[static_cast<std::size_t>(subject)]; }
  const std::vector<CoefficientLabel>& fixed_labels() const { return fixed_labels_; }
  const std::vector<std::string>& channel_names() const { return channel_names_; }
  const std::vector<std::string>& subject_ids() const { return subject_ids_; }

  const Eigen::MatrixXd& block_regressors(Eigen::Index subject) const {
    return blocks_[static_cast<std::size_t>(subject)];
  }
  const Eigen::VectorXd& block_response(Eigen::Index subject) const {
    return responses_[static_cast<std::size_t>(subject)];
  }

  // Dense views (row order = subject order); intended for small instances
  // and tests. X is N x 2m, Z is N x (n_subjects * m).
  Eigen::VectorXd dense_response() const;
  Eigen::MatrixXd dense_fixed_design() const;
  Eigen::MatrixXd dense_random_design() const;

  // Design with fixed-effect columns removed (random structure unchanged);
  // used for likelihood-ratio tests of nested fixed structures.
  MixedDesign without_fixed_columns(const std::vector<CoefficientLabel>& excluded) const;
  const std::vector<Eigen::Index>& kept_fixed_columns() const { return kept_fixed_; }

 private:
  std::vector<Eigen::MatrixXd> blocks_;     // per subject, (T_i - p) x m
  std::vector<Eigen::VectorXd> responses_;  // per subject, length T_i - p
  std::vector<int> groups_;
  std::vector<std::string> subject_ids_;
  std::vector<std::string> channel_names_;
  std::vector<CoefficientLabel> fixed_labels_;
  std::vector<Eigen::Index> kept_fixed_;  // indices into the full 2m set
  Eigen::Index n_rows_ = 0;
  Eigen::Index block_width_ = 0;
  Eigen::Index target_channel_ = 0;
  int lag_order_ = 0;
};

enum class LikelihoodMode { kReml, kMl };

// -2 x profiled (restricted) log-likelihood of the Gaussian mixed model at
// variance ratios theta (one entry per group x (source, lag) component, the
// random-slope SD in units of the residual SD). beta and sigma^2 are
// profiled out in closed form through the block-sparse penalized normal
// equations. Even in each theta component, so the theta >= 0 constraint is
// handled by sign-folding.
double profiled_deviance(const MixedDesign& design, const Eigen::VectorXd& theta,
                         LikelihoodMode mode);

// The GLS fixed-effect solution at a fixed theta (beta profiled out of the
// deviance), without optimizing.
Eigen::VectorXd profiled_beta(const MixedDesign& design, const Eigen::VectorXd& theta,
                              LikelihoodMode mode);

struct VarianceComponents {
  Eigen::MatrixXd tau;  // G x m random-slope SDs (response units)
  double sigma = 0.0;   // residual SD
};

struct CoefficientInference {
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool normal_fallback = false;  // set when the estimated df was not positive
};

struct ConvergenceInfo {
  bool converged = false;
  int evaluations = 0;
  double gradient_norm = 0.0;         // centered FD gradient at the optimum
  double scaled_gradient_norm = 0.0;  // gradient_norm / (1 + |deviance|)
  std::vector<int> boundary_components;  // theta indices estimated at zero
};

struct MixedVarFit {
  std::string band;
  Eigen::Index target_channel = 0;
  int lag_order = 0;
  LikelihoodMode mode = LikelihoodMode::kReml;

  Eigen::VectorXd beta;                       // 2m fixed effects, group-major
  std::vector<CoefficientLabel> beta_labels;
  Eigen::MatrixXd beta_cov;                   // 2m x 2m at the optimum
  VarianceComponents components;
  Eigen::VectorXd theta;                      // folded (nonnegative) optimum
  std::vector<Eigen::VectorXd> blups;         // per subject, length m (response units)
  double deviance = 0.0;                      // REML or ML -2 log-likelihood
  ConvergenceInfo convergence;

  // Satterthwaite ingredients: covariance of (theta, sigma) estimates and
  // the FD gradient of each SE^2 in those parameters. Empty when inference
  // was not requested.
  Eigen::MatrixXd vc_information;
  Eigen::MatrixXd se2_gradients;  // n_fixed x (dim theta + 1)
  std::vector<CoefficientInference> inference;

  Eigen::Index coefficient_index(int group, int source, int lag) const;
};

struct FitOptions {
  LikelihoodMode mode = LikelihoodMode::kReml;
  bool compute_inference = true;   // Satterthwaite machinery (FD Hessian)
  bool force_tau_zero = false;     // classical fixed-effects-only fit
  std::vector<double> multistart = {0.1, 1.0};
  double deviance_tolerance = 1e-8;
  double simplex_tolerance = 1e-6;
  int max_evaluations = 0;           // 0 = 5000 * dim
  double boundary_tolerance = 1e-4;  // |theta| below this reports tau = 0
  double fd_relative_step = 1e-4;
};

// One-stage REML (or ML) estimation: minimizes the profiled deviance over
// theta by multi-start Nelder-Mead, then recovers beta, sigma, BLUPs,
// beta_cov and, when requested, the Satterthwaite information.
MixedVarFit fit_mixed_model(const MixedDesign& design, const FitOptions& options = {});
inline MixedVarFit fit_reml(const MixedDesign& design, const FitOptions& options = {}) {
  FitOptions opts = options;
  opts.mode = LikelihoodMode::kReml;
  return fit_mixed_model(design, opts);
}

// ML fits of the full design and of the design with the named fixed columns
// removed, for likelihood-ratio testing (REML deviances are not comparable
// across fixed structures).
struct NestedMlFits {
  MixedVarFit full;
  MixedVarFit reduced;
};
NestedMlFits fit_ml_nested(const MixedDesign& design,
                           const std::vector<CoefficientLabel>& excluded,
                           const FitOptions& options = {});

// Satterthwaite t-tests for every fixed effect of a converged fit.
std::vector<CoefficientInference> fixed_effect_inference(const MixedVarFit& fit);

}  // namespace mesvar
