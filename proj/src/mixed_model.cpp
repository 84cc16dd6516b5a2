#include "mesvar/mixed_model.hpp"

#include "mesvar/nelder_mead.hpp"
#include "mesvar/stats.hpp"
#include "mesvar/var.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

namespace mesvar {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

// ---------------------------------------------------------------------------
// MixedDesign

MixedDesign MixedDesign::build(const StudyDataset& dataset, Eigen::Index target_channel, int p) {
  if (dataset.subjects.empty()) throw DataError("dataset has no subjects");
  const auto r = static_cast<Eigen::Index>(dataset.channel_names.size());
  if (target_channel < 0 || target_channel >= r)
    throw UsageError("target channel index " + std::to_string(target_channel) + " out of range");
  if (dataset.count_in_group(1) == 0 || dataset.count_in_group(2) == 0)
    throw DataError("mixed design needs at least one subject in each group");

  MixedDesign design;
  design.block_width_ = r * p;
  design.target_channel_ = target_channel;
  design.lag_order_ = p;
  design.channel_names_ = dataset.channel_names;

  for (const auto& subject : dataset.subjects) {
    if (subject.series.samples.cols() != r)
      throw DataError("subject '" + subject.subject_id + "' channel count mismatch");
    LaggedDesign lagged = build_lagged_design(subject.series.samples, p);
    design.responses_.push_back(lagged.response.col(target_channel));
    design.blocks_.push_back(std::move(lagged.regressors));
    design.groups_.push_back(subject.group_index);
    design.subject_ids_.push_back(subject.subject_id);
    design.n_rows_ += design.responses_.back().size();
  }

  for (int g = 1; g <= 2; ++g)
    for (int k = 1; k <= p; ++k)
      for (int source = 0; source < r; ++source)
        design.fixed_labels_.push_back({g, source, k});
  design.kept_fixed_.resize(design.fixed_labels_.size());
  for (std::size_t i = 0; i < design.kept_fixed_.size(); ++i)
    design.kept_fixed_[i] = static_cast<Eigen::Index>(i);
  return design;
}

Eigen::VectorXd MixedDesign::dense_response() const {
  Eigen::VectorXd y(n_rows_);
  Eigen::Index row = 0;
  for (const auto& resp : responses_) {
    y.segment(row, resp.size()) = resp;
    row += resp.size();
  }
  return y;
}

Eigen::MatrixXd MixedDesign::dense_fixed_design() const {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n_rows_, static_cast<Eigen::Index>(fixed_labels_.size()));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Eigen::Index rows = blocks_[i].rows();
    const int group = groups_[i];
    for (std::size_t col = 0; col < fixed_labels_.size(); ++col) {
      if (fixed_labels_[col].group != group) continue;
      const Eigen::Index m_col = kept_fixed_[col] % block_width_;
      x.block(row, static_cast<Eigen::Index>(col), rows, 1) = blocks_[i].col(m_col);
    }
    row += rows;
  }
  return x;
}

Eigen::MatrixXd MixedDesign::dense_random_design() const {
  Eigen::MatrixXd z =
      Eigen::MatrixXd::Zero(n_rows_, static_cast<Eigen::Index>(blocks_.size()) * block_width_);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    z.block(row, static_cast<Eigen::Index>(i) * block_width_, blocks_[i].rows(), block_width_) =
        blocks_[i];
    row += blocks_[i].rows();
  }
  return z;
}

MixedDesign MixedDesign::without_fixed_columns(const std::vector<CoefficientLabel>& excluded) const {
  for (const auto& label : excluded) {
    if (std::find(fixed_labels_.begin(), fixed_labels_.end(), label) == fixed_labels_.end())
      throw UsageError("excluded fixed column (group " + std::to_string(label.group) + ", source " +
                       std::to_string(label.source) + ", lag " + std::to_string(label.lag) +
                       ") is not in the design");
  }
  MixedDesign reduced = *this;
  reduced.fixed_labels_.clear();
  reduced.kept_fixed_.clear();
  for (std::size_t i = 0; i < fixed_labels_.size(); ++i) {
    if (std::find(excluded.begin(), excluded.end(), fixed_labels_[i]) != excluded.end()) continue;
    reduced.fixed_labels_.push_back(fixed_labels_[i]);
    reduced.kept_fixed_.push_back(kept_fixed_[i]);
  }
  return reduced;
}

// ---------------------------------------------------------------------------
// Profiled deviance evaluator
//
// All linear algebra happens on per-subject sufficient statistics: Z is
// block diagonal by subject and the group fixed-effect columns coincide with
// the random-effect regressors on that group's rows, so the penalized normal
// equations reduce to m x m subject blocks plus one Schur block per group.

namespace {

struct DevianceParts {
  double logdet_lq = 0.0;
  double logdet_rx = 0.0;
  double pwrss = 0.0;
};

class Evaluator {
 public:
  explicit Evaluator(const MixedDesign& design) : design_(design) {
    m_ = design.block_width();
    n_subjects_ = design.n_subjects();
    n_rows_ = design.n_rows();

    for (int g = 0; g < 2; ++g) kept_[g].clear();
    for (std::size_t i = 0; i < design.fixed_labels().size(); ++i) {
      const int g = design.fixed_labels()[i].group - 1;
      kept_[static_cast<std::size_t>(g)].push_back(design.kept_fixed_columns()[i] % m_);
    }
    p_fixed_ = static_cast<Eigen::Index>(kept_[0].size() + kept_[1].size());
    if (n_rows_ <= p_fixed_)
      throw DataError("mixed design has fewer rows than fixed effects");

    yty_ = 0.0;
    s_.reserve(static_cast<std::size_t>(n_subjects_));
    s_kept_cols_.reserve(static_cast<std::size_t>(n_subjects_));
    v_.reserve(static_cast<std::size_t>(n_subjects_));
    for (int g = 0; g < 2; ++g) {
      s_group_[g] = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kept_[g].size()),
                                          static_cast<Eigen::Index>(kept_[g].size()));
      xty_group_[g] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kept_[g].size()));
    }
    for (Eigen::Index i = 0; i < n_subjects_; ++i) {
      const Eigen::MatrixXd& w = design.block_regressors(i);
      const Eigen::VectorXd& y = design.block_response(i);
      Eigen::MatrixXd s = w.transpose() * w;
      Eigen::VectorXd v = w.transpose() * y;
      yty_ += y.squaredNorm();
      const int g = design.group_of(i) - 1;
      const auto& cols = kept_[static_cast<std::size_t>(g)];
      Eigen::MatrixXd s_cols(m_, static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) s_cols.col(static_cast<Eigen::Index>(c)) = s.col(cols[c]);
      for (std::size_t a = 0; a < cols.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b)
          s_group_[g](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += s(cols[a], cols[b]);
      for (std::size_t a = 0; a < cols.size(); ++a)
        xty_group_[g](static_cast<Eigen::Index>(a)) += v(cols[a]);
      s_.push_back(std::move(s));
      s_kept_cols_.push_back(std::move(s_cols));
      v_.push_back(std::move(v));
      groups0_.push_back(g);
    }

    // Hot-loop workspace.
    a_.resize(m_, m_);
    llt_ = Eigen::LLT<Eigen::MatrixXd>(m_);
    const Eigen::Index k_max = std::max(kept_[0].size(), kept_[1].size());
    t_.resize(m_, static_cast<Eigen::Index>(k_max));
    c_.resize(m_);
    for (int g = 0; g < 2; ++g) {
      schur_[g].resizeLike(s_group_[g]);
      rhs_[g].resizeLike(xty_group_[g]);
      group_llt_[g] = Eigen::LLT<Eigen::MatrixXd>(static_cast<Eigen::Index>(kept_[g].size()));
    }
  }

  Eigen::Index theta_dim() const { return 2 * m_; }
  Eigen::Index n_rows() const { return n_rows_; }
  Eigen::Index p_fixed() const { return p_fixed_; }
  Eigen::Index m() const { return m_; }
  const MixedDesign& design() const { return design_; }

  // Factor the penalized system at theta; fills schur_/rhs_/logdets. Leaves
  // group Cholesky factors ready for the downstream solves.
  DevianceParts factor(const Eigen::VectorXd& theta) {
    DevianceParts parts;
    std::array<Eigen::VectorXd, 2> d;
    for (int g = 0; g < 2; ++g) {
      d[g] = theta.segment(static_cast<Eigen::Index>(g) * m_, m_).cwiseAbs();
      schur_[g] = s_group_[g];
      rhs_[g] = xty_group_[g];
    }
    double c_sq = 0.0;
    factors_l_.clear();
    factors_t_.clear();
    factors_c_.clear();
    for (Eigen::Index i = 0; i < n_subjects_; ++i) {
      const int g = groups0_[static_cast<std::size_t>(i)];
      const Eigen::VectorXd& dg = d[g];
      a_ = dg * dg.transpose();
      a_.array() *= s_[static_cast<std::size_t>(i)].array();
      a_.diagonal().array() += 1.0;
      llt_.compute(a_);
      if (llt_.info() != Eigen::Success)
        throw NumericalError("singular subject block " +
                             design_.subject_ids()[static_cast<std::size_t>(i)] +
                             " in penalized system");
      parts.logdet_lq += 2.0 * llt_.matrixLLT().diagonal().array().log().sum();

      const auto k_g = static_cast<Eigen::Index>(kept_[g].size());
      auto t_block = t_.leftCols(k_g);
      t_block = dg.asDiagonal() * s_kept_cols_[static_cast<std::size_t>(i)];
      llt_.matrixL().solveInPlace(t_block);
      c_ = dg.cwiseProduct(v_[static_cast<std::size_t>(i)]);
      llt_.matrixL().solveInPlace(c_);

      schur_[g].selfadjointView<Eigen::Lower>().rankUpdate(t_block.transpose(), -1.0);
      rhs_[g].noalias() -= t_block.transpose() * c_;
      c_sq += c_.squaredNorm();

      if (keep_factors_) {
        factors_l_.push_back(llt_.matrixLLT());
        factors_t_.push_back(t_block);
        factors_c_.push_back(c_);
      }
    }

    double cb_sq = 0.0;
    for (int g = 0; g < 2; ++g) {
      if (kept_[g].empty()) continue;
      group_llt_[g].compute(schur_[g]);
      if (group_llt_[g].info() != Eigen::Success)
        throw NumericalError("singular group-" + std::to_string(g + 1) +
                             " fixed-effect block in penalized system");
      parts.logdet_rx += 2.0 * group_llt_[g].matrixLLT().diagonal().array().log().sum();
      cbeta_[g] = rhs_[g];
      group_llt_[g].matrixL().solveInPlace(cbeta_[g]);
      cb_sq += cbeta_[g].squaredNorm();
    }

    parts.pwrss = yty_ - c_sq - cb_sq;
    if (!(parts.pwrss > 0.0) || !std::isfinite(parts.pwrss))
      throw NumericalError("penalized residual sum of squares is not positive");
    return parts;
  }

  double deviance(const Eigen::VectorXd& theta, LikelihoodMode mode) {
    const DevianceParts parts = factor(theta);
    return compose(parts, mode);
  }

  double compose(const DevianceParts& parts, LikelihoodMode mode) const {
    if (mode == LikelihoodMode::kReml) {
      const double df = static_cast<double>(n_rows_ - p_fixed_);
      return parts.logdet_lq + parts.logdet_rx + df * (1.0 + std::log(kTwoPi * parts.pwrss / df));
    }
    const double n = static_cast<double>(n_rows_);
    return parts.logdet_lq + n * (1.0 + std::log(kTwoPi * parts.pwrss / n));
  }

  struct Solution {
    DevianceParts parts;
    double sigma2 = 0.0;
    Eigen::VectorXd beta;                  // kept-column layout
    Eigen::MatrixXd beta_cov;
    std::vector<Eigen::VectorXd> u;        // spherical random effects per subject
  };

  Solution solve(const Eigen::VectorXd& theta, LikelihoodMode mode) {
    keep_factors_ = true;
    Solution sol;
    sol.parts = factor(theta);
    keep_factors_ = false;

    const double denom = mode == LikelihoodMode::kReml
                             ? static_cast<double>(n_rows_ - p_fixed_)
                             : static_cast<double>(n_rows_);
    sol.sigma2 = sol.parts.pwrss / denom;

    // beta per group: backward solve of the Schur factors.
    std::array<Eigen::VectorXd, 2> beta_g;
    for (int g = 0; g < 2; ++g) {
      beta_g[g] = cbeta_[g];
      if (!kept_[g].empty()) group_llt_[g].matrixU().solveInPlace(beta_g[g]);
    }
    sol.beta.resize(p_fixed_);
    sol.beta << beta_g[0], beta_g[1];

    sol.beta_cov = Eigen::MatrixXd::Zero(p_fixed_, p_fixed_);
    Eigen::Index offset = 0;
    for (int g = 0; g < 2; ++g) {
      const auto k_g = static_cast<Eigen::Index>(kept_[g].size());
      if (k_g == 0) continue;
      sol.beta_cov.block(offset, offset, k_g, k_g) =
          sol.sigma2 *
          group_llt_[g].solve(Eigen::MatrixXd::Identity(k_g, k_g));
      offset += k_g;
    }

    // u_i from the stored subject factors: L_i' u_i = c_i - T_i beta_g.
    sol.u.reserve(static_cast<std::size_t>(n_subjects_));
    for (Eigen::Index i = 0; i < n_subjects_; ++i) {
      const int g = groups0_[static_cast<std::size_t>(i)];
      Eigen::VectorXd ui = factors_c_[static_cast<std::size_t>(i)];
      ui.noalias() -= factors_t_[static_cast<std::size_t>(i)] * beta_g[g];
      factors_l_[static_cast<std::size_t>(i)]
          .triangularView<Eigen::Lower>()
          .transpose()
          .solveInPlace(ui);
      sol.u.push_back(std::move(ui));
    }
    return sol;
  }

  // diag of sigma^2-free fixed-effect covariance (Schur^{-1}) at theta; used
  // by the Satterthwaite finite differences.
  Eigen::VectorXd fixed_cov_diag(const Eigen::VectorXd& theta) {
    factor(theta);
    Eigen::VectorXd diag(p_fixed_);
    Eigen::Index offset = 0;
    for (int g = 0; g < 2; ++g) {
      const auto k_g = static_cast<Eigen::Index>(kept_[g].size());
      if (k_g == 0) continue;
      diag.segment(offset, k_g) =
          group_llt_[g].solve(Eigen::MatrixXd::Identity(k_g, k_g)).diagonal();
      offset += k_g;
    }
    return diag;
  }

 private:
  const MixedDesign& design_;
  Eigen::Index m_ = 0, n_subjects_ = 0, n_rows_ = 0, p_fixed_ = 0;
  double yty_ = 0.0;
  std::vector<Eigen::MatrixXd> s_;
  std::vector<Eigen::MatrixXd> s_kept_cols_;
  std::vector<Eigen::VectorXd> v_;
  std::vector<int> groups0_;
  std::array<std::vector<Eigen::Index>, 2> kept_;
  std::array<Eigen::MatrixXd, 2> s_group_;
  std::array<Eigen::VectorXd, 2> xty_group_;

  // workspace
  Eigen::MatrixXd a_, t_;
  Eigen::VectorXd c_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::array<Eigen::MatrixXd, 2> schur_;
  std::array<Eigen::VectorXd, 2> rhs_;
  std::array<Eigen::VectorXd, 2> cbeta_;
  std::array<Eigen::LLT<Eigen::MatrixXd>, 2> group_llt_;
  bool keep_factors_ = false;
  std::vector<Eigen::MatrixXd> factors_l_, factors_t_;
  std::vector<Eigen::VectorXd> factors_c_;
};

}  // namespace

double profiled_deviance(const MixedDesign& design, const Eigen::VectorXd& theta,
                         LikelihoodMode mode) {
  Evaluator evaluator(design);
  if (theta.size() != evaluator.theta_dim())
    throw UsageError("theta has " + std::to_string(theta.size()) + " entries, expected " +
                     std::to_string(evaluator.theta_dim()));
  return evaluator.deviance(theta, mode);
}

Eigen::VectorXd profiled_beta(const MixedDesign& design, const Eigen::VectorXd& theta,
                              LikelihoodMode mode) {
  Evaluator evaluator(design);
  if (theta.size() != evaluator.theta_dim())
    throw UsageError("theta has " + std::to_string(theta.size()) + " entries, expected " +
                     std::to_string(evaluator.theta_dim()));
  return evaluator.solve(theta, mode).beta;
}

Eigen::Index MixedVarFit::coefficient_index(int group, int source, int lag) const {
  for (std::size_t i = 0; i < beta_labels.size(); ++i) {
    const auto& label = beta_labels[i];
    if (label.group == group && label.source == source && label.lag == lag)
      return static_cast<Eigen::Index>(i);
  }
  throw UsageError("coefficient (group " + std::to_string(group) + ", source " +
                   std::to_string(source) + ", lag " + std::to_string(lag) + ") not in fit");
}

namespace {

// Hessian of the (theta, sigma) deviance at the optimum via central finite
// differences in theta; the sigma row/column is analytic because sigma enters
// as B log(2 pi sigma^2) + pwrss(theta)/sigma^2.
struct VcInformation {
  Eigen::MatrixXd covariance;  // (dim+1) x (dim+1), order (theta..., sigma)
  bool degenerate = false;     // pseudo-inverse was needed
};

VcInformation variance_component_information(Evaluator& evaluator, const Eigen::VectorXd& theta,
                                             LikelihoodMode mode, double sigma2,
                                             double fd_relative_step) {
  const auto dim = static_cast<Eigen::Index>(theta.size());
  const double b_count = mode == LikelihoodMode::kReml
                             ? static_cast<double>(evaluator.n_rows() - evaluator.p_fixed())
                             : static_cast<double>(evaluator.n_rows());
  const double sigma = std::sqrt(sigma2);

  auto a_of = [&](const DevianceParts& parts) {
    return mode == LikelihoodMode::kReml ? parts.logdet_lq + parts.logdet_rx : parts.logdet_lq;
  };

  Eigen::VectorXd step(dim);
  for (Eigen::Index j = 0; j < dim; ++j)
    step[j] = fd_relative_step * std::max(std::abs(theta[j]), 0.1);

  const DevianceParts center = evaluator.factor(theta);
  const double a0 = a_of(center), c0 = center.pwrss;

  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim + 1, dim + 1);
  Eigen::VectorXd c_grad(dim);

  std::vector<double> a_plus(static_cast<std::size_t>(dim)), a_minus(static_cast<std::size_t>(dim));
  std::vector<double> c_plus(static_cast<std::size_t>(dim)), c_minus(static_cast<std::size_t>(dim));
  for (Eigen::Index j = 0; j < dim; ++j) {
    Eigen::VectorXd t = theta;
    t[j] = theta[j] + step[j];
    DevianceParts parts = evaluator.factor(t);
    a_plus[static_cast<std::size_t>(j)] = a_of(parts);
    c_plus[static_cast<std::size_t>(j)] = parts.pwrss;
    t[j] = theta[j] - step[j];
    parts = evaluator.factor(t);
    a_minus[static_cast<std::size_t>(j)] = a_of(parts);
    c_minus[static_cast<std::size_t>(j)] = parts.pwrss;

    const double h2 = step[j] * step[j];
    const double a_dd = (a_plus[static_cast<std::size_t>(j)] - 2.0 * a0 + a_minus[static_cast<std::size_t>(j)]) / h2;
    const double c_dd = (c_plus[static_cast<std::size_t>(j)] - 2.0 * c0 + c_minus[static_cast<std::size_t>(j)]) / h2;
    hess(j, j) = a_dd + c_dd / sigma2;
    c_grad[j] = (c_plus[static_cast<std::size_t>(j)] - c_minus[static_cast<std::size_t>(j)]) / (2.0 * step[j]);
  }
  for (Eigen::Index j = 0; j < dim; ++j) {
    for (Eigen::Index k = j + 1; k < dim; ++k) {
      Eigen::VectorXd t = theta;
      auto eval_at = [&](double sj, double sk) {
        t[j] = theta[j] + sj * step[j];
        t[k] = theta[k] + sk * step[k];
        const DevianceParts parts = evaluator.factor(t);
        t[j] = theta[j];
        t[k] = theta[k];
        return std::pair<double, double>(a_of(parts), parts.pwrss);
      };
      const auto [app, cpp] = eval_at(1.0, 1.0);
      const auto [apm, cpm] = eval_at(1.0, -1.0);
      const auto [amp, cmp] = eval_at(-1.0, 1.0);
      const auto [amm, cmm] = eval_at(-1.0, -1.0);
      const double denom = 4.0 * step[j] * step[k];
      const double a_jk = (app - apm - amp + amm) / denom;
      const double c_jk = (cpp - cpm - cmp + cmm) / denom;
      hess(j, k) = hess(k, j) = a_jk + c_jk / sigma2;
    }
  }
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double cross = -2.0 * c_grad[j] / (sigma2 * sigma);
    hess(j, dim) = hess(dim, j) = cross;
  }
  hess(dim, dim) = 4.0 * b_count / sigma2;

  VcInformation info;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(hess);
  const Eigen::VectorXd& eigenvalues = eigen.eigenvalues();
  const double floor = 1e-10 * std::max(1.0, eigenvalues.cwiseAbs().maxCoeff());
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(dim + 1);
  for (Eigen::Index j = 0; j < dim + 1; ++j) {
    if (eigenvalues[j] > floor)
      inv[j] = 2.0 / eigenvalues[j];
    else
      info.degenerate = true;  // flat or boundary direction; drop it
  }
  info.covariance = eigen.eigenvectors() * inv.asDiagonal() * eigen.eigenvectors().transpose();
  return info;
}

}  // namespace

MixedVarFit fit_mixed_model(const MixedDesign& design, const FitOptions& options) {
  Evaluator evaluator(design);
  const Eigen::Index dim = options.force_tau_zero ? 0 : evaluator.theta_dim();
  const LikelihoodMode mode = options.mode;

  MixedVarFit fit;
  fit.target_channel = design.target_channel();
  fit.lag_order = design.lag_order();
  fit.mode = mode;
  fit.beta_labels = design.fixed_labels();

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  int total_evals = 0;
  bool converged = true;
  if (dim > 0) {
    double best_value = std::numeric_limits<double>::infinity();
    bool best_converged = false;
    Eigen::VectorXd best_theta = theta;
    NelderMeadOptions nm;
    nm.deviance_tolerance = options.deviance_tolerance;
    nm.simplex_tolerance = options.simplex_tolerance;
    nm.max_evaluations = options.max_evaluations > 0 ? options.max_evaluations
                                                     : 5000 * static_cast<int>(dim);
    auto objective = [&](const Eigen::VectorXd& t) { return evaluator.deviance(t, mode); };
    for (double start : options.multistart) {
      const NelderMeadResult run =
          minimize_nelder_mead(objective, Eigen::VectorXd::Constant(dim, start), nm);
      total_evals += run.evaluations;
      if (run.value < best_value) {
        best_value = run.value;
        best_theta = run.x;
        best_converged = run.converged;
      }
    }
    converged = best_converged;
    theta = best_theta.cwiseAbs();
    for (Eigen::Index j = 0; j < dim; ++j) {
      if (theta[j] < options.boundary_tolerance) {
        theta[j] = 0.0;
        fit.convergence.boundary_components.push_back(static_cast<int>(j));
      }
    }
  }

  const Eigen::VectorXd theta_eval =
      dim > 0 ? theta : Eigen::VectorXd::Zero(evaluator.theta_dim());
  Evaluator::Solution solution = evaluator.solve(theta_eval, mode);
  fit.theta = theta_eval;
  fit.beta = solution.beta;
  fit.beta_cov = solution.beta_cov;
  fit.deviance = evaluator.compose(solution.parts, mode);

  const double sigma = std::sqrt(solution.sigma2);
  fit.components.sigma = sigma;
  fit.components.tau.setZero(2, evaluator.m());
  std::array<Eigen::VectorXd, 2> theta_group;
  for (int g = 0; g < 2; ++g) {
    theta_group[g] = Eigen::VectorXd::Zero(evaluator.m());
    if (dim > 0)
      theta_group[g] = theta.segment(static_cast<Eigen::Index>(g) * evaluator.m(), evaluator.m());
    fit.components.tau.row(g) = sigma * theta_group[g].transpose();
  }

  fit.blups.reserve(solution.u.size());
  for (Eigen::Index i = 0; i < design.n_subjects(); ++i) {
    const int g = design.group_of(i) - 1;
    fit.blups.push_back(theta_group[g].cwiseProduct(solution.u[static_cast<std::size_t>(i)]));
  }

  // Centered FD gradient of the profiled objective at the optimum.
  fit.convergence.converged = converged;
  fit.convergence.evaluations = total_evals;
  if (dim > 0) {
    double grad_sq = 0.0;
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double h = options.fd_relative_step * std::max(theta[j], 0.1);
      Eigen::VectorXd t = theta;
      t[j] = theta[j] + h;
      const double f_plus = evaluator.deviance(t, mode);
      t[j] = theta[j] - h;
      const double f_minus = evaluator.deviance(t, mode);
      const double g = (f_plus - f_minus) / (2.0 * h);
      grad_sq += g * g;
    }
    fit.convergence.gradient_norm = std::sqrt(grad_sq);
    fit.convergence.scaled_gradient_norm =
        fit.convergence.gradient_norm / (1.0 + std::abs(fit.deviance));
  }

  if (options.compute_inference) {
    if (dim == 0) {
      // Classical fixed-effects regression: exact residual df.
      const double df = static_cast<double>(evaluator.n_rows() - evaluator.p_fixed());
      fit.vc_information = Eigen::MatrixXd::Constant(1, 1, solution.sigma2 / (2.0 * df));
      fit.se2_gradients.resize(fit.beta.size(), 1);
      for (Eigen::Index j = 0; j < fit.beta.size(); ++j)
        fit.se2_gradients(j, 0) = 2.0 * fit.beta_cov(j, j) / sigma;
      fit.inference.resize(static_cast<std::size_t>(fit.beta.size()));
      for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
        auto& inf = fit.inference[static_cast<std::size_t>(j)];
        inf.estimate = fit.beta[j];
        inf.se = std::sqrt(fit.beta_cov(j, j));
        inf.t = inf.estimate / inf.se;
        inf.df = df;
        inf.p = t_test_p(inf.t, inf.df);
      }
    } else {
      const VcInformation vc = variance_component_information(evaluator, theta, mode,
                                                              solution.sigma2,
                                                              options.fd_relative_step);
      fit.vc_information = vc.covariance;

      // FD gradient of each SE^2 in theta; the sigma column is analytic.
      fit.se2_gradients.resize(fit.beta.size(), dim + 1);
      for (Eigen::Index j = 0; j < dim; ++j) {
        const double h = options.fd_relative_step * std::max(theta[j], 0.1);
        Eigen::VectorXd t = theta;
        t[j] = theta[j] + h;
        const Eigen::VectorXd diag_plus = evaluator.fixed_cov_diag(t);
        t[j] = theta[j] - h;
        const Eigen::VectorXd diag_minus = evaluator.fixed_cov_diag(t);
        fit.se2_gradients.col(j) = solution.sigma2 * (diag_plus - diag_minus) / (2.0 * h);
      }
      for (Eigen::Index j = 0; j < fit.beta.size(); ++j)
        fit.se2_gradients(j, dim) = 2.0 * fit.beta_cov(j, j) / sigma;

      fit.inference = fixed_effect_inference(fit);
    }
  }
  return fit;
}

std::vector<CoefficientInference> fixed_effect_inference(const MixedVarFit& fit) {
  if (fit.vc_information.size() == 0 || fit.se2_gradients.size() == 0)
    throw UsageError("fit carries no variance-component information; refit with inference enabled");
  std::vector<CoefficientInference> result(static_cast<std::size_t>(fit.beta.size()));
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
    CoefficientInference& inf = result[static_cast<std::size_t>(j)];
    inf.estimate = fit.beta[j];
    const double se2 = fit.beta_cov(j, j);
    inf.se = std::sqrt(se2);
    inf.t = inf.estimate / inf.se;
    const Eigen::VectorXd grad = fit.se2_gradients.row(j);
    const double var_se2 = grad.dot(fit.vc_information * grad);
    const double df = var_se2 > 0.0 ? 2.0 * se2 * se2 / var_se2
                                    : std::numeric_limits<double>::infinity();
    if (std::isfinite(df) && df > 0.0) {
      inf.df = df;
      inf.p = t_test_p(inf.t, inf.df);
    } else if (std::isinf(df) && df > 0.0) {
      inf.df = std::numeric_limits<double>::infinity();
      inf.p = 2.0 * normal_sf(std::abs(inf.t));
    } else {
      inf.normal_fallback = true;
      inf.df = std::numeric_limits<double>::infinity();
      inf.p = 2.0 * normal_sf(std::abs(inf.t));
    }
  }
  return result;
}

NestedMlFits fit_ml_nested(const MixedDesign& design, const std::vector<CoefficientLabel>& excluded,
                           const FitOptions& options) {
  FitOptions ml_options = options;
  ml_options.mode = LikelihoodMode::kMl;
  NestedMlFits fits;
  fits.full = fit_mixed_model(design, ml_options);
  fits.reduced = fit_mixed_model(design.without_fixed_columns(excluded), ml_options);
  return fits;
}

}  // namespace mesvar
