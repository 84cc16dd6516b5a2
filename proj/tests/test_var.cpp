#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mesvar/rng.hpp"
#include "mesvar/var.hpp"

#include "test_support.hpp"

#include <algorithm>
#include <cmath>

using namespace mesvar;
using mesvar::testing::make_series;

namespace {

Eigen::MatrixXd simulate_var(const std::vector<Eigen::MatrixXd>& phi, double noise_sd,
                             Eigen::Index t, Rng& rng, int burn_in = 200) {
  const Eigen::Index r = phi.front().rows();
  const auto p = static_cast<int>(phi.size());
  Eigen::MatrixXd path = Eigen::MatrixXd::Zero(t + burn_in, r);
  for (Eigen::Index row = 0; row < t + burn_in; ++row) {
    Eigen::VectorXd next(r);
    for (Eigen::Index j = 0; j < r; ++j) next[j] = noise_sd * draw_standard_normal(rng);
    for (int k = 1; k <= p && k <= row; ++k)
      next.noalias() += phi[static_cast<std::size_t>(k - 1)] * path.row(row - k).transpose();
    path.row(row) = next.transpose();
  }
  return path.bottomRows(t);
}

// Power-iteration spectral radius; valid when the dominant eigenvalue is
// simple and positive (entrywise-positive blocks give that via
// Perron-Frobenius).
double power_iteration_radius(const Eigen::MatrixXd& a, int max_iter = 20000) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(a.rows());
  v.normalize();
  double rho = 0.0;
  for (int i = 0; i < max_iter; ++i) {
    const Eigen::VectorXd av = a * v;
    const double next = av.norm();
    v = av / next;
    if (i > 10 && std::abs(next - rho) < 1e-13 * std::max(1.0, rho)) return next;
    rho = next;
  }
  return rho;
}

}  // namespace

TEST_CASE("lagged design dimensions and content") {
  Eigen::MatrixXd samples(6, 2);
  samples << 1, 10, 2, 20, 3, 30, 4, 40, 5, 50, 6, 60;
  const LaggedDesign design = build_lagged_design(samples, 2);
  CHECK(design.response.rows() == 4);
  CHECK(design.regressors.cols() == 4);
  // row for t=2 (0-based): lag-1 block then lag-2 block
  CHECK(design.regressors(0, 0) == 2);
  CHECK(design.regressors(0, 1) == 20);
  CHECK(design.regressors(0, 2) == 1);
  CHECK(design.regressors(0, 3) == 10);
  CHECK(design.response(0, 0) == 3);
}

TEST_CASE("OLS recovers a diagonal VAR(1)") {
  Rng rng(101);
  const Eigen::MatrixXd phi = 0.5 * Eigen::MatrixXd::Identity(3, 3);
  const auto series = make_series(simulate_var({phi}, 1.0, 5000, rng), 1.0);
  const VarFit fit = fit_var_ols(series, 1);
  CHECK(fit.t_effective == 4999);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 3; ++j)
      CHECK(std::abs(fit.coefficients[0](i, j) - (i == j ? 0.5 : 0.0)) < 0.05);
}

TEST_CASE("OLS on white noise estimates zero") {
  Rng rng(102);
  const auto series = make_series(simulate_var({Eigen::MatrixXd::Zero(2, 2)}, 1.0, 5000, rng), 1.0);
  const VarFit fit = fit_var_ols(series, 1);
  CHECK(fit.coefficients[0].cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("underdetermined fit is rejected") {
  Rng rng(103);
  const auto series = make_series(testing::gaussian_matrix(4, 2, rng), 1.0);
  CHECK_THROWS_AS(fit_var_ols(series, 2), DataError);
}

TEST_CASE("OLS residuals are orthogonal to regressors") {
  Rng rng(104);
  Eigen::MatrixXd phi(2, 2);
  phi << 0.4, 0.2, -0.1, 0.3;
  const auto series = make_series(simulate_var({phi}, 1.0, 800, rng), 1.0);
  const VarFit fit = fit_var_ols(series, 1);
  const LaggedDesign design = build_lagged_design(series.samples, 1);
  const Eigen::MatrixXd beta = fit.coefficients[0].transpose();
  const Eigen::MatrixXd resid = design.response - design.regressors * beta;
  const double max_corr = (design.regressors.transpose() * resid).cwiseAbs().maxCoeff() /
                          static_cast<double>(fit.t_effective);
  CHECK(max_corr < 1e-8);
}

TEST_CASE("LASSLE with lambda 0 equals OLS") {
  Rng rng(105);
  Eigen::MatrixXd phi(3, 3);
  phi << 0.5, 0.2, 0.0, 0.0, 0.3, -0.2, 0.1, 0.0, 0.4;
  const auto series = make_series(simulate_var({phi}, 1.0, 600, rng), 1.0);
  const VarFit ols = fit_var_ols(series, 1);
  const VarFit lassle = fit_var_lassle(series, 1, 0.0);
  CHECK((ols.coefficients[0] - lassle.coefficients[0]).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("LASSO null threshold zeroes every coefficient") {
  Rng rng(106);
  const Eigen::MatrixXd phi = 0.5 * Eigen::MatrixXd::Identity(2, 2);
  const auto series = make_series(simulate_var({phi}, 1.0, 400, rng), 1.0);
  const LaggedDesign design = build_lagged_design(series.samples, 1);

  double lambda_max = 0.0;
  for (Eigen::Index eq = 0; eq < 2; ++eq) {
    for (Eigen::Index j = 0; j < design.regressors.cols(); ++j) {
      const double scale = std::sqrt(design.regressors.col(j).squaredNorm() /
                                     static_cast<double>(design.regressors.rows()));
      lambda_max = std::max(lambda_max,
                            std::abs(design.regressors.col(j).dot(design.response.col(eq))) /
                                (scale * static_cast<double>(design.regressors.rows())));
    }
  }
  const VarFit fit = fit_var_lassle(series, 1, lambda_max * 1.0000001);
  CHECK(fit.coefficients[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(fit.free_coefficient_count == 0);
}

TEST_CASE("LASSLE support recovery with cross-validated lambda") {
  // Sparse VAR(1): diagonal 0.4 plus 2 planted off-diagonal 0.4 entries,
  // T=500; support precision and recall averaged over 100 replicates.
  const int r = 10;
  double precision_sum = 0.0, recall_sum = 0.0;
  const int reps = 100;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng = make_stream_rng(2024, static_cast<std::uint64_t>(rep));
    Eigen::MatrixXd phi = 0.4 * Eigen::MatrixXd::Identity(r, r);
    int planted = 0;
    while (planted < 2) {
      const auto i = static_cast<Eigen::Index>(rng() % r);
      const auto j = static_cast<Eigen::Index>(rng() % r);
      if (i == j || phi(i, j) != 0.0) continue;
      phi(i, j) = 0.4;
      ++planted;
    }
    REQUIRE(companion_spectral_radius({phi}) < 1.0);
    const auto series = make_series(simulate_var({phi}, 1.0, 500, rng), 1.0);
    const VarFit fit = fit_var_lassle(series, 1);

    int tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < r; ++j) {
        const bool truth = phi(i, j) != 0.0;
        const bool picked = fit.coefficients[0](i, j) != 0.0;
        tp += truth && picked;
        fp += !truth && picked;
        fn += truth && !picked;
      }
    }
    precision_sum += tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 1.0;
    recall_sum += static_cast<double>(tp) / (tp + fn);
  }
  CHECK(precision_sum / reps >= 0.9);
  CHECK(recall_sum / reps >= 0.9);
}

TEST_CASE("information criteria: nested fits and penalty monotonicity") {
  Rng rng(107);
  Eigen::MatrixXd phi(2, 2);
  phi << 0.5, 0.1, -0.2, 0.3;
  const auto series = make_series(simulate_var({phi}, 1.0, 500, rng), 1.0);
  const VarFit small = fit_var_ols(series, 1);
  const VarFit large = fit_var_ols(series, 3);
  const auto ic_small = information_criteria(small);
  const auto ic_large = information_criteria(large);

  const Eigen::LLT<Eigen::MatrixXd> llt_s(small.residual_covariance);
  const Eigen::LLT<Eigen::MatrixXd> llt_l(large.residual_covariance);
  const double logdet_s = 2.0 * llt_s.matrixLLT().diagonal().array().log().sum();
  const double logdet_l = 2.0 * llt_l.matrixLLT().diagonal().array().log().sum();
  CHECK(logdet_l <= logdet_s + 1e-12);
  CHECK(ic_large.bic - logdet_l > ic_small.bic - logdet_s);
  CHECK(ic_large.aic - logdet_l > ic_small.aic - logdet_s);
  CHECK(ic_small.value("hq") == doctest::Approx(ic_small.hq));
  CHECK_THROWS_AS(ic_small.value("nope"), UsageError);
}

TEST_CASE("BIC selects the true order of a small VAR(2) fixture") {
  int correct = 0;
  const int reps = 40;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng = make_stream_rng(556, static_cast<std::uint64_t>(rep));
    Eigen::MatrixXd phi1 = 0.3 * Eigen::MatrixXd::Identity(4, 4);
    phi1(0, 1) = 0.2;
    const Eigen::MatrixXd phi2 = 0.35 * Eigen::MatrixXd::Identity(4, 4);
    REQUIRE(companion_spectral_radius({phi1, phi2}) < 1.0);
    const auto series = make_series(simulate_var({phi1, phi2}, 1.0, 1000, rng), 1.0);
    StudyDataset dataset;
    dataset.sampling_rate_hz = 1.0;
    dataset.channel_names = series.channel_names;
    dataset.subjects.push_back({"s", 1, series});
    const LagSelectionReport report = select_lag(dataset, 4);
    correct += report.selected[0][1] == 2;  // criteria order: aic, bic, hq
  }
  CHECK(static_cast<double>(correct) / reps >= 0.8);
}

TEST_CASE("white noise: BIC prefers the smallest candidate lag") {
  int smallest = 0;
  const int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng = make_stream_rng(557, static_cast<std::uint64_t>(rep));
    const auto series =
        make_series(simulate_var({Eigen::MatrixXd::Zero(3, 3)}, 1.0, 600, rng), 1.0);
    StudyDataset dataset;
    dataset.sampling_rate_hz = 1.0;
    dataset.channel_names = series.channel_names;
    dataset.subjects.push_back({"s", 1, series});
    const LagSelectionReport report = select_lag(dataset, 4);
    smallest += report.selected[0][1] == 1;
  }
  CHECK(smallest > reps / 2);
}

TEST_CASE("select_lag: single subject gives one row per criterion and lag") {
  Rng rng(108);
  const Eigen::MatrixXd phi = 0.5 * Eigen::MatrixXd::Identity(2, 2);
  const auto series = make_series(simulate_var({phi}, 1.0, 400, rng), 1.0);
  StudyDataset dataset;
  dataset.sampling_rate_hz = 1.0;
  dataset.channel_names = series.channel_names;
  dataset.subjects.push_back({"only", 1, series});
  const LagSelectionReport report = select_lag(dataset, 3);
  CHECK(report.subject_ids.size() == 1);
  CHECK(report.table.size() == 3 * 3);
  CHECK(report.selected.size() == 1);
}

TEST_CASE("select_lag: modal selection recovers VAR(1); mixed population splits") {
  StudyDataset var1;
  var1.sampling_rate_hz = 1.0;
  for (int s = 0; s < 6; ++s) {
    Rng rng = make_stream_rng(558, static_cast<std::uint64_t>(s));
    const Eigen::MatrixXd phi = 0.5 * Eigen::MatrixXd::Identity(3, 3);
    auto series = make_series(simulate_var({phi}, 1.0, 1000, rng), 1.0);
    if (var1.channel_names.empty()) var1.channel_names = series.channel_names;
    var1.subjects.push_back({"s" + std::to_string(s), 1 + s % 2, series});
  }
  const LagSelectionReport report1 = select_lag(var1, 3);
  CHECK(report1.modal_selection[1] == 1);

  StudyDataset mixed;
  mixed.sampling_rate_hz = 1.0;
  const int half = 10;
  for (int s = 0; s < 2 * half; ++s) {
    Rng rng = make_stream_rng(559, static_cast<std::uint64_t>(s));
    std::vector<Eigen::MatrixXd> phi;
    if (s < half)
      phi = {0.5 * Eigen::MatrixXd::Identity(3, 3)};
    else
      phi = {0.25 * Eigen::MatrixXd::Identity(3, 3), 0.3 * Eigen::MatrixXd::Identity(3, 3)};
    auto series = make_series(simulate_var(phi, 1.0, 2000, rng), 1.0);
    if (mixed.channel_names.empty()) mixed.channel_names = series.channel_names;
    mixed.subjects.push_back({"s" + std::to_string(s), 1 + s % 2, series});
  }
  const LagSelectionReport report2 = select_lag(mixed, 3);
  int correct = 0;
  for (int s = 0; s < 2 * half; ++s)
    correct += report2.selected[static_cast<std::size_t>(s)][1] == (s < half ? 1 : 2);
  CHECK(static_cast<double>(correct) / (2 * half) >= 0.7);
}

TEST_CASE("companion spectral radius closed-form cases") {
  CHECK(companion_spectral_radius({0.5 * Eigen::MatrixXd::Identity(2, 2)}) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // Phi_1 = 0, Phi_2 = 0.64 I: companion eigenvalues are +-sqrt(0.64)
  CHECK(companion_spectral_radius(
            {Eigen::MatrixXd::Zero(3, 3), 0.64 * Eigen::MatrixXd::Identity(3, 3)}) ==
        doctest::Approx(0.8).epsilon(1e-12));
  CHECK(companion_spectral_radius({Eigen::MatrixXd::Identity(2, 2)}) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("companion spectral radius agrees with the power-iteration oracle") {
  Rng rng(109);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::MatrixXd phi1 = testing::gaussian_matrix(4, 4, rng).cwiseAbs() * 0.1;
    Eigen::MatrixXd phi2 = testing::gaussian_matrix(4, 4, rng).cwiseAbs() * 0.05;
    CHECK(companion_spectral_radius({phi1}) ==
          doctest::Approx(power_iteration_radius(phi1)).epsilon(1e-8));
    CHECK(companion_spectral_radius({phi1, phi2}) ==
          doctest::Approx(power_iteration_radius(companion_matrix({phi1, phi2}))).epsilon(1e-8));
  }
}

TEST_CASE("companion matrix rejects bad input") {
  CHECK_THROWS_AS(
      companion_spectral_radius({Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(3, 3)}),
      DataError);
  CHECK_THROWS_AS(companion_spectral_radius({}), UsageError);
}
