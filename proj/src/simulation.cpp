#include "mesvar/simulation.hpp"

#include "mesvar/mixed_model.hpp"
#include "mesvar/parallel.hpp"
#include "mesvar/var.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mesvar {

void SimulationConfig::validate() const {
  if (!seed_set) throw UsageError("simulation seed is mandatory");
  if (channels < 1) throw UsageError("channels must be positive");
  if (subjects_per_group < 1) throw UsageError("subjects_per_group must be positive");
  if (generator_lag < 1) throw UsageError("generator_lag must be positive");
  if (fit_lag < 1) throw UsageError("fit_lag must be positive");
  if (replicates < 1) throw UsageError("replicates must be positive");
  if (time_points.empty()) throw UsageError("at least one time-points regime is required");
  if (!(noise_sd > 0.0)) throw UsageError("noise_sd must be positive");
  const auto lags = static_cast<std::size_t>(generator_lag);
  if (phi.size() != lags)
    throw UsageError("phi must have one matrix per generator lag");
  if (phi_group2 && phi_group2->size() != lags)
    throw UsageError("phi_group2 must have one matrix per generator lag");
  if (random_effect_sd.size() != lags)
    throw UsageError("random_effect_sd must have one matrix per generator lag");
  std::vector<const std::vector<Eigen::MatrixXd>*> lists = {&phi, &random_effect_sd};
  if (phi_group2) lists.push_back(&*phi_group2);
  for (const auto* list : lists) {
    for (const auto& mat : *list)
      if (mat.rows() != channels || mat.cols() != channels)
        throw UsageError("generator matrices must be channels x channels");
  }
  for (const auto& mat : random_effect_sd)
    if ((mat.array() < 0.0).any())
      throw UsageError("random-effect SDs must be nonnegative");
  if (!(companion_spectral_radius(phi) < 1.0))
    throw UsageError("group generator matrices are not causal (companion radius >= 1)");
  if (phi_group2 && !(companion_spectral_radius(*phi_group2) < 1.0))
    throw UsageError("group-2 generator matrices are not causal");
}

std::vector<Eigen::MatrixXd> default_generator_matrices(int channels, int lags,
                                                        double target_radius, Rng& rng) {
  if (!(target_radius > 0.0) || !(target_radius < 1.0))
    throw UsageError("target radius must lie in (0, 1)");

  std::vector<Eigen::MatrixXd> raw(static_cast<std::size_t>(lags));
  for (auto& mat : raw) {
    mat.resize(channels, channels);
    for (int i = 0; i < channels; ++i)
      for (int j = 0; j < channels; ++j) mat(i, j) = draw_standard_normal(rng);
    for (int i = 0; i < channels; ++i)
      for (int j = 0; j < channels; ++j)
        if (i != j && draw_uniform(rng) < 0.7) mat(i, j) = 0.0;  // 70% off-diagonal sparsity
  }

  auto radius_at = [&raw](double scale) {
    std::vector<Eigen::MatrixXd> scaled;
    scaled.reserve(raw.size());
    for (const auto& mat : raw) scaled.push_back(scale * mat);
    return companion_spectral_radius(scaled);
  };

  double hi = 1.0;
  while (radius_at(hi) < target_radius) hi *= 2.0;
  double lo = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double rho = radius_at(mid);
    if (std::abs(rho - target_radius) <= 1e-7) {
      lo = hi = mid;
      break;
    }
    (rho < target_radius ? lo : hi) = mid;
  }
  const double scale = 0.5 * (lo + hi);
  for (auto& mat : raw) mat *= scale;
  return raw;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> default_generator_matrices(int channels,
                                                                       double target_radius,
                                                                       Rng& rng) {
  auto mats = default_generator_matrices(channels, 2, target_radius, rng);
  return {mats[0], mats[1]};
}

namespace {

Eigen::MatrixXd simulate_trajectory(const std::vector<Eigen::MatrixXd>& phi, double noise_sd,
                                    int time_points, int burn_in, Rng& rng) {
  const auto r = static_cast<Eigen::Index>(phi.front().rows());
  const auto p = static_cast<int>(phi.size());
  const int total = time_points + burn_in;

  // Retained-window innovations are drawn before the burn-in ones, so a
  // longer burn-in changes only the warm-up noise, not the kept stretch
  // (common random numbers for burn-in sufficiency comparisons).
  Eigen::MatrixXd kept_noise(time_points, r);
  for (int t = 0; t < time_points; ++t)
    for (Eigen::Index j = 0; j < r; ++j) kept_noise(t, j) = noise_sd * draw_standard_normal(rng);
  Eigen::MatrixXd warm_noise(burn_in, r);
  for (int t = 0; t < burn_in; ++t)
    for (Eigen::Index j = 0; j < r; ++j) warm_noise(t, j) = noise_sd * draw_standard_normal(rng);

  Eigen::MatrixXd path = Eigen::MatrixXd::Zero(total, r);
  for (int t = 0; t < total; ++t) {
    Eigen::VectorXd next =
        t < burn_in ? warm_noise.row(t).transpose() : kept_noise.row(t - burn_in).transpose();
    for (int k = 1; k <= p && k <= t; ++k)
      next.noalias() += phi[static_cast<std::size_t>(k - 1)] * path.row(t - k).transpose();
    path.row(t) = next.transpose();
  }
  return path.bottomRows(time_points);
}

}  // namespace

SubjectRecord generate_subject(const SimulationConfig& config, int group, int time_points,
                               Rng& rng, std::vector<Eigen::MatrixXd>* coefficients_out) {
  const auto& group_phi =
      (group == 2 && config.phi_group2) ? *config.phi_group2 : config.phi;
  const auto r = static_cast<Eigen::Index>(config.channels);

  std::vector<Eigen::MatrixXd> subject_phi;
  bool causal = false;
  for (int attempt = 0; attempt < 100 && !causal; ++attempt) {
    subject_phi = group_phi;
    for (std::size_t k = 0; k < subject_phi.size(); ++k) {
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < r; ++j)
          subject_phi[k](i, j) += config.random_effect_sd[k](i, j) * draw_standard_normal(rng);
    }
    causal = companion_spectral_radius(subject_phi) < 1.0;
  }
  if (!causal)
    throw NumericalError(
        "could not draw causal subject coefficients in 100 attempts; shrink the random-effect "
        "SDs or the generator radius");
  if (coefficients_out) *coefficients_out = subject_phi;

  SubjectRecord record;
  record.group_index = group;
  record.series.sampling_rate_hz = 1.0;
  record.series.channel_names.reserve(static_cast<std::size_t>(r));
  for (Eigen::Index j = 0; j < r; ++j)
    record.series.channel_names.push_back("ch" + std::to_string(j + 1));
  record.series.samples =
      simulate_trajectory(subject_phi, config.noise_sd, time_points, config.burn_in, rng);
  return record;
}

StudyDataset generate_population(const SimulationConfig& config, int time_points, Rng& rng) {
  StudyDataset dataset;
  dataset.sampling_rate_hz = 1.0;
  for (Eigen::Index j = 0; j < config.channels; ++j)
    dataset.channel_names.push_back("ch" + std::to_string(j + 1));
  int counter = 0;
  for (int group = 1; group <= 2; ++group) {
    for (int i = 0; i < config.subjects_per_group; ++i) {
      // One sub-stream per subject: a subject's draw count (burn-in length,
      // causality resampling) cannot shift the next subject's randomness.
      Rng subject_rng = make_stream_rng(rng(), static_cast<std::uint64_t>(counter));
      SubjectRecord record = generate_subject(config, group, time_points, subject_rng);
      record.subject_id = "sim" + std::to_string(++counter);
      dataset.subjects.push_back(std::move(record));
    }
  }
  return dataset;
}

namespace {

struct ReplicateDraw {
  bool failed = false;
  Eigen::MatrixXd phi1;  // estimated group-1 lag-1 fixed effects, (target, source)
  Eigen::MatrixXd tau1;  // estimated group-1 lag-1 random SDs
};

EstimateSummary summarize(const std::vector<Eigen::MatrixXd>& draws, const Eigen::MatrixXd& truth) {
  const auto n = static_cast<double>(draws.size());
  const Eigen::Index r = truth.rows();
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(r, r);
  for (const auto& draw : draws) mean += draw;
  mean /= n;

  EstimateSummary summary;
  summary.bias = mean - truth;
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(r, r);
  Eigen::MatrixXd mse = Eigen::MatrixXd::Zero(r, r);
  for (const auto& draw : draws) {
    var.array() += (draw - mean).array().square();
    mse.array() += (draw - truth).array().square();
  }
  var /= n;  // population denominator keeps mse = bias^2 + sd^2 exact
  mse /= n;
  summary.sd = var.cwiseSqrt();
  summary.mse = mse;
  summary.mean_abs_bias = summary.bias.cwiseAbs().mean();
  summary.mean_sd = summary.sd.mean();
  summary.mean_mse = summary.mse.mean();
  return summary;
}

}  // namespace

SimulationReport run_replicates(const SimulationConfig& config) {
  config.validate();
  const auto r = static_cast<Eigen::Index>(config.channels);
  const unsigned threads = config.threads > 0 ? config.threads : default_thread_count();

  FitOptions fit_options;
  fit_options.mode = LikelihoodMode::kReml;
  fit_options.compute_inference = false;  // only point estimates are aggregated

  SimulationReport report;
  for (std::size_t regime = 0; regime < config.time_points.size(); ++regime) {
    const int t = config.time_points[regime];
    std::vector<ReplicateDraw> draws(static_cast<std::size_t>(config.replicates));

    parallel_for(static_cast<std::size_t>(config.replicates), threads, [&](std::size_t rep) {
      Rng rng = make_stream_rng(config.seed,
                                (static_cast<std::uint64_t>(regime) << 32) | rep);
      ReplicateDraw& draw = draws[rep];
      try {
        const StudyDataset population = generate_population(config, t, rng);
        draw.phi1.resize(r, r);
        draw.tau1.resize(r, r);
        for (Eigen::Index target = 0; target < r; ++target) {
          const MixedDesign design = MixedDesign::build(population, target, config.fit_lag);
          const MixedVarFit fit = fit_mixed_model(design, fit_options);
          if (!fit.convergence.converged) {
            draw.failed = true;
            return;
          }
          for (Eigen::Index source = 0; source < r; ++source) {
            draw.phi1(target, source) = fit.beta[fit.coefficient_index(1, static_cast<int>(source), 1)];
            draw.tau1(target, source) = fit.components.tau(0, source);
          }
        }
      } catch (const Error&) {
        draw.failed = true;
      }
    });

    std::vector<Eigen::MatrixXd> phi_draws, tau_draws;
    int failures = 0;
    for (const auto& draw : draws) {
      if (draw.failed) {
        ++failures;
        continue;
      }
      phi_draws.push_back(draw.phi1);
      tau_draws.push_back(draw.tau1);
    }
    if (failures * 10 > config.replicates)
      throw NumericalError("regime T=" + std::to_string(t) + ": " + std::to_string(failures) +
                           " of " + std::to_string(config.replicates) +
                           " replicates failed to converge (over 10%)");

    RegimeReport regime_report;
    regime_report.time_points = t;
    regime_report.replicates_used = static_cast<int>(phi_draws.size());
    regime_report.convergence_failures = failures;
    regime_report.phi1 = summarize(phi_draws, config.phi[0]);
    regime_report.tau1 = summarize(tau_draws, config.random_effect_sd[0]);
    report.regimes.push_back(std::move(regime_report));
  }
  return report;
}

}  // namespace mesvar
