#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mesvar/serialize.hpp"
#include "mesvar/simulation.hpp"
#include "mesvar/var.hpp"

#include "test_support.hpp"

#include <cmath>

using namespace mesvar;

namespace {

SimulationConfig small_config() {
  SimulationConfig config;
  config.channels = 3;
  config.subjects_per_group = 4;
  config.generator_lag = 2;
  config.noise_sd = 1.0;
  config.time_points = {150};
  config.replicates = 30;
  config.seed = 77;
  config.seed_set = true;
  config.fit_lag = 1;
  Rng rng = make_stream_rng(77, 0x8000000000000000ULL);
  config.phi = default_generator_matrices(3, 2, 0.7, rng);
  config.random_effect_sd.assign(2, Eigen::MatrixXd::Constant(3, 3, 0.05));
  return config;
}

}  // namespace

TEST_CASE("default generator hits the target companion radius") {
  Rng rng(31);
  const auto matrices = default_generator_matrices(10, 2, 0.8, rng);
  REQUIRE(matrices.size() == 2);
  CHECK(std::abs(companion_spectral_radius(matrices) - 0.8) <= 1e-6);

  // pair-returning overload mirrors the two-lag case
  Rng rng2(31);
  const auto [phi1, phi2] = default_generator_matrices(10, 0.8, rng2);
  CHECK(phi1 == matrices[0]);
  CHECK(phi2 == matrices[1]);
}

TEST_CASE("default generator: small target radius gives small matrices") {
  Rng rng_a(32), rng_b(32);
  const auto large = default_generator_matrices(6, 2, 0.8, rng_a);
  const auto small = default_generator_matrices(6, 2, 0.01, rng_b);
  CHECK(std::abs(companion_spectral_radius(small) - 0.01) <= 1e-6);
  CHECK(small[0].cwiseAbs().maxCoeff() < large[0].cwiseAbs().maxCoeff());
}

TEST_CASE("default generator is deterministic in the seed") {
  Rng rng_a(33), rng_b(33);
  const auto a = default_generator_matrices(5, 2, 0.75, rng_a);
  const auto b = default_generator_matrices(5, 2, 0.75, rng_b);
  CHECK(a[0] == b[0]);
  CHECK(a[1] == b[1]);

  // roughly 70% of off-diagonals are zeroed
  int zeros = 0, offdiag = 0;
  for (const auto& mat : a)
    for (Eigen::Index i = 0; i < 5; ++i)
      for (Eigen::Index j = 0; j < 5; ++j) {
        if (i == j) continue;
        ++offdiag;
        zeros += mat(i, j) == 0.0;
      }
  CHECK(zeros > offdiag / 3);
}

TEST_CASE("generate_subject: zero random-effect SDs reproduce the group matrices") {
  SimulationConfig config = small_config();
  config.random_effect_sd.assign(2, Eigen::MatrixXd::Zero(3, 3));
  Rng rng(34);
  std::vector<Eigen::MatrixXd> coeffs;
  const SubjectRecord subject = generate_subject(config, 1, 100, rng, &coeffs);
  REQUIRE(coeffs.size() == 2);
  CHECK(coeffs[0] == config.phi[0]);
  CHECK(coeffs[1] == config.phi[1]);
  CHECK(subject.series.time_points() == 100);
  CHECK(subject.series.channels() == 3);
}

TEST_CASE("generate_subject: zero coefficients give white noise") {
  SimulationConfig config = small_config();
  config.generator_lag = 1;
  config.phi = {Eigen::MatrixXd::Zero(3, 3)};
  config.random_effect_sd = {Eigen::MatrixXd::Zero(3, 3)};
  Rng rng(35);
  const int t = 4000;
  const SubjectRecord subject = generate_subject(config, 1, t, rng);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const Eigen::VectorXd x = subject.series.samples.col(j);
    const double mean = x.mean();
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i + 1 < t; ++i) {
      num += (x[i] - mean) * (x[i + 1] - mean);
      den += (x[i] - mean) * (x[i] - mean);
    }
    CHECK(std::abs(num / den) < 2.0 / std::sqrt(static_cast<double>(t)));
  }
}

TEST_CASE("generate_subject rejects configs that cannot stay causal") {
  SimulationConfig config = small_config();
  config.random_effect_sd.assign(2, Eigen::MatrixXd::Constant(3, 3, 10.0));
  Rng rng(36);
  CHECK_THROWS_AS(generate_subject(config, 1, 50, rng), NumericalError);
}

TEST_CASE("subject-level coefficients are causal after resampling") {
  SimulationConfig config = small_config();
  // large enough to force occasional resampling, small enough to succeed
  config.random_effect_sd.assign(2, Eigen::MatrixXd::Constant(3, 3, 0.12));
  Rng rng(37);
  for (int i = 0; i < 20; ++i) {
    std::vector<Eigen::MatrixXd> coeffs;
    generate_subject(config, 1, 50, rng, &coeffs);
    CHECK(companion_spectral_radius(coeffs) < 1.0);
  }
}

TEST_CASE("config validation catches the usual mistakes") {
  SimulationConfig config = small_config();
  config.seed_set = false;
  CHECK_THROWS_AS(config.validate(), UsageError);

  config = small_config();
  config.phi[0] *= 10.0;  // non-causal
  CHECK_THROWS_AS(config.validate(), UsageError);

  config = small_config();
  config.random_effect_sd.pop_back();
  CHECK_THROWS_AS(config.validate(), UsageError);

  config = small_config();
  config.time_points.clear();
  CHECK_THROWS_AS(config.validate(), UsageError);
}

TEST_CASE("run_replicates: MSE identity and report shape") {
  SimulationConfig config = small_config();
  config.threads = 2;
  const SimulationReport report = run_replicates(config);
  REQUIRE(report.regimes.size() == 1);
  const RegimeReport& regime = report.regimes[0];
  CHECK(regime.time_points == 150);
  CHECK(regime.replicates_used + regime.convergence_failures == 30);

  for (const auto* block : {&regime.phi1, &regime.tau1}) {
    const Eigen::MatrixXd identity_gap =
        (block->bias.array().square() + block->sd.array().square() - block->mse.array())
            .cwiseAbs();
    CHECK(identity_gap.maxCoeff() < 1e-10);
  }
}

TEST_CASE("run_replicates: zero tau generator keeps mean tau estimates near zero") {
  SimulationConfig config = small_config();
  config.random_effect_sd.assign(2, Eigen::MatrixXd::Zero(3, 3));
  config.replicates = 30;
  const SimulationReport report = run_replicates(config);
  const RegimeReport& regime = report.regimes[0];
  // mean tau-hat = bias since truth is 0
  CHECK(regime.tau1.bias.maxCoeff() <= 0.05);
}

TEST_CASE("run_replicates is deterministic across thread counts") {
  SimulationConfig config = small_config();
  config.replicates = 10;
  config.threads = 1;
  const SimulationReport a = run_replicates(config);
  config.threads = 4;
  const SimulationReport b = run_replicates(config);
  const std::string ja = json_to_string(simulation_report_to_json(a, config));
  const std::string jb = json_to_string(simulation_report_to_json(b, config));
  CHECK(ja == jb);
}

TEST_CASE("doubling the burn-in moves mean MSE by less than 2%") {
  SimulationConfig config = small_config();
  config.replicates = 40;
  const SimulationReport base = run_replicates(config);
  config.burn_in = 1000;
  const SimulationReport longer = run_replicates(config);
  const double a = base.regimes[0].phi1.mean_mse;
  const double b = longer.regimes[0].phi1.mean_mse;
  CHECK(std::abs(a - b) / a < 0.02);
}

TEST_CASE("simulation config JSON round trip") {
  const SimulationConfig config = small_config();
  const SimulationConfig reloaded = simulation_config_from_json(simulation_config_to_json(config));
  CHECK(reloaded.channels == config.channels);
  CHECK(reloaded.subjects_per_group == config.subjects_per_group);
  CHECK(reloaded.phi[0] == config.phi[0]);
  CHECK(reloaded.phi[1] == config.phi[1]);
  CHECK(reloaded.random_effect_sd[0] == config.random_effect_sd[0]);
  CHECK(reloaded.seed == config.seed);
  CHECK(reloaded.time_points == config.time_points);
}

TEST_CASE("simulation config JSON requires a seed and accepts scalar SDs") {
  nlohmann::json doc;
  doc["channels"] = 4;
  CHECK_THROWS_AS(simulation_config_from_json(doc), UsageError);

  doc["seed"] = 9;
  doc["generator_lag"] = 2;
  doc["random_effect_sd"] = 0.07;
  const SimulationConfig config = simulation_config_from_json(doc);
  CHECK(config.channels == 4);
  CHECK(config.random_effect_sd.size() == 2);
  CHECK(config.random_effect_sd[0](1, 2) == 0.07);
  CHECK(config.phi.size() == 2);  // generated from the seed
  CHECK(companion_spectral_radius(config.phi) < 1.0);
}
