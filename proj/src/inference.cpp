#include "mesvar/inference.hpp"

#include "mesvar/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mesvar {

namespace {

const MixedVarFit& fit_for_target(const std::vector<MixedVarFit>& fits, int target) {
  for (const auto& fit : fits)
    if (fit.target_channel == target) return fit;
  throw DataError("missing fit for target channel index " + std::to_string(target));
}

}  // namespace

BandInference granger_edges(const std::vector<MixedVarFit>& fits, const std::string& band,
                            const std::vector<std::string>& channel_names, double alpha,
                            double magnitude_quantile) {
  if (!(alpha >= 0.0) || !(alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
  if (!(magnitude_quantile >= 0.0) || !(magnitude_quantile < 1.0))
    throw UsageError("magnitude quantile must lie in [0, 1)");
  const auto r = static_cast<int>(channel_names.size());

  BandInference result;
  result.band = band;

  // Pool |estimates| per group across every coefficient of the band.
  std::vector<double> pooled_g1, pooled_g2;
  for (int target = 0; target < r; ++target) {
    const MixedVarFit& fit = fit_for_target(fits, target);
    if (fit.inference.size() != fit.beta_labels.size())
      throw DataError("fit for channel " + std::to_string(target) + " carries no inference");
    for (std::size_t j = 0; j < fit.beta_labels.size(); ++j) {
      (fit.beta_labels[j].group == 1 ? pooled_g1 : pooled_g2)
          .push_back(std::abs(fit.beta[static_cast<Eigen::Index>(j)]));
    }
  }
  result.magnitude_threshold_group1 = quantile(pooled_g1, magnitude_quantile);
  result.magnitude_threshold_group2 = quantile(pooled_g2, magnitude_quantile);

  for (int target = 0; target < r; ++target) {
    const MixedVarFit& fit = fit_for_target(fits, target);
    for (std::size_t j = 0; j < fit.beta_labels.size(); ++j) {
      const CoefficientLabel& label = fit.beta_labels[j];
      const CoefficientInference& inf = fit.inference[j];
      EdgeTest test;
      test.band = band;
      test.group = label.group;
      test.source = label.source;
      test.target = target;
      test.lag = label.lag;
      test.estimate = inf.estimate;
      test.se = inf.se;
      test.t = inf.t;
      test.df = inf.df;
      test.p_raw = inf.p;
      test.normal_fallback = inf.normal_fallback;
      test.significant = test.p_raw < alpha;
      const double threshold =
          label.group == 1 ? result.magnitude_threshold_group1 : result.magnitude_threshold_group2;
      test.magnitude_pass = std::abs(test.estimate) > threshold;
      result.tests.push_back(test);
    }
  }

  const auto m = static_cast<double>(result.tests.size());
  for (auto& test : result.tests) test.p_adjusted = std::min(1.0, m * test.p_raw);

  for (int g = 1; g <= 2; ++g) {
    ConnectivityGraph graph;
    graph.band = band;
    graph.group = g;
    graph.nodes = channel_names;
    for (const auto& test : result.tests) {
      if (test.group != g || !test.significant || !test.magnitude_pass) continue;
      graph.edges.push_back({test.source, test.target, test.lag, test.estimate, test.p_raw});
    }
    std::sort(graph.edges.begin(), graph.edges.end());
    (g == 1 ? result.graph_group1 : result.graph_group2) = std::move(graph);
  }
  return result;
}

WelchResult welch_group_difference(const MixedVarFit& fit, int source, int lag) {
  const Eigen::Index i1 = fit.coefficient_index(1, source, lag);
  const Eigen::Index i2 = fit.coefficient_index(2, source, lag);
  if (fit.inference.size() != fit.beta_labels.size())
    throw DataError("fit carries no inference; refit with inference enabled");

  const double v1 = fit.beta_cov(i1, i1);
  const double v2 = fit.beta_cov(i2, i2);
  if (!(v1 > 0.0) || !(v2 > 0.0)) throw NumericalError("degenerate coefficient variance in Welch test");
  const double cov = fit.beta_cov(i1, i2);

  WelchResult result;
  result.diff = fit.beta[i1] - fit.beta[i2];
  result.se_diff = std::sqrt(v1 + v2 - 2.0 * cov);
  result.t = result.diff / result.se_diff;
  const double df1 = fit.inference[static_cast<std::size_t>(i1)].df;
  const double df2 = fit.inference[static_cast<std::size_t>(i2)].df;
  if (std::isinf(df1) || std::isinf(df2)) {
    result.df = std::numeric_limits<double>::infinity();
    result.p = 2.0 * normal_sf(std::abs(result.t));
    return result;
  }
  result.df = (v1 + v2) * (v1 + v2) / (v1 * v1 / df1 + v2 * v2 / df2);
  result.p = t_test_p(result.t, result.df);
  return result;
}

LrtResult lrt_edge(const MixedVarFit& full_fit, const MixedVarFit& reduced_fit) {
  if (full_fit.mode != LikelihoodMode::kMl || reduced_fit.mode != LikelihoodMode::kMl)
    throw UsageError("likelihood-ratio test needs ML fits (REML deviances are not comparable)");
  const auto& full_labels = full_fit.beta_labels;
  const auto& reduced_labels = reduced_fit.beta_labels;
  if (reduced_labels.size() >= full_labels.size())
    throw UsageError("reduced model must have strictly fewer fixed columns");
  for (const auto& label : reduced_labels)
    if (std::find(full_labels.begin(), full_labels.end(), label) == full_labels.end())
      throw UsageError("reduced model fixed columns are not a subset of the full model's");

  LrtResult result;
  result.statistic = reduced_fit.deviance - full_fit.deviance;
  if (result.statistic < -1e-6)
    throw NumericalError("negative LRT statistic " + std::to_string(result.statistic) +
                         "; an optimization failed, re-run with more starts");
  result.statistic = std::max(result.statistic, 0.0);
  result.df = static_cast<int>(full_labels.size() - reduced_labels.size());
  result.p = chi_squared_sf(result.statistic, result.df);
  return result;
}

BonferroniResult bonferroni(const std::vector<double>& p_values, double alpha) {
  const auto m = static_cast<double>(p_values.size());
  BonferroniResult result;
  result.adjusted.reserve(p_values.size());
  result.reject.reserve(p_values.size());
  for (double p : p_values) {
    if (!(p >= 0.0) || !(p <= 1.0)) throw UsageError("p-values must lie in [0, 1]");
    const double adj = std::min(1.0, m * p);
    result.adjusted.push_back(adj);
    result.reject.push_back(adj < alpha);
  }
  return result;
}

GroupDifferenceGraph diff_graphs(const ConnectivityGraph& g1, const ConnectivityGraph& g2) {
  if (g1.band != g2.band) throw UsageError("difference graph needs matching bands");
  if (g1.nodes != g2.nodes) throw UsageError("difference graph needs matching node sets");

  GroupDifferenceGraph diff;
  diff.band = g1.band;
  diff.nodes = g1.nodes;
  auto in = [](const std::vector<GraphEdge>& edges, const GraphEdge& e) {
    return std::find(edges.begin(), edges.end(), e) != edges.end();
  };
  for (const auto& e : g1.edges)
    if (!in(g2.edges, e)) diff.only_group1.push_back(e);
  for (const auto& e : g2.edges)
    if (!in(g1.edges, e)) diff.only_group2.push_back(e);
  return diff;
}

std::vector<RandomSdHeatmaps> random_sd_heatmaps(const std::vector<MixedVarFit>& fits,
                                                 const std::string& band, Eigen::Index n_channels) {
  if (fits.empty()) throw DataError("no fits given");
  const int p = fits.front().lag_order;
  std::vector<RandomSdHeatmaps> maps;
  for (int lag = 1; lag <= p; ++lag) {
    RandomSdHeatmaps heat;
    heat.band = band;
    heat.lag = lag;
    heat.group1.resize(n_channels, n_channels);
    heat.group2.resize(n_channels, n_channels);
    for (Eigen::Index target = 0; target < n_channels; ++target) {
      const MixedVarFit& fit = fit_for_target(fits, static_cast<int>(target));
      // tau columns share the within-group ordering (lag-major, then source).
      const Eigen::Index base = static_cast<Eigen::Index>(lag - 1) * n_channels;
      heat.group1.row(target) = fit.components.tau.row(0).segment(base, n_channels);
      heat.group2.row(target) = fit.components.tau.row(1).segment(base, n_channels);
    }
    heat.abs_difference = (heat.group1 - heat.group2).cwiseAbs();
    maps.push_back(std::move(heat));
  }
  return maps;
}

}  // namespace mesvar
