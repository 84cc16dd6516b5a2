#pragma once

#include "mesvar/mixed_model.hpp"
#include "mesvar/types.hpp"

#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace mesvar {

struct EdgeTest {
  std::string band;
  int group = 0;
  int source = 0;  // r': 0-based channel index
  int target = 0;  // r
  int lag = 0;
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;  // Bonferroni over all tests of the call
  bool significant = false;       // p_raw < alpha
  bool magnitude_pass = false;    // |estimate| above the pooled quantile
  bool normal_fallback = false;
};

struct GraphEdge {
  int source = 0;
  int target = 0;
  int lag = 0;
  double coefficient = 0.0;
  double p = 1.0;
  bool operator<(const GraphEdge& other) const {
    return std::tie(source, target, lag) < std::tie(other.source, other.target, other.lag);
  }
  bool operator==(const GraphEdge& other) const {
    return source == other.source && target == other.target && lag == other.lag;
  }
};

// Directed graph for one (band, group): edge present iff the coefficient is
// significant AND clears the magnitude threshold.
struct ConnectivityGraph {
  std::string band;
  int group = 0;
  std::vector<std::string> nodes;  // channel names
  std::vector<GraphEdge> edges;    // sorted by (source, target, lag)
};

struct GroupDifferenceGraph {
  std::string band;
  std::vector<std::string> nodes;
  std::vector<GraphEdge> only_group1;
  std::vector<GraphEdge> only_group2;
};

struct BandInference {
  std::string band;
  std::vector<EdgeTest> tests;
  ConnectivityGraph graph_group1;
  ConnectivityGraph graph_group2;
  double magnitude_threshold_group1 = 0.0;
  double magnitude_threshold_group2 = 0.0;
};

// Granger decisions for one band: `fits` must cover every target channel.
// significant iff Satterthwaite p < alpha; magnitude_pass iff |estimate|
// exceeds the magnitude_quantile quantile of |estimates| pooled per group
// over all coefficients of the band.
BandInference granger_edges(const std::vector<MixedVarFit>& fits, const std::string& band,
                            const std::vector<std::string>& channel_names, double alpha,
                            double magnitude_quantile);

struct WelchResult {
  double diff = 0.0;
  double se_diff = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

// Welch-Satterthwaite comparison of the two groups' coefficients for
// (source, lag) within one fit. The cross-group covariance term comes from
// beta_cov (structurally zero for group-disjoint designs).
WelchResult welch_group_difference(const MixedVarFit& fit, int source, int lag);

struct LrtResult {
  double statistic = 0.0;
  int df = 0;
  double p = 1.0;
};

// statistic = ml_deviance(reduced) - ml_deviance(full), chi-squared with one
// df per removed column. A statistic below -1e-6 signals a failed
// optimization and is an error.
LrtResult lrt_edge(const MixedVarFit& full_fit, const MixedVarFit& reduced_fit);

struct BonferroniResult {
  std::vector<double> adjusted;
  std::vector<bool> reject;
};
BonferroniResult bonferroni(const std::vector<double>& p_values, double alpha);

GroupDifferenceGraph diff_graphs(const ConnectivityGraph& g1, const ConnectivityGraph& g2);

// Fig.-6-style summaries: per group, matrix (target, source) of random-slope
// SDs at each lag, plus the entrywise |group1 - group2| difference.
struct RandomSdHeatmaps {
  std::string band;
  int lag = 0;
  Eigen::MatrixXd group1;      // R x R, row = target, col = source
  Eigen::MatrixXd group2;
  Eigen::MatrixXd abs_difference;
};
std::vector<RandomSdHeatmaps> random_sd_heatmaps(const std::vector<MixedVarFit>& fits,
                                                 const std::string& band, Eigen::Index n_channels);

}  // namespace mesvar
