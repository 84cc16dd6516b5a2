#pragma once

#include "mesvar/inference.hpp"
#include "mesvar/mixed_model.hpp"
#include "mesvar/simulation.hpp"
#include "mesvar/var.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace mesvar {

// One JSON document per (band, target channel). Carries everything the
// graph stage needs, so inference re-runs on the serialized bundle are
// bit-identical (doubles survive the round trip exactly).
nlohmann::json fit_to_json(const MixedVarFit& fit, const std::vector<std::string>& channel_names);
MixedVarFit fit_from_json(const nlohmann::json& doc);

SimulationConfig simulation_config_from_json(const nlohmann::json& doc);
SimulationConfig load_simulation_config(const std::filesystem::path& path);
nlohmann::json simulation_config_to_json(const SimulationConfig& config);
nlohmann::json simulation_report_to_json(const SimulationReport& report,
                                         const SimulationConfig& config);

nlohmann::json lag_selection_to_json(const LagSelectionReport& report);
std::string lag_selection_to_csv(const LagSelectionReport& report);

// Matrix CSV with a leading label column and a header of column labels.
std::string matrix_to_csv(const Eigen::MatrixXd& matrix, const std::vector<std::string>& row_labels,
                          const std::vector<std::string>& col_labels);

// Graphviz DOT with p and coef edge attributes; every node is listed so an
// empty graph still draws the channel set.
std::string graph_to_dot(const ConnectivityGraph& graph, const std::string& name);
std::string difference_graph_to_dot(const GroupDifferenceGraph& graph, const std::string& name);

nlohmann::json edge_tests_to_json(const std::vector<EdgeTest>& tests,
                                  const std::vector<std::string>& channel_names);

// Minimal self-contained SVG heatmap: one rectangle per cell on a linear
// white-to-blue scale, labels on both axes.
std::string heatmap_to_svg(const Eigen::MatrixXd& matrix, const std::vector<std::string>& labels,
                           const std::string& title);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string json_to_string(const nlohmann::json& doc);

}  // namespace mesvar
