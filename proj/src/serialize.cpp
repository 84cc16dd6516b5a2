#include "mesvar/serialize.hpp"

#include "mesvar/format.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mesvar {

using nlohmann::json;

namespace {

json matrix_to_json(const Eigen::MatrixXd& matrix) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) row.push_back(matrix(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& doc) {
  const auto rows = static_cast<Eigen::Index>(doc.size());
  if (rows == 0) return {};
  const auto cols = static_cast<Eigen::Index>(doc[0].size());
  Eigen::MatrixXd matrix(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(doc[static_cast<std::size_t>(i)].size()) != cols)
      throw DataError("ragged matrix in JSON document");
    for (Eigen::Index j = 0; j < cols; ++j)
      matrix(i, j) = doc[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
  }
  return matrix;
}

// Infinite df arises from the normal fallback; JSON has no inf literal.
json df_to_json(double df) {
  if (std::isinf(df)) return "inf";
  return df;
}

double df_from_json(const json& value) {
  if (value.is_string()) return std::numeric_limits<double>::infinity();
  return value.get<double>();
}

}  // namespace

json fit_to_json(const MixedVarFit& fit, const std::vector<std::string>& channel_names) {
  json doc;
  doc["band"] = fit.band;
  doc["target_index"] = fit.target_channel;
  doc["target_channel"] = channel_names[static_cast<std::size_t>(fit.target_channel)];
  doc["lag_order"] = fit.lag_order;
  doc["mode"] = fit.mode == LikelihoodMode::kReml ? "reml" : "ml";
  doc["deviance"] = fit.deviance;
  doc["sigma"] = fit.components.sigma;
  doc["channels"] = channel_names;

  json fixed = json::array();
  for (std::size_t j = 0; j < fit.beta_labels.size(); ++j) {
    const auto& label = fit.beta_labels[j];
    json entry;
    entry["group"] = label.group;
    entry["source_index"] = label.source;
    entry["source"] = channel_names[static_cast<std::size_t>(label.source)];
    entry["lag"] = label.lag;
    entry["estimate"] = fit.beta[static_cast<Eigen::Index>(j)];
    if (!fit.inference.empty()) {
      const auto& inf = fit.inference[j];
      entry["se"] = inf.se;
      entry["t"] = inf.t;
      entry["df"] = df_to_json(inf.df);
      entry["p"] = inf.p;
      entry["normal_fallback"] = inf.normal_fallback;
    }
    fixed.push_back(std::move(entry));
  }
  doc["fixed_effects"] = std::move(fixed);

  doc["tau"] = matrix_to_json(fit.components.tau);
  doc["theta"] = std::vector<double>(fit.theta.data(), fit.theta.data() + fit.theta.size());
  doc["beta_cov"] = matrix_to_json(fit.beta_cov);

  json convergence;
  convergence["converged"] = fit.convergence.converged;
  convergence["evaluations"] = fit.convergence.evaluations;
  convergence["gradient_norm"] = fit.convergence.gradient_norm;
  convergence["scaled_gradient_norm"] = fit.convergence.scaled_gradient_norm;
  convergence["boundary_components"] = fit.convergence.boundary_components;
  doc["convergence"] = std::move(convergence);
  return doc;
}

MixedVarFit fit_from_json(const json& doc) {
  MixedVarFit fit;
  fit.band = doc.at("band").get<std::string>();
  fit.target_channel = doc.at("target_index").get<Eigen::Index>();
  fit.lag_order = doc.at("lag_order").get<int>();
  fit.mode = doc.at("mode").get<std::string>() == "ml" ? LikelihoodMode::kMl : LikelihoodMode::kReml;
  fit.deviance = doc.at("deviance").get<double>();
  fit.components.sigma = doc.at("sigma").get<double>();
  fit.components.tau = matrix_from_json(doc.at("tau"));
  fit.beta_cov = matrix_from_json(doc.at("beta_cov"));

  const auto& fixed = doc.at("fixed_effects");
  fit.beta.resize(static_cast<Eigen::Index>(fixed.size()));
  for (std::size_t j = 0; j < fixed.size(); ++j) {
    const auto& entry = fixed[j];
    CoefficientLabel label;
    label.group = entry.at("group").get<int>();
    label.source = entry.at("source_index").get<int>();
    label.lag = entry.at("lag").get<int>();
    fit.beta_labels.push_back(label);
    fit.beta[static_cast<Eigen::Index>(j)] = entry.at("estimate").get<double>();
    if (entry.contains("se")) {
      CoefficientInference inf;
      inf.estimate = entry.at("estimate").get<double>();
      inf.se = entry.at("se").get<double>();
      inf.t = entry.at("t").get<double>();
      inf.df = df_from_json(entry.at("df"));
      inf.p = entry.at("p").get<double>();
      inf.normal_fallback = entry.at("normal_fallback").get<bool>();
      fit.inference.push_back(inf);
    }
  }

  const auto& theta = doc.at("theta");
  fit.theta.resize(static_cast<Eigen::Index>(theta.size()));
  for (std::size_t j = 0; j < theta.size(); ++j)
    fit.theta[static_cast<Eigen::Index>(j)] = theta[j].get<double>();

  const auto& convergence = doc.at("convergence");
  fit.convergence.converged = convergence.at("converged").get<bool>();
  fit.convergence.evaluations = convergence.at("evaluations").get<int>();
  fit.convergence.gradient_norm = convergence.at("gradient_norm").get<double>();
  fit.convergence.scaled_gradient_norm = convergence.at("scaled_gradient_norm").get<double>();
  fit.convergence.boundary_components =
      convergence.at("boundary_components").get<std::vector<int>>();
  return fit;
}

namespace {

std::vector<Eigen::MatrixXd> lag_matrices_from_json(const json& doc, int channels, int lags,
                                                    const std::string& field) {
  std::vector<Eigen::MatrixXd> matrices;
  if (doc.is_number()) {
    matrices.assign(static_cast<std::size_t>(lags),
                    Eigen::MatrixXd::Constant(channels, channels, doc.get<double>()));
    return matrices;
  }
  if (!doc.is_array() || doc.empty())
    throw DataError("field '" + field + "' must be a number or an array");
  if (doc[0].is_number()) {
    // one scalar per lag
    for (const auto& v : doc)
      matrices.push_back(Eigen::MatrixXd::Constant(channels, channels, v.get<double>()));
    return matrices;
  }
  for (const auto& m : doc) matrices.push_back(matrix_from_json(m));
  return matrices;
}

}  // namespace

SimulationConfig simulation_config_from_json(const json& doc) {
  SimulationConfig config;
  if (!doc.contains("seed")) throw UsageError("simulation config must set a seed");
  config.seed = doc.at("seed").get<std::uint64_t>();
  config.seed_set = true;
  config.channels = doc.value("channels", config.channels);
  config.subjects_per_group = doc.value("subjects_per_group", config.subjects_per_group);
  config.generator_lag = doc.value("generator_lag", config.generator_lag);
  config.noise_sd = doc.value("noise_sd", config.noise_sd);
  config.replicates = doc.value("replicates", config.replicates);
  config.fit_lag = doc.value("fit_lag", config.fit_lag);
  config.burn_in = doc.value("burn_in", config.burn_in);
  if (doc.contains("time_points"))
    config.time_points = doc.at("time_points").get<std::vector<int>>();

  if (doc.contains("phi")) {
    config.phi = lag_matrices_from_json(doc.at("phi"), config.channels, config.generator_lag, "phi");
  } else {
    // Deterministic draw from a dedicated stream of the config seed.
    Rng rng = make_stream_rng(config.seed, 0x8000000000000000ULL);
    config.phi = default_generator_matrices(config.channels, config.generator_lag,
                                            doc.value("target_radius", 0.8), rng);
  }
  if (doc.contains("phi_group2"))
    config.phi_group2 = lag_matrices_from_json(doc.at("phi_group2"), config.channels,
                                               config.generator_lag, "phi_group2");
  const json sd = doc.contains("random_effect_sd") ? doc.at("random_effect_sd") : json(0.05);
  config.random_effect_sd =
      lag_matrices_from_json(sd, config.channels, config.generator_lag, "random_effect_sd");
  if (static_cast<int>(config.random_effect_sd.size()) != config.generator_lag ||
      static_cast<int>(config.phi.size()) != config.generator_lag)
    throw DataError("phi / random_effect_sd must carry one entry per generator lag");
  return config;
}

SimulationConfig load_simulation_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open simulation config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("simulation config is not valid JSON: " + std::string(e.what()));
  }
  return simulation_config_from_json(doc);
}

json simulation_config_to_json(const SimulationConfig& config) {
  json doc;
  doc["seed"] = config.seed;
  doc["channels"] = config.channels;
  doc["subjects_per_group"] = config.subjects_per_group;
  doc["generator_lag"] = config.generator_lag;
  doc["noise_sd"] = config.noise_sd;
  doc["replicates"] = config.replicates;
  doc["fit_lag"] = config.fit_lag;
  doc["burn_in"] = config.burn_in;
  doc["time_points"] = config.time_points;
  json phi = json::array();
  for (const auto& m : config.phi) phi.push_back(matrix_to_json(m));
  doc["phi"] = std::move(phi);
  if (config.phi_group2) {
    json phi2 = json::array();
    for (const auto& m : *config.phi_group2) phi2.push_back(matrix_to_json(m));
    doc["phi_group2"] = std::move(phi2);
  }
  json sd = json::array();
  for (const auto& m : config.random_effect_sd) sd.push_back(matrix_to_json(m));
  doc["random_effect_sd"] = std::move(sd);
  return doc;
}

json simulation_report_to_json(const SimulationReport& report, const SimulationConfig& config) {
  json doc;
  doc["config"] = simulation_config_to_json(config);
  json regimes = json::array();
  for (const auto& regime : report.regimes) {
    json entry;
    entry["time_points"] = regime.time_points;
    entry["replicates_used"] = regime.replicates_used;
    entry["convergence_failures"] = regime.convergence_failures;
    for (const auto* pair : {&regime.phi1, &regime.tau1}) {
      json block;
      block["bias"] = matrix_to_json(pair->bias);
      block["sd"] = matrix_to_json(pair->sd);
      block["mse"] = matrix_to_json(pair->mse);
      block["mean_abs_bias"] = pair->mean_abs_bias;
      block["mean_sd"] = pair->mean_sd;
      block["mean_mse"] = pair->mean_mse;
      entry[pair == &regime.phi1 ? "phi1" : "tau1"] = std::move(block);
    }
    regimes.push_back(std::move(entry));
  }
  doc["regimes"] = std::move(regimes);
  return doc;
}

json lag_selection_to_json(const LagSelectionReport& report) {
  json doc;
  doc["criteria"] = report.criteria;
  json selected = json::object();
  for (std::size_t s = 0; s < report.subject_ids.size(); ++s) {
    json row = json::object();
    for (std::size_t c = 0; c < report.criteria.size(); ++c)
      row[report.criteria[c]] = report.selected[s][c];
    selected[report.subject_ids[s]] = std::move(row);
  }
  doc["selected"] = std::move(selected);
  json modal = json::object();
  for (std::size_t c = 0; c < report.criteria.size(); ++c)
    modal[report.criteria[c]] = report.modal_selection[c];
  doc["modal"] = std::move(modal);
  doc["failed_subjects"] = report.failed_subjects;
  return doc;
}

std::string lag_selection_to_csv(const LagSelectionReport& report) {
  std::string out = "subject,criterion,p,value\n";
  for (const auto& row : report.table) {
    out += row.subject_id + "," + row.criterion + "," + std::to_string(row.lag) + "," +
           format_double(row.value) + "\n";
  }
  return out;
}

std::string matrix_to_csv(const Eigen::MatrixXd& matrix, const std::vector<std::string>& row_labels,
                          const std::vector<std::string>& col_labels) {
  std::string out;
  for (const auto& label : col_labels) out += "," + label;
  out += "\n";
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    out += row_labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) out += "," + format_double(matrix(i, j));
    out += "\n";
  }
  return out;
}

namespace {

std::string dot_edge(const std::vector<std::string>& nodes, const GraphEdge& edge,
                     const std::string& extra = {}) {
  return "  \"" + nodes[static_cast<std::size_t>(edge.source)] + "\" -> \"" +
         nodes[static_cast<std::size_t>(edge.target)] + "\" [coef=" + format_double(edge.coefficient) +
         ", p=" + format_double(edge.p) + ", lag=" + std::to_string(edge.lag) + extra + "];\n";
}

}  // namespace

std::string graph_to_dot(const ConnectivityGraph& graph, const std::string& name) {
  std::string out = "digraph \"" + name + "\" {\n";
  for (const auto& node : graph.nodes) out += "  \"" + node + "\";\n";
  for (const auto& edge : graph.edges) out += dot_edge(graph.nodes, edge);
  out += "}\n";
  return out;
}

std::string difference_graph_to_dot(const GroupDifferenceGraph& graph, const std::string& name) {
  std::string out = "digraph \"" + name + "\" {\n";
  for (const auto& node : graph.nodes) out += "  \"" + node + "\";\n";
  for (const auto& edge : graph.only_group1)
    out += dot_edge(graph.nodes, edge, ", color=green");
  for (const auto& edge : graph.only_group2)
    out += dot_edge(graph.nodes, edge, ", color=red");
  out += "}\n";
  return out;
}

json edge_tests_to_json(const std::vector<EdgeTest>& tests,
                        const std::vector<std::string>& channel_names) {
  json out = json::array();
  for (const auto& test : tests) {
    json entry;
    entry["band"] = test.band;
    entry["group"] = test.group;
    entry["source"] = channel_names[static_cast<std::size_t>(test.source)];
    entry["source_index"] = test.source;
    entry["target"] = channel_names[static_cast<std::size_t>(test.target)];
    entry["target_index"] = test.target;
    entry["lag"] = test.lag;
    entry["estimate"] = test.estimate;
    entry["se"] = test.se;
    entry["t"] = test.t;
    entry["df"] = df_to_json(test.df);
    entry["p_raw"] = test.p_raw;
    entry["p_adjusted"] = test.p_adjusted;
    entry["significant"] = test.significant;
    entry["magnitude_pass"] = test.magnitude_pass;
    entry["normal_fallback"] = test.normal_fallback;
    out.push_back(std::move(entry));
  }
  return out;
}

std::string heatmap_to_svg(const Eigen::MatrixXd& matrix, const std::vector<std::string>& labels,
                           const std::string& title) {
  const Eigen::Index n = matrix.rows();
  const int cell = 28, margin = 70, top = 40;
  const int width = margin + cell * static_cast<int>(n) + 20;
  const int height = top + margin / 2 + cell * static_cast<int>(n) + 20;
  const double lo = matrix.minCoeff();
  const double hi = matrix.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  svg << "<text x=\"" << margin << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    svg << "<text x=\"" << margin - 6 << "\" y=\"" << top + cell * i + cell / 2 + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << labels[static_cast<std::size_t>(i)] << "</text>\n";
    svg << "<text x=\"" << margin + cell * i + cell / 2 << "\" y=\"" << top + cell * n + 14
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << labels[static_cast<std::size_t>(i)] << "</text>\n";
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = (matrix(i, j) - lo) / span;
      const int shade = static_cast<int>(255.0 * (1.0 - v));
      svg << "<rect x=\"" << margin + cell * j << "\" y=\"" << top + cell * i << "\" width=\""
          << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << "," << shade
          << ",255)\" stroke=\"white\"/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::string json_to_string(const json& doc) {
  return doc.dump(2) + "\n";
}

}  // namespace mesvar
