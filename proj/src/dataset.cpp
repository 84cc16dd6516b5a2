#include "mesvar/dataset.hpp"

#include "mesvar/format.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace mesvar {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

MultiChannelSeries read_subject_csv(const fs::path& csv_path,
                                    const std::vector<std::string>& expected_channels,
                                    double sampling_rate_hz) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open subject CSV '" + csv_path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty subject CSV '" + csv_path.string() + "'");
  const auto header = split_csv_line(strip_cr(line));
  if (header != expected_channels) {
    std::string got;
    for (std::size_t i = 0; i < header.size(); ++i) got += (i ? "," : "") + header[i];
    throw DataError("channel mismatch in '" + csv_path.string() + "': header [" + got +
                    "] does not match manifest channel list");
  }

  const std::size_t r = expected_channels.size();
  std::vector<double> flat;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != r)
      throw DataError("row " + std::to_string(rows + 1) + " of '" + csv_path.string() + "' has " +
                      std::to_string(fields.size()) + " fields, expected " + std::to_string(r));
    for (std::size_t j = 0; j < r; ++j) {
      double v;
      if (!parse_double(fields[j], v))
        throw DataError("unparsable sample '" + fields[j] + "' at row " + std::to_string(rows + 1) +
                        ", channel '" + expected_channels[j] + "' in '" + csv_path.string() + "'");
      if (!std::isfinite(v))
        throw DataError("non-finite sample at row " + std::to_string(rows + 1) + ", channel '" +
                        expected_channels[j] + "' in '" + csv_path.string() + "'");
      flat.push_back(v);
    }
    ++rows;
  }

  MultiChannelSeries series;
  series.channel_names = expected_channels;
  series.sampling_rate_hz = sampling_rate_hz;
  series.samples.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(r));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < r; ++j)
      series.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = flat[i * r + j];
  validate_series(series);
  return series;
}

void write_subject_csv(const MultiChannelSeries& series, const fs::path& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw DataError("cannot write subject CSV '" + csv_path.string() + "'");
  for (std::size_t j = 0; j < series.channel_names.size(); ++j)
    out << (j ? "," : "") << series.channel_names[j];
  out << "\n";
  for (Eigen::Index i = 0; i < series.samples.rows(); ++i) {
    for (Eigen::Index j = 0; j < series.samples.cols(); ++j)
      out << (j ? "," : "") << format_double(series.samples(i, j));
    out << "\n";
  }
  if (!out) throw DataError("write failed for '" + csv_path.string() + "'");
}

StudyDataset load_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest '" + manifest_path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("manifest '" + manifest_path.string() + "' is not valid JSON: " + e.what());
  }

  if (!doc.is_object() || !doc.contains("sampling_rate_hz") || !doc.contains("channels") ||
      !doc.contains("subjects"))
    throw DataError("manifest must contain sampling_rate_hz, channels and subjects");
  if (!doc["sampling_rate_hz"].is_number())
    throw DataError("manifest sampling_rate_hz must be a number");
  const double fs_hz = doc["sampling_rate_hz"].get<double>();
  if (!(fs_hz > 0.0)) throw DataError("manifest sampling_rate_hz must be positive");

  std::vector<std::string> channels;
  for (const auto& c : doc["channels"]) {
    if (!c.is_string()) throw DataError("manifest channels must be strings");
    channels.push_back(c.get<std::string>());
  }
  if (channels.empty()) throw DataError("manifest declares no channels");

  StudyDataset dataset;
  dataset.channel_names = channels;
  dataset.sampling_rate_hz = fs_hz;

  const fs::path base = manifest_path.has_parent_path() ? manifest_path.parent_path() : fs::path(".");
  for (const auto& subj : doc["subjects"]) {
    if (!subj.is_object() || !subj.contains("id") || !subj.contains("group") || !subj.contains("csv"))
      throw DataError("each manifest subject needs id, group and csv");
    SubjectRecord record;
    record.subject_id = subj["id"].get<std::string>();
    if (!subj["group"].is_number_integer())
      throw DataError("subject '" + record.subject_id + "' group must be an integer");
    record.group_index = subj["group"].get<int>();
    if (record.group_index != 1 && record.group_index != 2)
      throw DataError("subject '" + record.subject_id + "' group must be 1 or 2, got " +
                      std::to_string(record.group_index));
    record.series = read_subject_csv(base / subj["csv"].get<std::string>(), channels, fs_hz);
    dataset.subjects.push_back(std::move(record));
  }
  if (dataset.subjects.empty()) throw DataError("manifest declares no subjects");
  return dataset;
}

fs::path save_dataset(const StudyDataset& dataset, const fs::path& dir,
                      const std::string& manifest_name) {
  fs::create_directories(dir);
  json doc;
  doc["sampling_rate_hz"] = dataset.sampling_rate_hz;
  doc["channels"] = dataset.channel_names;
  doc["subjects"] = json::array();
  for (const auto& subject : dataset.subjects) {
    const std::string csv_name = subject.subject_id + ".csv";
    write_subject_csv(subject.series, dir / csv_name);
    doc["subjects"].push_back({{"id", subject.subject_id},
                               {"group", subject.group_index},
                               {"csv", csv_name}});
  }
  const fs::path manifest_path = dir / manifest_name;
  std::ofstream out(manifest_path);
  if (!out) throw DataError("cannot write manifest '" + manifest_path.string() + "'");
  out << doc.dump(2) << "\n";
  return manifest_path;
}

}  // namespace mesvar
