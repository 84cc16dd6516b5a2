#pragma once

#include "mesvar/types.hpp"

#include <filesystem>

namespace mesvar {

// Reads a dataset manifest:
//   { "sampling_rate_hz": number, "channels": [string],
//     "subjects": [ { "id": string, "group": 1|2, "csv": relative-path } ] }
// Subject CSVs are resolved relative to the manifest's directory. Every
// series is dimension-checked against the manifest channel list and
// validated for finiteness.
StudyDataset load_manifest(const std::filesystem::path& manifest_path);

// Writes one CSV per subject (<id>.csv) plus a manifest under `dir`.
// load_manifest(save_dataset(...)) reproduces the dataset bit-for-bit.
std::filesystem::path save_dataset(const StudyDataset& dataset, const std::filesystem::path& dir,
                                   const std::string& manifest_name = "manifest.json");

// Subject CSV: header row of channel names, then one sample row per line.
MultiChannelSeries read_subject_csv(const std::filesystem::path& csv_path,
                                    const std::vector<std::string>& expected_channels,
                                    double sampling_rate_hz);

void write_subject_csv(const MultiChannelSeries& series, const std::filesystem::path& csv_path);

}  // namespace mesvar
