#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace mesvar {

// Error hierarchy mirrored by the CLI exit codes: usage = 1, data = 2,
// numerical = 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// T x R sample matrix with channel metadata. Rows are time points, columns
// are channels. Immutable by convention once built (operations return copies).
struct MultiChannelSeries {
  Eigen::MatrixXd samples;                 // T x R
  std::vector<std::string> channel_names;  // length R, unique
  double sampling_rate_hz = 0.0;

  Eigen::Index time_points() const { return samples.rows(); }
  Eigen::Index channels() const { return samples.cols(); }
};

// Validates the MultiChannelSeries invariants: T >= 2, R >= 1, finite
// samples, unique channel names of matching length, positive sampling rate.
// Throws DataError naming the first offending entry.
void validate_series(const MultiChannelSeries& series);

struct SubjectRecord {
  std::string subject_id;
  int group_index = 0;  // 1 or 2
  MultiChannelSeries series;
};

struct StudyDataset {
  std::vector<SubjectRecord> subjects;
  std::vector<std::string> channel_names;
  double sampling_rate_hz = 0.0;

  std::size_t count_in_group(int group) const {
    std::size_t n = 0;
    for (const auto& s : subjects)
      if (s.group_index == group) ++n;
    return n;
  }
};

struct BandDefinition {
  std::string name;
  double low_hz = 0.0;
  double high_hz = 0.0;
};

// Checks 0 < low < high < fs/2; throws DataError otherwise.
void validate_band(const BandDefinition& band, double sampling_rate_hz);

// The canonical delta/theta/alpha/beta/gamma set with edges
// 0.5-4, 4-8, 8-12, 12-30, 30-50 Hz.
std::vector<BandDefinition> default_bands();

}  // namespace mesvar
