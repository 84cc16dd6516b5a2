#include "mesvar/types.hpp"

#include <cmath>
#include <set>

namespace mesvar {

void validate_series(const MultiChannelSeries& series) {
  const Eigen::Index t = series.samples.rows();
  const Eigen::Index r = series.samples.cols();
  if (t < 2) throw DataError("series needs at least 2 time points, got " + std::to_string(t));
  if (r < 1) throw DataError("series needs at least 1 channel");
  if (static_cast<Eigen::Index>(series.channel_names.size()) != r)
    throw DataError("channel name count " + std::to_string(series.channel_names.size()) +
                    " does not match sample columns " + std::to_string(r));
  std::set<std::string> seen;
  for (const auto& name : series.channel_names) {
    if (!seen.insert(name).second)
      throw DataError("duplicate channel name '" + name + "'");
  }
  if (!(series.sampling_rate_hz > 0.0))
    throw DataError("sampling rate must be positive");
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = 0; i < t; ++i) {
      if (!std::isfinite(series.samples(i, j)))
        throw DataError("non-finite sample at row " + std::to_string(i) + ", channel '" +
                        series.channel_names[static_cast<std::size_t>(j)] + "'");
    }
  }
}

void validate_band(const BandDefinition& band, double sampling_rate_hz) {
  if (!(band.low_hz > 0.0) || !(band.low_hz < band.high_hz) ||
      !(band.high_hz < sampling_rate_hz / 2.0)) {
    throw DataError("band '" + band.name + "' edges (" + std::to_string(band.low_hz) + ", " +
                    std::to_string(band.high_hz) + ") must satisfy 0 < low < high < fs/2 = " +
                    std::to_string(sampling_rate_hz / 2.0));
  }
}

std::vector<BandDefinition> default_bands() {
  return {{"delta", 0.5, 4.0},
          {"theta", 4.0, 8.0},
          {"alpha", 8.0, 12.0},
          {"beta", 12.0, 30.0},
          {"gamma", 30.0, 50.0}};
}

}  // namespace mesvar
