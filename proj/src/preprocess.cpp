#include "mesvar/preprocess.hpp"

#include "mesvar/stats.hpp"

#include <cmath>

namespace mesvar {

MultiChannelSeries standardize(const MultiChannelSeries& series) {
  MultiChannelSeries out = series;
  const Eigen::Index t = series.samples.rows();
  if (t < 2) throw DataError("standardize needs at least 2 samples");
  for (Eigen::Index j = 0; j < series.samples.cols(); ++j) {
    const double mean = series.samples.col(j).mean();
    const double ss = (series.samples.col(j).array() - mean).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(t - 1));
    if (!(sd > 0.0))
      throw NumericalError("channel '" + series.channel_names[static_cast<std::size_t>(j)] +
                           "' is constant; cannot standardize");
    out.samples.col(j) = (series.samples.col(j).array() - mean) / sd;
  }
  return out;
}

MultiChannelSeries replace_outliers(const MultiChannelSeries& series, double k) {
  if (!(k > 0.0)) throw UsageError("outlier threshold k must be positive");
  MultiChannelSeries out = series;
  for (Eigen::Index j = 0; j < series.samples.cols(); ++j) {
    std::vector<double> column(series.samples.col(j).data(),
                               series.samples.col(j).data() + series.samples.rows());
    const double med = median(column);
    const double mad = scaled_mad(column, med);
    if (!(mad > 0.0))
      throw NumericalError("channel '" + series.channel_names[static_cast<std::size_t>(j)] +
                           "' has zero MAD; outlier bound is degenerate");
    const double lo = med - k * mad;
    const double hi = med + k * mad;
    for (Eigen::Index i = 0; i < series.samples.rows(); ++i) {
      const double x = series.samples(i, j);
      out.samples(i, j) = x < lo ? lo : (x > hi ? hi : x);
    }
  }
  return out;
}

MultiChannelSeries preprocess(const MultiChannelSeries& series, double outlier_k) {
  return standardize(replace_outliers(series, outlier_k));
}

}  // namespace mesvar
