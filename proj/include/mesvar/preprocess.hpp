#pragma once

#include "mesvar/types.hpp"

namespace mesvar {

// Z-scores every channel to sample mean 0 and sample standard deviation 1
// (denominator T-1). Throws NumericalError for a constant channel.
MultiChannelSeries standardize(const MultiChannelSeries& series);

// Robust clipping: per channel, samples farther than k scaled-MAD units from
// the channel median are clipped to median +- k * 1.4826 * MAD. Everything
// inside the bound is untouched. Throws NumericalError when a channel's MAD
// is zero.
MultiChannelSeries replace_outliers(const MultiChannelSeries& series, double k);

// The standard preprocessing chain: outlier clipping first (so outliers do
// not inflate the scale), then z-scoring.
MultiChannelSeries preprocess(const MultiChannelSeries& series, double outlier_k);

}  // namespace mesvar
