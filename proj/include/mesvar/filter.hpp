#pragma once

#include "mesvar/types.hpp"

#include <complex>
#include <map>
#include <string>
#include <vector>

namespace mesvar {

// One biquad stage, direct form II transposed:
//   y[n] = b0 x[n] + z0;  z0 = b1 x[n] - a1 y[n] + z1;  z1 = b2 x[n] - a2 y[n].
struct BiquadSection {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;  // a0 is 1 by construction
};

// Digital band-pass filter as a cascade of second-order sections, with the
// expanded transfer-function polynomials kept for reporting.
struct FilterCoefficients {
  std::vector<BiquadSection> sections;
  std::vector<double> numerator;    // b_0..b_m of the expanded cascade
  std::vector<double> denominator;  // a_0..a_m, a_0 = 1
  int prototype_order = 0;          // analog Butterworth order
  BandDefinition band;
  double sampling_rate_hz = 0.0;

  int taps() const { return static_cast<int>(2 * sections.size() + 1); }
  // Complex frequency response H(e^{i 2 pi f / fs}).
  std::complex<double> response(double freq_hz) const;
  double magnitude(double freq_hz) const { return std::abs(response(freq_hz)); }
  // Largest pole modulus across sections; < 1 for a stable design.
  double max_pole_radius() const;
};

// Butterworth band-pass of analog prototype order `order` (digital order
// 2*order): analog prototype -> low-pass-to-band-pass transform -> bilinear
// transform with frequency pre-warping. Band edges land exactly at the
// half-power (-3 dB) points.
FilterCoefficients design_bandpass(int order, const BandDefinition& band, double fs_hz);

// Forward-backward (zero phase) application with odd-reflection edge padding
// of length 3 * (taps - 1). Requires T > 2 * padding. The effective
// magnitude response is |H|^2.
Eigen::VectorXd filtfilt_channel(const FilterCoefficients& coeffs, const Eigen::VectorXd& x);
MultiChannelSeries filtfilt(const FilterCoefficients& coeffs, const MultiChannelSeries& series);

struct BandDecomposition {
  std::map<std::string, MultiChannelSeries> components;
};

// Independently band-passes the series once per requested band with a
// 3rd-order (analog prototype) zero-phase Butterworth.
BandDecomposition decompose_bands(const MultiChannelSeries& series,
                                  const std::vector<BandDefinition>& bands);

}  // namespace mesvar
