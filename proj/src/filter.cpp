#include "mesvar/filter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

namespace mesvar {

namespace {

constexpr double kPi = std::numbers::pi;

// Steady-state initial conditions of one biquad for a unit-amplitude step,
// the lfilter_zi construction specialized to second order: solve
// (I - A^T) zi = B with A the companion matrix of [1, a1, a2].
void biquad_step_state(const BiquadSection& s, double zi[2]) {
  const double m00 = 1.0 + s.a1, m01 = -1.0;
  const double m10 = s.a2, m11 = 1.0;
  const double r0 = s.b1 - s.a1 * s.b0;
  const double r1 = s.b2 - s.a2 * s.b0;
  const double det = m00 * m11 - m01 * m10;
  zi[0] = (r0 * m11 - m01 * r1) / det;
  zi[1] = (m00 * r1 - r0 * m10) / det;
}

void cascade_step_state(const std::vector<BiquadSection>& sections,
                        std::vector<std::array<double, 2>>& zi) {
  zi.resize(sections.size());
  double scale = 1.0;
  for (std::size_t k = 0; k < sections.size(); ++k) {
    double z[2];
    biquad_step_state(sections[k], z);
    zi[k] = {scale * z[0], scale * z[1]};
    const BiquadSection& s = sections[k];
    scale *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);  // section DC gain
  }
}

void sosfilt(const std::vector<BiquadSection>& sections, Eigen::VectorXd& x,
             std::vector<std::array<double, 2>> state) {
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const BiquadSection& s = sections[k];
    double z0 = state[k][0], z1 = state[k][1];
    for (Eigen::Index n = 0; n < x.size(); ++n) {
      const double xn = x[n];
      const double yn = s.b0 * xn + z0;
      z0 = s.b1 * xn - s.a1 * yn + z1;
      z1 = s.b2 * xn - s.a2 * yn;
      x[n] = yn;
    }
  }
}

// Expand cascade polynomials for the reported numerator/denominator form.
std::vector<double> poly_multiply(const std::vector<double>& p, const double q[3]) {
  std::vector<double> out(p.size() + 2, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) out[i + j] += p[i] * q[j];
  return out;
}

}  // namespace

std::complex<double> FilterCoefficients::response(double freq_hz) const {
  const std::complex<double> zinv =
      std::exp(std::complex<double>(0.0, -2.0 * kPi * freq_hz / sampling_rate_hz));
  std::complex<double> h(1.0, 0.0);
  for (const auto& s : sections) {
    h *= (s.b0 + s.b1 * zinv + s.b2 * zinv * zinv) /
         (1.0 + s.a1 * zinv + s.a2 * zinv * zinv);
  }
  return h;
}

double FilterCoefficients::max_pole_radius() const {
  double radius = 0.0;
  for (const auto& s : sections) {
    const double disc = s.a1 * s.a1 - 4.0 * s.a2;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      radius = std::max({radius, std::abs((-s.a1 + sq) / 2.0), std::abs((-s.a1 - sq) / 2.0)});
    } else {
      radius = std::max(radius, std::sqrt(s.a2));  // |p|^2 = a2 for conjugate pairs
    }
  }
  return radius;
}

FilterCoefficients design_bandpass(int order, const BandDefinition& band, double fs_hz) {
  if (order < 1) throw UsageError("filter order must be positive");
  validate_band(band, fs_hz);
  using cd = std::complex<double>;

  // Analog Butterworth prototype: poles on the unit circle, left half plane.
  std::vector<cd> proto(static_cast<std::size_t>(order));
  for (int k = 1; k <= order; ++k) {
    const double theta = kPi * (2.0 * k - 1.0) / (2.0 * order) + kPi / 2.0;
    proto[static_cast<std::size_t>(k - 1)] = std::polar(1.0, theta);
  }

  // Pre-warped analog band edges (bilinear with fs2 = 2 convention).
  const double w_lo = 4.0 * std::tan(kPi * band.low_hz / fs_hz);
  const double w_hi = 4.0 * std::tan(kPi * band.high_hz / fs_hz);
  const double bw = w_hi - w_lo;
  const double wo = std::sqrt(w_lo * w_hi);

  // Low-pass to band-pass: each prototype pole splits into two.
  std::vector<cd> analog_poles;
  analog_poles.reserve(static_cast<std::size_t>(2 * order));
  for (const cd& p : proto) {
    const cd plp = p * (bw / 2.0);
    const cd disc = std::sqrt(plp * plp - cd(wo * wo, 0.0));
    analog_poles.push_back(plp + disc);
    analog_poles.push_back(plp - disc);
  }
  const double gain_analog = std::pow(bw, order);  // n zeros at the origin

  // Bilinear transform. The n zeros at the analog origin map to z = +1, and
  // the n-fold degree deficit contributes n zeros at z = -1.
  const double fs4 = 4.0;
  std::vector<cd> digital_poles;
  digital_poles.reserve(analog_poles.size());
  cd pole_prod(1.0, 0.0);
  for (const cd& p : analog_poles) {
    digital_poles.push_back((fs4 + p) / (fs4 - p));
    pole_prod *= (fs4 - p);
  }
  const double gain = gain_analog * (std::pow(fs4, order) / pole_prod).real();

  // Group poles into real-coefficient pairs: conjugates together, leftover
  // real poles paired among themselves.
  std::vector<std::pair<cd, cd>> pairs;
  std::vector<cd> reals;
  constexpr double kImagTol = 1e-10;
  std::vector<bool> used(digital_poles.size(), false);
  for (std::size_t i = 0; i < digital_poles.size(); ++i) {
    if (used[i]) continue;
    const cd& p = digital_poles[i];
    if (std::abs(p.imag()) < kImagTol * std::max(1.0, std::abs(p.real()))) {
      reals.push_back(p);
      used[i] = true;
      continue;
    }
    std::size_t best = i;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t j = i + 1; j < digital_poles.size(); ++j) {
      if (used[j]) continue;
      const double d = std::abs(digital_poles[j] - std::conj(p));
      if (d < best_dist) {
        best_dist = d;
        best = j;
      }
    }
    if (best == i) throw NumericalError("unpaired complex pole in band-pass design");
    used[i] = used[best] = true;
    pairs.emplace_back(p, digital_poles[best]);
  }
  std::sort(reals.begin(), reals.end(), [](const cd& a, const cd& b) { return a.real() < b.real(); });
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) pairs.emplace_back(reals[i], reals[i + 1]);
  if (reals.size() % 2 != 0) throw NumericalError("odd real pole count in band-pass design");

  // Near-resonant sections (largest pole modulus) go last in the cascade.
  std::sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) {
    return std::max(std::abs(x.first), std::abs(x.second)) <
           std::max(std::abs(y.first), std::abs(y.second));
  });

  FilterCoefficients coeffs;
  coeffs.prototype_order = order;
  coeffs.band = band;
  coeffs.sampling_rate_hz = fs_hz;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const cd &p1 = pairs[k].first, &p2 = pairs[k].second;
    BiquadSection s;
    s.a1 = -(p1 + p2).real();
    s.a2 = (p1 * p2).real();
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;  // one zero at +1, one at -1 per section
    if (k == 0) {
      s.b0 *= gain;
      s.b2 *= gain;
    }
    coeffs.sections.push_back(s);
  }

  coeffs.numerator = {1.0};
  coeffs.denominator = {1.0};
  for (const auto& s : coeffs.sections) {
    const double bq[3] = {s.b0, s.b1, s.b2};
    const double aq[3] = {1.0, s.a1, s.a2};
    coeffs.numerator = poly_multiply(coeffs.numerator, bq);
    coeffs.denominator = poly_multiply(coeffs.denominator, aq);
  }
  if (coeffs.max_pole_radius() >= 1.0)
    throw NumericalError("designed band-pass is unstable (pole radius " +
                         std::to_string(coeffs.max_pole_radius()) + ")");
  return coeffs;
}

Eigen::VectorXd filtfilt_channel(const FilterCoefficients& coeffs, const Eigen::VectorXd& x) {
  const Eigen::Index t = x.size();
  const Eigen::Index pad = 3 * (coeffs.taps() - 1);
  if (t <= 2 * pad)
    throw DataError("series too short for zero-phase padding: need more than " +
                    std::to_string(2 * pad) + " samples, got " + std::to_string(t));

  // Odd reflection about both end points.
  Eigen::VectorXd ext(t + 2 * pad);
  for (Eigen::Index i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
  ext.segment(pad, t) = x;
  for (Eigen::Index i = 0; i < pad; ++i) ext[pad + t + i] = 2.0 * x[t - 1] - x[t - 2 - i];

  std::vector<std::array<double, 2>> zi;
  cascade_step_state(coeffs.sections, zi);

  auto scaled = [&](double v) {
    std::vector<std::array<double, 2>> s = zi;
    for (auto& z : s) {
      z[0] *= v;
      z[1] *= v;
    }
    return s;
  };

  sosfilt(coeffs.sections, ext, scaled(ext[0]));
  ext.reverseInPlace();
  sosfilt(coeffs.sections, ext, scaled(ext[0]));
  ext.reverseInPlace();
  return ext.segment(pad, t);
}

MultiChannelSeries filtfilt(const FilterCoefficients& coeffs, const MultiChannelSeries& series) {
  MultiChannelSeries out = series;
  for (Eigen::Index j = 0; j < series.samples.cols(); ++j)
    out.samples.col(j) = filtfilt_channel(coeffs, series.samples.col(j));
  return out;
}

BandDecomposition decompose_bands(const MultiChannelSeries& series,
                                  const std::vector<BandDefinition>& bands) {
  BandDecomposition decomposition;
  for (const auto& band : bands) {
    const FilterCoefficients coeffs = design_bandpass(3, band, series.sampling_rate_hz);
    decomposition.components[band.name] = filtfilt(coeffs, series);
  }
  return decomposition;
}

}  // namespace mesvar
