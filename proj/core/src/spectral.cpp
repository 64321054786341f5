#include "fremer/spectral.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "fft.hpp"

namespace fremer {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

std::size_t half_spectrum_len(std::size_t origin_len) {
  return origin_len / 2 + 1;
}

void BandSpec::validate(std::size_t spectrum_len) const {
  if (n_low < 1) {
    throw std::invalid_argument("spectral: band spec requires n_low >= 1 (DC is always bypassed)");
  }
  if (n_low + n_high >= spectrum_len) {
    throw std::invalid_argument("spectral: band spec exceeds spectrum length (" +
                                std::to_string(n_low) + "+" + std::to_string(n_high) +
                                " >= " + std::to_string(spectrum_len) + ")");
  }
}

Spectrum rfft(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("spectral: rfft input is empty");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw std::invalid_argument("spectral: non-finite sample at index " + std::to_string(i));
    }
  }
  const std::size_t n = x.size();
  std::vector<cplx> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = cplx(x[i], 0.0);
  detail::plan_for(n).forward(buf.data());

  Spectrum s;
  s.origin_len = n;
  s.coeffs.assign(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(half_spectrum_len(n)));
  s.coeffs.front().imag(0.0);
  if (n % 2 == 0) s.coeffs.back().imag(0.0);
  return s;
}

Spectrum rfft(const TimeSeries& x) { return rfft(std::span<const double>(x.values)); }

std::vector<double> irfft(const Spectrum& s) {
  const std::size_t n = s.origin_len;
  if (n == 0 || s.coeffs.size() != half_spectrum_len(n)) {
    throw std::invalid_argument("spectral: spectrum length " + std::to_string(s.coeffs.size()) +
                                " inconsistent with origin_len " + std::to_string(n));
  }
  if (n == 1) return {s.coeffs[0].real()};

  // Hermitian extension, then a full inverse transform; the result is real by
  // construction (DC/Nyquist imaginary parts are ignored).
  std::vector<cplx> buf(n);
  buf[0] = cplx(s.coeffs[0].real(), 0.0);
  const std::size_t k_max = s.coeffs.size() - 1;
  for (std::size_t k = 1; k < k_max; ++k) {
    buf[k] = s.coeffs[k];
    buf[n - k] = std::conj(s.coeffs[k]);
  }
  if (n % 2 == 0) {
    buf[k_max] = cplx(s.coeffs[k_max].real(), 0.0);
  } else {
    buf[k_max] = s.coeffs[k_max];
    buf[n - k_max] = std::conj(s.coeffs[k_max]);
  }
  detail::plan_for(n).inverse_unscaled(buf.data());
  std::vector<double> out(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real() * inv_n;
  return out;
}

BandSpec band_from_ratios(double hpf_ratio, double lpf_ratio, std::size_t bins) {
  // Small backward nudge so exact integer products do not round up.
  const auto count = [bins](double ratio) {
    return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(bins) - 1e-9));
  };
  BandSpec b;
  b.n_low = std::max<std::size_t>(1, count(hpf_ratio));
  b.n_high = count(lpf_ratio);
  b.validate(bins);
  return b;
}

BandSplit apply_band_filter(const Spectrum& s, const BandSpec& b) {
  b.validate(s.coeffs.size());
  BandSplit out;
  out.low_band.assign(s.coeffs.begin(), s.coeffs.begin() + static_cast<std::ptrdiff_t>(b.n_low));
  out.backbone.assign(s.coeffs.begin() + static_cast<std::ptrdiff_t>(b.n_low),
                      s.coeffs.end() - static_cast<std::ptrdiff_t>(b.n_high));
  return out;
}

Spectrum recover_spectrum(std::span<const cplx> backbone, std::span<const cplx> low_band,
                          const BandSpec& b, std::size_t origin_len) {
  const std::size_t len = half_spectrum_len(origin_len);
  b.validate(len);
  if (low_band.size() != b.n_low || low_band.size() + backbone.size() != len - b.n_high) {
    throw std::invalid_argument("spectral: recover_spectrum length mismatch (" +
                                std::to_string(low_band.size()) + "+" +
                                std::to_string(backbone.size()) + " vs " +
                                std::to_string(len) + "-" + std::to_string(b.n_high) + ")");
  }
  Spectrum s;
  s.origin_len = origin_len;
  s.coeffs.reserve(len);
  s.coeffs.insert(s.coeffs.end(), low_band.begin(), low_band.end());
  s.coeffs.insert(s.coeffs.end(), backbone.begin(), backbone.end());
  s.coeffs.resize(len, cplx(0.0, 0.0));
  s.coeffs.front().imag(0.0);
  if (origin_len % 2 == 0) s.coeffs.back().imag(0.0);
  return s;
}

AlignmentReport alignment_report(double period, std::size_t lookback, std::size_t horizon) {
  if (!(period > 1.0)) throw std::invalid_argument("spectral: alignment period must exceed 1 sample");
  if (lookback < 2) throw std::invalid_argument("spectral: alignment lookback must be >= 2");

  AlignmentReport r;
  const double complete = static_cast<double>(lookback + horizon) / period;
  r.complete_bin = complete;
  r.complete_is_exact = std::abs(complete - std::round(complete)) <= 1e-9 * std::max(1.0, complete);

  const double input_bin = static_cast<double>(lookback) / period;
  r.input_bin_lo = static_cast<std::size_t>(std::floor(input_bin + 1e-12));
  r.input_bin_hi = static_cast<std::size_t>(std::ceil(input_bin - 1e-12));

  // Unit-amplitude tone evaluated through the plain DFT sum; energy outside
  // the two nearest input bins (and their mirrors) is the leakage.
  const std::size_t n = lookback;
  std::vector<double> tone(n);
  for (std::size_t i = 0; i < n; ++i) {
    tone[i] = std::cos(kTwoPi * static_cast<double>(i) / period);
  }
  double total = 0.0;
  double in_bins = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double re = 0.0;
    double im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -kTwoPi * static_cast<double>((k * i) % n) / static_cast<double>(n);
      re += tone[i] * std::cos(ang);
      im += tone[i] * std::sin(ang);
    }
    const double e = re * re + im * im;
    total += e;
    const std::size_t mirror_lo = (n - r.input_bin_lo % n) % n;
    const std::size_t mirror_hi = (n - r.input_bin_hi % n) % n;
    if (k == r.input_bin_lo % n || k == r.input_bin_hi % n || k == mirror_lo || k == mirror_hi) {
      in_bins += e;
    }
  }
  r.leakage_ratio = total > 0.0 ? std::max(0.0, 1.0 - in_bins / total) : 0.0;
  return r;
}

}  // namespace fremer
