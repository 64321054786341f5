#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fremer {

using cplx = std::complex<double>;

// One instance's real-valued, evenly-sampled workload sequence.
struct TimeSeries {
  std::vector<double> values;
  double step_seconds = 1.0;   // sampling interval
  double start_epoch = 0.0;    // epoch seconds of values[0]
  std::string id;
};

// Complex half-spectrum of a real series of length origin_len:
// floor(origin_len/2)+1 coefficients, DC imaginary part exactly zero, and for
// even origin_len the Nyquist imaginary part exactly zero.
struct Spectrum {
  std::vector<cplx> coeffs;
  std::size_t origin_len = 0;
};

// Band layout over a half-spectrum: the lowest n_low bins (always including
// DC) bypass the model backbone; the highest n_high bins are discarded.
struct BandSpec {
  std::size_t n_low = 1;
  std::size_t n_high = 0;

  // Throws std::invalid_argument unless n_low >= 1 and
  // n_low + n_high < spectrum_len.
  void validate(std::size_t spectrum_len) const;
};

struct BandSplit {
  std::vector<cplx> backbone;  // bins [n_low, len - n_high)
  std::vector<cplx> low_band;  // bins [0, n_low), verbatim
};

struct AlignmentReport {
  double complete_bin = 0.0;    // (L+T)/period
  bool complete_is_exact = false;
  std::size_t input_bin_lo = 0;  // floor(L/period)
  std::size_t input_bin_hi = 0;  // ceil(L/period)
  double leakage_ratio = 0.0;    // tone energy outside the two nearest input bins
};

std::size_t half_spectrum_len(std::size_t origin_len);

// Forward real DFT (unnormalized). Throws std::invalid_argument on empty
// input or a non-finite sample (the message names the offending index).
Spectrum rfft(std::span<const double> x);
Spectrum rfft(const TimeSeries& x);

// Inverse of rfft with 1/N scaling; output length = origin_len. Throws on a
// coefficient count inconsistent with origin_len.
std::vector<double> irfft(const Spectrum& s);

// Band counts from the default ratio rule: n = ceil(ratio * bins), with the
// bypass band floored at one bin so DC is always bypassed.
BandSpec band_from_ratios(double hpf_ratio, double lpf_ratio, std::size_t bins);

BandSplit apply_band_filter(const Spectrum& s, const BandSpec& b);

// low_band ++ backbone ++ n_high zero bins; DC/Nyquist imaginary parts are
// forced to exact zero. Lengths must sum to half_spectrum_len(origin_len) - n_high.
Spectrum recover_spectrum(std::span<const cplx> backbone,
                          std::span<const cplx> low_band, const BandSpec& b,
                          std::size_t origin_len);

// Frequency-resolution diagnostics for a target period under lookback L and
// horizon T. Requires period > 1 and L >= 2.
AlignmentReport alignment_report(double period, std::size_t lookback,
                                 std::size_t horizon);

}  // namespace fremer
