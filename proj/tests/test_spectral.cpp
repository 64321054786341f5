#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "fremer/rng.hpp"
#include "fremer/spectral.hpp"

using namespace fremer;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Independent oracle: plain summation of the forward DFT, kept free of the
// library's transform machinery.
std::vector<cplx> dft_direct(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    double re = 0.0;
    double im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -kTwoPi * static_cast<double>(k) * static_cast<double>(i) /
                         static_cast<double>(n);
      re += x[i] * std::cos(ang);
      im += x[i] * std::sin(ang);
    }
    out[k] = cplx(re, im);
  }
  return out;
}

std::vector<double> random_series(Rng& rng, std::size_t n) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform(-2.0, 2.0);
  return x;
}

double inf_norm(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST_CASE("rfft of a constant series is DC-only") {
  const double c = 2.75;
  Spectrum s = rfft(std::vector<double>{c, c, c, c});
  REQUIRE(s.coeffs.size() == 3);
  CHECK(s.coeffs[0].real() == doctest::Approx(4.0 * c).epsilon(1e-12));
  CHECK(s.coeffs[0].imag() == 0.0);
  CHECK(std::abs(s.coeffs[1]) < 1e-12);
  CHECK(std::abs(s.coeffs[2]) < 1e-12);
}

TEST_CASE("rfft of cos(2*pi*n/8) matches the direct summation") {
  std::vector<double> x(8);
  for (std::size_t n = 0; n < 8; ++n) x[n] = std::cos(kTwoPi * static_cast<double>(n) / 8.0);
  Spectrum s = rfft(x);
  REQUIRE(s.coeffs.size() == 5);
  CHECK(std::abs(s.coeffs[1] - cplx(4.0, 0.0)) < 1e-12);
  for (std::size_t k : {std::size_t{0}, std::size_t{2}, std::size_t{3}, std::size_t{4}}) {
    CHECK(std::abs(s.coeffs[k]) < 1e-12);
  }
  // cross-check the whole spectrum against the oracle
  auto oracle = dft_direct(x);
  for (std::size_t k = 0; k < oracle.size(); ++k) {
    CHECK(std::abs(s.coeffs[k] - oracle[k]) < 1e-10);
  }
}

TEST_CASE("pure period-24 series of length 360 concentrates at bin 15") {
  std::vector<double> x(360);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::cos(kTwoPi * static_cast<double>(n) / 24.0);
  Spectrum s = rfft(x);
  double off_bin = 0.0;
  for (std::size_t k = 0; k < s.coeffs.size(); ++k) {
    if (k != 15) off_bin = std::max(off_bin, std::abs(s.coeffs[k]));
  }
  CHECK(std::abs(s.coeffs[15] - cplx(180.0, 0.0)) < 1e-8);
  CHECK(off_bin < 1e-8);
}

TEST_CASE("rfft rejects non-finite samples with the offending index") {
  std::vector<double> x{1.0, 2.0, std::nan(""), 4.0};
  CHECK_THROWS_WITH_AS(static_cast<void>(rfft(x)), doctest::Contains("index 2"),
                       std::invalid_argument);
  CHECK_THROWS_AS(static_cast<void>(rfft(std::vector<double>{})), std::invalid_argument);
}

TEST_CASE("irfft: DC-only spectrum yields an all-ones series") {
  for (std::size_t n : {std::size_t{4}, std::size_t{9}}) {
    Spectrum s;
    s.origin_len = n;
    s.coeffs.assign(n / 2 + 1, cplx(0.0, 0.0));
    s.coeffs[0] = cplx(static_cast<double>(n), 0.0);
    auto x = irfft(s);
    REQUIRE(x.size() == n);
    for (double v : x) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("irfft rejects inconsistent lengths") {
  Spectrum s;
  s.origin_len = 8;
  s.coeffs.assign(4, cplx(0.0, 0.0));  // should be 5
  CHECK_THROWS_AS(static_cast<void>(irfft(s)), std::invalid_argument);
}

TEST_CASE("round-trip holds for awkward lengths including 97") {
  Rng rng(20240901);
  for (std::size_t n : {std::size_t{1}, std::size_t{2}, std::size_t{31}, std::size_t{97},
                        std::size_t{360}, std::size_t{864}}) {
    auto x = random_series(rng, n);
    auto back = irfft(rfft(x));
    REQUIRE(back.size() == n);
    const double tol = 1e-9 * (1.0 + inf_norm(x));
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(back[i] - x[i]) < tol);
  }
}

TEST_CASE("all lengths up to 64 agree with the direct DFT oracle") {
  Rng rng(7);
  for (std::size_t n = 1; n <= 64; ++n) {
    auto x = random_series(rng, n);
    Spectrum s = rfft(x);
    auto oracle = dft_direct(x);
    REQUIRE(s.coeffs.size() == oracle.size());
    double scale = 0.0;
    for (const auto& v : oracle) scale = std::max(scale, std::abs(v));
    for (std::size_t k = 0; k < oracle.size(); ++k) {
      CHECK(std::abs(s.coeffs[k] - oracle[k]) <= 1e-10 * (1.0 + scale));
    }
  }
}

TEST_CASE("Parseval identity over random lengths") {
  Rng rng(99);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.bounded(300));
    auto x = random_series(rng, n);
    Spectrum s = rfft(x);
    double time_energy = 0.0;
    for (double v : x) time_energy += v * v;
    double freq_energy = std::norm(s.coeffs[0]);
    const std::size_t last = s.coeffs.size() - 1;
    for (std::size_t k = 1; k < last; ++k) freq_energy += 2.0 * std::norm(s.coeffs[k]);
    if (n % 2 == 0) {
      freq_energy += std::norm(s.coeffs[last]);
    } else if (last >= 1) {
      freq_energy += 2.0 * std::norm(s.coeffs[last]);
    }
    freq_energy /= static_cast<double>(n);
    CHECK(freq_energy == doctest::Approx(time_energy).epsilon(1e-8));
  }
}

TEST_CASE("rfft is linear") {
  Rng rng(123);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.bounded(200));
    auto x = random_series(rng, n);
    auto y = random_series(rng, n);
    const double a = rng.uniform(-3.0, 3.0);
    const double b = rng.uniform(-3.0, 3.0);
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = a * x[i] + b * y[i];
    Spectrum sx = rfft(x), sy = rfft(y), sz = rfft(z);
    double scale = 0.0;
    for (const auto& v : sz.coeffs) scale = std::max(scale, std::abs(v));
    for (std::size_t k = 0; k < sz.coeffs.size(); ++k) {
      const cplx want = a * sx.coeffs[k] + b * sy.coeffs[k];
      CHECK(std::abs(sz.coeffs[k] - want) <= 1e-9 * (1.0 + scale));
    }
  }
}

TEST_CASE("band filter splits DC into the bypass band") {
  Spectrum s;
  s.origin_len = 4;
  s.coeffs = {cplx(5, 0), cplx(1, 1), cplx(2, 0)};
  BandSplit split = apply_band_filter(s, BandSpec{1, 0});
  REQUIRE(split.low_band.size() == 1);
  CHECK(split.low_band[0] == cplx(5, 0));
  REQUIRE(split.backbone.size() == 2);
  CHECK(split.backbone[0] == cplx(1, 1));
  CHECK(split.backbone[1] == cplx(2, 0));
}

TEST_CASE("band spec with n_low=0 is rejected") {
  Spectrum s;
  s.origin_len = 4;
  s.coeffs = {cplx(5, 0), cplx(1, 1), cplx(2, 0)};
  CHECK_THROWS_AS(static_cast<void>(apply_band_filter(s, BandSpec{0, 0})), std::invalid_argument);
  CHECK_THROWS_AS(static_cast<void>(apply_band_filter(s, BandSpec{2, 1})), std::invalid_argument);
}

TEST_CASE("default ratios on the 433-bin task") {
  // L=720, T=144 -> 864 samples -> 433 bins
  REQUIRE(half_spectrum_len(864) == 433);
  BandSpec b = band_from_ratios(0.03, 0.01, 433);
  CHECK(b.n_low == 13);
  CHECK(b.n_high == 5);
  Spectrum s;
  s.origin_len = 864;
  s.coeffs.assign(433, cplx(1.0, 0.0));
  s.coeffs.back().imag(0.0);
  BandSplit split = apply_band_filter(s, b);
  CHECK(split.backbone.size() == 415);
}

TEST_CASE("ratio rule keeps the bypass band non-empty at ratio zero") {
  BandSpec b = band_from_ratios(0.0, 0.0, 10);
  CHECK(b.n_low == 1);
  CHECK(b.n_high == 0);
}

TEST_CASE("filter then recover with untouched backbone is the identity") {
  Rng rng(5);
  auto x = random_series(rng, 64);
  Spectrum s = rfft(x);
  BandSpec b{3, 0};
  BandSplit split = apply_band_filter(s, b);
  Spectrum back = recover_spectrum(split.backbone, split.low_band, b, s.origin_len);
  REQUIRE(back.coeffs.size() == s.coeffs.size());
  for (std::size_t k = 0; k < s.coeffs.size(); ++k) CHECK(back.coeffs[k] == s.coeffs[k]);
}

TEST_CASE("recover with a zero backbone keeps only the low band") {
  std::vector<cplx> low{cplx(4, 0), cplx(1, -1)};
  std::vector<cplx> backbone(2, cplx(0, 0));
  Spectrum s = recover_spectrum(backbone, low, BandSpec{2, 1}, 8);
  REQUIRE(s.coeffs.size() == 5);
  CHECK(s.coeffs[0] == cplx(4, 0));
  CHECK(s.coeffs[1] == cplx(1, -1));
  CHECK(s.coeffs[2] == cplx(0, 0));
  CHECK(s.coeffs[3] == cplx(0, 0));
  CHECK(s.coeffs[4] == cplx(0, 0));
}

TEST_CASE("recover zeroes the top n_high bins exactly") {
  Rng rng(17);
  auto x = random_series(rng, 40);
  Spectrum s = rfft(x);
  BandSpec b = band_from_ratios(0.1, 0.25, s.coeffs.size());
  REQUIRE(b.n_high == 6);
  BandSplit split = apply_band_filter(s, b);
  Spectrum back = recover_spectrum(split.backbone, split.low_band, b, 40);
  for (std::size_t k = back.coeffs.size() - b.n_high; k < back.coeffs.size(); ++k) {
    CHECK(back.coeffs[k] == cplx(0, 0));
  }
  CHECK_THROWS_AS(static_cast<void>(recover_spectrum(split.backbone, split.low_band, b, 44)),
                  std::invalid_argument);
}

TEST_CASE("alignment fixture: period 24, L=300, T=60") {
  AlignmentReport r = alignment_report(24.0, 300, 60);
  CHECK(r.complete_bin == doctest::Approx(15.0).epsilon(1e-12));
  CHECK(r.complete_is_exact);
  CHECK(r.input_bin_lo == 12);
  CHECK(r.input_bin_hi == 13);
  CHECK(r.leakage_ratio > 0.0);
}

TEST_CASE("alignment with period dividing the lookback has zero leakage") {
  AlignmentReport r = alignment_report(24.0, 240, 0);
  CHECK(r.complete_bin == doctest::Approx(10.0));
  CHECK(r.complete_is_exact);
  CHECK(r.input_bin_lo == 10);
  CHECK(r.input_bin_hi == 10);
  CHECK(r.leakage_ratio < 1e-12);
}

TEST_CASE("leakage is zero iff the period divides the lookback") {
  for (std::size_t period : {std::size_t{6}, std::size_t{10}, std::size_t{24}}) {
    for (std::size_t lb : {std::size_t{48}, std::size_t{50}, std::size_t{120}, std::size_t{130}}) {
      AlignmentReport r = alignment_report(static_cast<double>(period), lb, 0);
      if (lb % period == 0) {
        CHECK(r.leakage_ratio < 1e-12);
      } else {
        CHECK(r.leakage_ratio > 1e-9);
      }
    }
  }
}

TEST_CASE("alignment preconditions") {
  CHECK_THROWS_AS(static_cast<void>(alignment_report(1.0, 100, 10)), std::invalid_argument);
  CHECK_THROWS_AS(static_cast<void>(alignment_report(24.0, 1, 10)), std::invalid_argument);
}
