#include "fft.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <unordered_map>

namespace fremer::detail {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<std::size_t> factorize_smooth(std::size_t n) {
  std::vector<std::size_t> out;
  for (std::size_t r : {2, 3, 5, 7}) {
    while (n % r == 0) {
      out.push_back(r);
      n /= r;
    }
  }
  if (n != 1) out.clear();  // leftover prime > 7: caller falls back to Bluestein
  return out;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

struct FftPlan::Bluestein {
  std::size_t m = 0;                  // padded power-of-two length
  std::vector<cplx> chirp;            // exp(-i*pi*k^2/n)
  std::vector<cplx> filter_fft;       // FFT of the wrapped conjugate chirp
  std::unique_ptr<FftPlan> sub;
};

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n_ <= 1) return;
  radices_ = factorize_smooth(n_);
  smooth_ = !radices_.empty();
  if (smooth_) {
    // Per-level twiddles W_n^(q*k) for q in [0,r), k in [0,m), with the
    // level's local n = r*m; indexed q*m + k.
    std::size_t len = n_;
    for (std::size_t r : radices_) {
      const std::size_t m = len / r;
      std::vector<cplx> tw(len);
      for (std::size_t q = 0; q < r; ++q) {
        for (std::size_t k = 0; k < m; ++k) {
          const double ang = -kTwoPi * static_cast<double>(q * k) /
                             static_cast<double>(len);
          tw[q * m + k] = cplx(std::cos(ang), std::sin(ang));
        }
      }
      twiddle_.push_back(std::move(tw));
      std::vector<cplx> rt(r * r);
      for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t q = 0; q < r; ++q) {
          const double ang =
              -kTwoPi * static_cast<double>((j * q) % r) / static_cast<double>(r);
          rt[j * r + q] = cplx(std::cos(ang), std::sin(ang));
        }
      }
      roots_.push_back(std::move(rt));
      len = m;
    }
    return;
  }

  bluestein_ = std::make_unique<Bluestein>();
  auto& b = *bluestein_;
  b.m = next_pow2(2 * n_ - 1);
  b.sub = std::make_unique<FftPlan>(b.m);
  b.chirp.resize(n_);
  const std::size_t two_n = 2 * n_;
  for (std::size_t k = 0; k < n_; ++k) {
    // k^2 mod 2n keeps the angle argument small; k^2 fits in 64 bits for any
    // realistic series length.
    const std::size_t k2 = (k * k) % two_n;
    const double ang = -std::numbers::pi * static_cast<double>(k2) /
                       static_cast<double>(n_);
    b.chirp[k] = cplx(std::cos(ang), std::sin(ang));
  }
  b.filter_fft.assign(b.m, cplx(0.0, 0.0));
  b.filter_fft[0] = std::conj(b.chirp[0]);
  for (std::size_t k = 1; k < n_; ++k) {
    b.filter_fft[k] = std::conj(b.chirp[k]);
    b.filter_fft[b.m - k] = std::conj(b.chirp[k]);
  }
  b.sub->forward(b.filter_fft.data());
}

FftPlan::~FftPlan() = default;

std::size_t FftPlan::scratch_size() const {
  if (n_ <= 1) return 0;
  if (smooth_) return n_;
  // Bluestein scratch: padded buffer plus the sub-plan's own scratch.
  return bluestein_->m + bluestein_->sub->scratch_size();
}

void FftPlan::rec(const cplx* in, std::size_t stride, cplx* out, std::size_t n,
                  std::size_t level) const {
  if (n == 1) {
    out[0] = in[0];
    return;
  }
  const std::size_t r = radices_[level];
  const std::size_t m = n / r;
  for (std::size_t q = 0; q < r; ++q) {
    rec(in + q * stride, stride * r, out + q * m, m, level + 1);
  }
  const cplx* tw = twiddle_[level].data();
  const cplx* rt = roots_[level].data();
  cplx t[7];
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t q = 0; q < r; ++q) t[q] = out[q * m + k] * tw[q * m + k];
    for (std::size_t j = 0; j < r; ++j) {
      cplx acc = t[0];
      for (std::size_t q = 1; q < r; ++q) acc += rt[j * r + q] * t[q];
      out[j * m + k] = acc;
    }
  }
}

void FftPlan::forward(cplx* data, cplx* scratch) const {
  if (n_ <= 1) return;
  if (smooth_) {
    rec(data, 1, scratch, n_, 0);
    for (std::size_t i = 0; i < n_; ++i) data[i] = scratch[i];
    return;
  }
  const auto& b = *bluestein_;
  cplx* buf = scratch;
  cplx* sub_scratch = scratch + b.m;
  for (std::size_t k = 0; k < n_; ++k) buf[k] = data[k] * b.chirp[k];
  for (std::size_t k = n_; k < b.m; ++k) buf[k] = cplx(0.0, 0.0);
  b.sub->forward(buf, sub_scratch);
  for (std::size_t k = 0; k < b.m; ++k) buf[k] *= b.filter_fft[k];
  // Inverse of the sub-plan via conjugation.
  for (std::size_t k = 0; k < b.m; ++k) buf[k] = std::conj(buf[k]);
  b.sub->forward(buf, sub_scratch);
  const double inv_m = 1.0 / static_cast<double>(b.m);
  for (std::size_t k = 0; k < n_; ++k) {
    data[k] = std::conj(buf[k]) * inv_m * b.chirp[k];
  }
}

void FftPlan::forward(cplx* data) const {
  if (n_ <= 1) return;
  std::vector<cplx> scratch(scratch_size());
  forward(data, scratch.data());
}

void FftPlan::inverse_unscaled(cplx* data, cplx* scratch) const {
  if (n_ <= 1) return;
  for (std::size_t i = 0; i < n_; ++i) data[i] = std::conj(data[i]);
  forward(data, scratch);
  for (std::size_t i = 0; i < n_; ++i) data[i] = std::conj(data[i]);
}

void FftPlan::inverse_unscaled(cplx* data) const {
  if (n_ <= 1) return;
  std::vector<cplx> scratch(scratch_size());
  inverse_unscaled(data, scratch.data());
}

const FftPlan& plan_for(std::size_t n) {
  static std::shared_mutex mu;
  static std::unordered_map<std::size_t, std::unique_ptr<FftPlan>> cache;
  {
    std::shared_lock lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return *it->second;
  }
  std::unique_lock lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftPlan>(n);
  return *slot;
}

}  // namespace fremer::detail
