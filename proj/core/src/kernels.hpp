#pragma once

#include <cstddef>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace fremer::detail {

// --- worker pool sizing -----------------------------------------------------

inline std::size_t worker_count() {
  static const std::size_t n = [] {
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("FREMER_THREADS")) {
      const long cap = std::strtol(env, nullptr, 10);
      if (cap > 0 && static_cast<std::size_t>(cap) < hw) hw = static_cast<std::size_t>(cap);
    }
    return hw;
  }();
  return n;
}

// Runs fn(i) for i in [0, n). Each index owns its output slots, so results
// are bitwise independent of the thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// --- row-major real GEMM kernels ---------------------------------------------
// Accumulation over the contraction index always runs in increasing order, so
// per-element results do not depend on batch shape or threading.

// C (m x n) = or += sign * A (m x k) * B (k x n)
inline void gemm_ab(std::size_t m, std::size_t n, std::size_t k, const double* A,
                    const double* B, double* C, bool accumulate, double sign = 1.0) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
    }
    const double* a = A + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = sign * a[kk];
      const double* b = B + kk * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C (m x n) = or += sign * A (m x k) * B(n x k)^T
inline void gemm_abt(std::size_t m, std::size_t n, std::size_t k, const double* A,
                     const double* B, double* C, bool accumulate, double sign = 1.0) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b = B + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += a[kk] * b[kk];
      c[j] = (accumulate ? c[j] : 0.0) + sign * acc;
    }
  }
}

// C (m x n) += sign * A(k x m)^T * B (k x n); the contraction runs over the
// leading (batch) dimension of both inputs.
inline void gemm_atb(std::size_t m, std::size_t n, std::size_t k, const double* A,
                     const double* B, double* C, double sign = 1.0) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = sign * A[kk * m + i];
      const double* b = B + kk * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// --- planar batched matrices --------------------------------------------------

struct RMat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;
  void resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    v.assign(r * c, 0.0);
  }
  double* row(std::size_t r) { return v.data() + r * cols; }
  const double* row(std::size_t r) const { return v.data() + r * cols; }
};

struct CMat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> re, im;
  void resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    re.assign(r * c, 0.0);
    im.assign(r * c, 0.0);
  }
  void zero() {
    re.assign(re.size(), 0.0);
    im.assign(im.size(), 0.0);
  }
  double* row_re(std::size_t r) { return re.data() + r * cols; }
  double* row_im(std::size_t r) { return im.data() + r * cols; }
  const double* row_re(std::size_t r) const { return re.data() + r * cols; }
  const double* row_im(std::size_t r) const { return im.data() + r * cols; }
};

// Y (B x n) = X (B x m) * W (m x n), planar complex.
inline void cgemm_ab(const CMat& X, const double* w_re, const double* w_im,
                     std::size_t m, std::size_t n, CMat& Y) {
  const std::size_t B = X.rows;
  gemm_ab(B, n, m, X.re.data(), w_re, Y.re.data(), false, 1.0);
  gemm_ab(B, n, m, X.im.data(), w_im, Y.re.data(), true, -1.0);
  gemm_ab(B, n, m, X.re.data(), w_im, Y.im.data(), false, 1.0);
  gemm_ab(B, n, m, X.im.data(), w_re, Y.im.data(), true, 1.0);
}

// cX (B x m) += cY (B x n) * conj(W)^T with W (m x n).
inline void cgemm_bwd_input(const CMat& cY, const double* w_re, const double* w_im,
                            std::size_t m, std::size_t n, CMat& cX) {
  const std::size_t B = cY.rows;
  gemm_abt(B, m, n, cY.re.data(), w_re, cX.re.data(), true, 1.0);
  gemm_abt(B, m, n, cY.im.data(), w_im, cX.re.data(), true, 1.0);
  gemm_abt(B, m, n, cY.im.data(), w_re, cX.im.data(), true, 1.0);
  gemm_abt(B, m, n, cY.re.data(), w_im, cX.im.data(), true, -1.0);
}

// cW (m x n) += X^H (m x B) * cY (B x n).
inline void cgemm_bwd_weight(const CMat& X, const CMat& cY, double* cw_re,
                             double* cw_im, std::size_t m, std::size_t n) {
  const std::size_t B = X.rows;
  gemm_atb(m, n, B, X.re.data(), cY.re.data(), cw_re, 1.0);
  gemm_atb(m, n, B, X.im.data(), cY.im.data(), cw_re, 1.0);
  gemm_atb(m, n, B, X.re.data(), cY.im.data(), cw_im, 1.0);
  gemm_atb(m, n, B, X.im.data(), cY.re.data(), cw_im, -1.0);
}

}  // namespace fremer::detail
