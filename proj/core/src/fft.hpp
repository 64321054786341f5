#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

namespace fremer::detail {

using cplx = std::complex<double>;

// Complex DFT engine for arbitrary lengths: recursive mixed-radix
// Cooley-Tukey for sizes whose factors are all <= 7, Bluestein (chirp-z over
// a power-of-two transform) otherwise. Plans are immutable after
// construction and safe to share across threads.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  ~FftPlan();
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  std::size_t size() const { return n_; }
  std::size_t scratch_size() const;

  // X[k] = sum_n x[n] exp(-2*pi*i*k*n/N), in place. scratch must hold
  // scratch_size() elements; the allocating overloads are for cold paths.
  void forward(cplx* data, cplx* scratch) const;
  void forward(cplx* data) const;
  // x[n] = sum_k X[k] exp(+2*pi*i*k*n/N), in place, no 1/N.
  void inverse_unscaled(cplx* data, cplx* scratch) const;
  void inverse_unscaled(cplx* data) const;

 private:
  struct Bluestein;

  void rec(const cplx* in, std::size_t stride, cplx* out, std::size_t n,
           std::size_t level) const;

  std::size_t n_ = 0;
  bool smooth_ = true;
  std::vector<std::size_t> radices_;        // factorization, outermost first
  std::vector<std::vector<cplx>> twiddle_;  // per level: W_n^(q*k) tables
  std::vector<std::vector<cplx>> roots_;    // per level: r*r DFT matrix of size r
  std::unique_ptr<Bluestein> bluestein_;
};

// Process-wide plan cache (thread-safe).
const FftPlan& plan_for(std::size_t n);

}  // namespace fremer::detail
