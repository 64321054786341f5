#pragma once

// Batched forward/backward engine shared by the public model API and the
// trainer. Activations are laid out as planar complex matrices with one row
// per window; every contraction accumulates in input-index order, so results
// are bitwise independent of batch size and thread count.

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "fft.hpp"
#include "fremer/model.hpp"
#include "kernels.hpp"

namespace fremer::detail {

struct Shapes {
  std::size_t L, T, N, K, n_low, n_high, Bb, Lp, H, l, F, n_blocks;

  static Shapes from(const ForecastTask& t) {
    t.validate();
    const BandSpec b = t.band();
    return Shapes{t.lookback,       t.horizon,  t.padded_len(), t.n_bins(),
                  b.n_low,          b.n_high,   t.backbone_len(), t.n_combinations,
                  t.n_heads,        t.head_dim(), t.ff_dim(),     t.n_blocks};
  }
};

// --- parameter views ---------------------------------------------------------

template <typename T>
struct BlockViewT {
  T *wq_re, *wq_im;  // H x Lp x l
  T *wk_re, *wk_im;
  T *wv_re, *wv_im;
  T *wo_re, *wo_im;  // Lp x Lp
  T *g1, *o1_re, *o1_im;
  T *w1_re, *w1_im;  // Lp x F
  T *w2_re, *w2_im;  // F x Lp
  T *g2, *o2_re, *o2_im;
};

template <typename P, typename T>
struct ParamViewT {
  T *llp_w;  // L x T
  T *llp_b;  // T
  T *pin_re, *pin_im;    // Bb x Lp
  T *pout_re, *pout_im;  // Lp x Bb
  std::vector<BlockViewT<T>> blocks;

  static ParamViewT from(P& p, const Shapes& s) {
    ParamViewT v;
    v.llp_w = p.llp_weight().re();
    v.llp_b = p.llp_bias().re();
    v.pin_re = p.proj_in().re();
    v.pin_im = p.proj_in().im();
    v.pout_re = p.proj_out().re();
    v.pout_im = p.proj_out().im();
    v.blocks.resize(s.n_blocks);
    for (std::size_t b = 0; b < s.n_blocks; ++b) {
      auto& bv = v.blocks[b];
      auto& wq = p.block(b, BlockTensor::wq);
      auto& wk = p.block(b, BlockTensor::wk);
      auto& wv = p.block(b, BlockTensor::wv);
      auto& wo = p.block(b, BlockTensor::wo);
      bv.wq_re = wq.re(); bv.wq_im = wq.im();
      bv.wk_re = wk.re(); bv.wk_im = wk.im();
      bv.wv_re = wv.re(); bv.wv_im = wv.im();
      bv.wo_re = wo.re(); bv.wo_im = wo.im();
      bv.g1 = p.block(b, BlockTensor::norm1_gain).re();
      auto& o1 = p.block(b, BlockTensor::norm1_offset);
      bv.o1_re = o1.re(); bv.o1_im = o1.im();
      auto& w1 = p.block(b, BlockTensor::ff_w1);
      auto& w2 = p.block(b, BlockTensor::ff_w2);
      bv.w1_re = w1.re(); bv.w1_im = w1.im();
      bv.w2_re = w2.re(); bv.w2_im = w2.im();
      bv.g2 = p.block(b, BlockTensor::norm2_gain).re();
      auto& o2 = p.block(b, BlockTensor::norm2_offset);
      bv.o2_re = o2.re(); bv.o2_im = o2.im();
    }
    return v;
  }
};

using ParamView = ParamViewT<const FremerParams, const double>;
using GradView = ParamViewT<FremerParams, double>;

// --- per-window helpers --------------------------------------------------------

struct FrinState {
  double m_re = 0.0, m_im = 0.0;  // complex mean
  double stddev = 0.0;            // population std of magnitudes
  double scale = 1.0;             // stddev + eps
};

inline void frin_norm_row(const double* re, const double* im, std::size_t n,
                          double* out_re, double* out_im, FrinState& st) {
  double mre = 0.0, mim = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mre += re[i];
    mim += im[i];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  mre *= inv_n;
  mim *= inv_n;
  double msum = 0.0;
  for (std::size_t i = 0; i < n; ++i) msum += std::sqrt(re[i] * re[i] + im[i] * im[i]);
  const double mbar = msum * inv_n;
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::sqrt(re[i] * re[i] + im[i] * im[i]) - mbar;
    var += d * d;
  }
  var *= inv_n;
  st.m_re = mre;
  st.m_im = mim;
  st.stddev = std::sqrt(var);
  st.scale = st.stddev + kFrinEps;
  const double inv_s = 1.0 / st.scale;
  for (std::size_t i = 0; i < n; ++i) {
    out_re[i] = (re[i] - mre) * inv_s;
    out_im[i] = (im[i] - mim) * inv_s;
  }
}

// Backward of frin_norm_row given cotangents of the normalized output plus
// extra cotangent already accumulated on (mean, scale) from other uses.
// Adds into c_in.
inline void frin_norm_row_bwd(const double* in_re, const double* in_im, std::size_t n,
                              const FrinState& st, const double* c_out_re,
                              const double* c_out_im, double c_scale_extra,
                              double c_mean_re_extra, double c_mean_im_extra,
                              double* c_in_re, double* c_in_im) {
  const double inv_s = 1.0 / st.scale;
  const double inv_n = 1.0 / static_cast<double>(n);
  double c_scale = c_scale_extra;
  double c_m_re = c_mean_re_extra;
  double c_m_im = c_mean_im_extra;
  // y_i = (z_i - m) / s
  for (std::size_t i = 0; i < n; ++i) {
    const double d_re = in_re[i] - st.m_re;
    const double d_im = in_im[i] - st.m_im;
    const double cd_re = c_out_re[i] * inv_s;
    const double cd_im = c_out_im[i] * inv_s;
    c_scale -= inv_s * inv_s * (c_out_re[i] * d_re + c_out_im[i] * d_im);
    c_in_re[i] += cd_re;
    c_in_im[i] += cd_im;
    c_m_re -= cd_re;
    c_m_im -= cd_im;
  }
  for (std::size_t i = 0; i < n; ++i) {
    c_in_re[i] += c_m_re * inv_n;
    c_in_im[i] += c_m_im * inv_n;
  }
  // scale = sqrt(var) + eps; |z| has subgradient 0 at z = 0
  if (st.stddev > 0.0) {
    const double c_var = c_scale / (2.0 * st.stddev);
    double msum = 0.0;
    for (std::size_t i = 0; i < n; ++i) msum += std::sqrt(in_re[i] * in_re[i] + in_im[i] * in_im[i]);
    const double mbar = msum * inv_n;
    for (std::size_t i = 0; i < n; ++i) {
      const double mag = std::sqrt(in_re[i] * in_re[i] + in_im[i] * in_im[i]);
      if (mag > 0.0) {
        const double c_mag = c_var * 2.0 * inv_n * (mag - mbar);
        c_in_re[i] += c_mag * in_re[i] / mag;
        c_in_im[i] += c_mag * in_im[i] / mag;
      }
    }
  }
}

// Attention core for one window and one head: magnitude-product scores at
// temperature sqrt(l), row softmax, convex combination of values.
inline void attention_row(const double* q_re, const double* q_im, const double* k_re,
                          const double* k_im, const double* v_re, const double* v_im,
                          std::size_t l, double inv_sqrt_l, double* mq, double* mk,
                          double* A, double* o_re, double* o_im, std::size_t* macs) {
  for (std::size_t i = 0; i < l; ++i) mq[i] = std::sqrt(q_re[i] * q_re[i] + q_im[i] * q_im[i]);
  for (std::size_t j = 0; j < l; ++j) mk[j] = std::sqrt(k_re[j] * k_re[j] + k_im[j] * k_im[j]);
  for (std::size_t i = 0; i < l; ++i) {
    double* row = A + i * l;
    double mx = -1.0;
    for (std::size_t j = 0; j < l; ++j) {
      row[j] = mq[i] * mk[j] * inv_sqrt_l;
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const double inv_sum = 1.0 / sum;
    for (std::size_t j = 0; j < l; ++j) row[j] *= inv_sum;
  }
  if (macs) *macs += l * l;
  for (std::size_t i = 0; i < l; ++i) {
    const double* row = A + i * l;
    double acc_re = 0.0, acc_im = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      acc_re += row[j] * v_re[j];
      acc_im += row[j] * v_im[j];
    }
    o_re[i] = acc_re;
    o_im[i] = acc_im;
  }
}

inline void attention_row_bwd(const double* q_re, const double* q_im, const double* k_re,
                              const double* k_im, const double* v_re, const double* v_im,
                              std::size_t l, double inv_sqrt_l, const double* mq,
                              const double* mk, const double* A, const double* co_re,
                              const double* co_im, double* cq_re, double* cq_im,
                              double* ck_re, double* ck_im, double* cv_re, double* cv_im,
                              double* cA, double* c_mq, double* c_mk) {
  for (std::size_t j = 0; j < l; ++j) {
    cv_re[j] = 0.0;
    cv_im[j] = 0.0;
    c_mk[j] = 0.0;
  }
  for (std::size_t i = 0; i < l; ++i) {
    const double* arow = A + i * l;
    double* carow = cA + i * l;
    for (std::size_t j = 0; j < l; ++j) {
      carow[j] = co_re[i] * v_re[j] + co_im[i] * v_im[j];
      cv_re[j] += arow[j] * co_re[i];
      cv_im[j] += arow[j] * co_im[i];
    }
  }
  // softmax rows, then the magnitude-product score
  for (std::size_t i = 0; i < l; ++i) {
    const double* arow = A + i * l;
    double* carow = cA + i * l;
    double dot = 0.0;
    for (std::size_t j = 0; j < l; ++j) dot += carow[j] * arow[j];
    double cmuq = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      const double cs = inv_sqrt_l * arow[j] * (carow[j] - dot);
      cmuq += cs * mk[j];
      c_mk[j] += cs * mq[i];
    }
    c_mq[i] = cmuq;
  }
  for (std::size_t i = 0; i < l; ++i) {
    if (mq[i] > 0.0) {
      cq_re[i] = c_mq[i] * q_re[i] / mq[i];
      cq_im[i] = c_mq[i] * q_im[i] / mq[i];
    } else {
      cq_re[i] = 0.0;
      cq_im[i] = 0.0;
    }
  }
  for (std::size_t j = 0; j < l; ++j) {
    if (mk[j] > 0.0) {
      ck_re[j] = c_mk[j] * k_re[j] / mk[j];
      ck_im[j] = c_mk[j] * k_im[j] / mk[j];
    } else {
      ck_re[j] = 0.0;
      ck_im[j] = 0.0;
    }
  }
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476));
}

inline double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * 0.7071067811865476)) +
         x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// --- FFT row helpers -------------------------------------------------------------

inline void fft_row_prepare(std::size_t need_n, std::size_t need_scratch,
                            std::vector<cplx>& buf, std::vector<cplx>& scratch) {
  if (buf.size() < need_n) buf.resize(need_n);
  if (scratch.size() < need_scratch) scratch.resize(need_scratch);
}

inline void rfft_row(const FftPlan& plan, const double* x, double* f_re, double* f_im,
                     std::vector<cplx>& buf, std::vector<cplx>& scratch) {
  const std::size_t n = plan.size();
  const std::size_t K = n / 2 + 1;
  fft_row_prepare(n, plan.scratch_size(), buf, scratch);
  for (std::size_t i = 0; i < n; ++i) buf[i] = cplx(x[i], 0.0);
  plan.forward(buf.data(), scratch.data());
  for (std::size_t k = 0; k < K; ++k) {
    f_re[k] = buf[k].real();
    f_im[k] = buf[k].imag();
  }
  f_im[0] = 0.0;
  if (n % 2 == 0) f_im[K - 1] = 0.0;
}

inline void irfft_row(const FftPlan& plan, const double* f_re, const double* f_im,
                      double* x, std::vector<cplx>& buf, std::vector<cplx>& scratch) {
  const std::size_t n = plan.size();
  const std::size_t K = n / 2 + 1;
  fft_row_prepare(n, plan.scratch_size(), buf, scratch);
  buf[0] = cplx(f_re[0], 0.0);
  for (std::size_t k = 1; k + 1 < K; ++k) {
    buf[k] = cplx(f_re[k], f_im[k]);
    buf[n - k] = cplx(f_re[k], -f_im[k]);
  }
  if (K >= 2) {
    if (n % 2 == 0) {
      buf[K - 1] = cplx(f_re[K - 1], 0.0);
    } else {
      buf[K - 1] = cplx(f_re[K - 1], f_im[K - 1]);
      buf[n - (K - 1)] = cplx(f_re[K - 1], -f_im[K - 1]);
    }
  }
  plan.inverse_unscaled(buf.data(), scratch.data());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = buf[i].real() * inv_n;
}

// Adjoint of irfft_row: cotangent of the real output -> cotangent of the
// half-spectrum (DC and Nyquist imaginary cotangents are structurally zero).
inline void irfft_row_adj(const FftPlan& plan, const double* c_x, double* c_fre,
                          double* c_fim, std::vector<cplx>& buf, std::vector<cplx>& scratch) {
  const std::size_t n = plan.size();
  const std::size_t K = n / 2 + 1;
  fft_row_prepare(n, plan.scratch_size(), buf, scratch);
  for (std::size_t i = 0; i < n; ++i) buf[i] = cplx(c_x[i], 0.0);
  plan.forward(buf.data(), scratch.data());
  const double inv_n = 1.0 / static_cast<double>(n);
  const double two_inv_n = 2.0 * inv_n;
  c_fre[0] = buf[0].real() * inv_n;
  c_fim[0] = 0.0;
  for (std::size_t k = 1; k + 1 < K; ++k) {
    c_fre[k] = buf[k].real() * two_inv_n;
    c_fim[k] = buf[k].imag() * two_inv_n;
  }
  if (K >= 2) {
    if (n % 2 == 0) {
      c_fre[K - 1] = buf[K - 1].real() * inv_n;
      c_fim[K - 1] = 0.0;
    } else {
      c_fre[K - 1] = buf[K - 1].real() * two_inv_n;
      c_fim[K - 1] = buf[K - 1].imag() * two_inv_n;
    }
  }
}

// Adjoint of rfft_row: cotangent of the half-spectrum -> cotangent of the
// real input. Caller must already have zeroed DC/Nyquist imaginary cotangents.
inline void rfft_row_adj(const FftPlan& plan, const double* c_fre, const double* c_fim,
                         double* c_x, std::vector<cplx>& buf, std::vector<cplx>& scratch) {
  const std::size_t n = plan.size();
  const std::size_t K = n / 2 + 1;
  fft_row_prepare(n, plan.scratch_size(), buf, scratch);
  for (std::size_t k = 0; k < K; ++k) buf[k] = cplx(c_fre[k], c_fim[k]);
  for (std::size_t k = K; k < n; ++k) buf[k] = cplx(0.0, 0.0);
  plan.inverse_unscaled(buf.data(), scratch.data());
  for (std::size_t i = 0; i < n; ++i) c_x[i] = buf[i].real();
}

// --- engine ---------------------------------------------------------------------

struct BlockActs {
  CMat y1, n1;            // CLN1 pre-gain / output
  std::vector<CMat> q, k, v, o;  // per head, B x l
  CMat cat;               // concatenated heads, B x Lp
  CMat att, r1;           // W_O output, residual
  CMat y2, n2;            // CLN2
  CMat u, act, f;         // CFF linear 1, activation, linear 2
  CMat out;
  std::vector<FrinState> cln1, cln2;         // per window
  std::vector<double> mq, mk, A;             // per head per window, packed
};

class Engine {
 public:
  explicit Engine(const ForecastTask& t)
      : s_(Shapes::from(t)), plan_(&plan_for(s_.N)), inv_sqrt_l_(1.0 / std::sqrt(static_cast<double>(s_.l))) {}

  const Shapes& shapes() const { return s_; }

  // X: nw x L row-major. out: nw x T (may be null to skip extraction).
  void forward(const double* X, std::size_t nw, const ParamView& pv, double* out,
               const ForwardOptions& opt = {}, std::vector<AttentionTrace>* traces = nullptr) {
    resize(nw);
    if (traces) {
      traces->assign(nw, AttentionTrace{});
      for (auto& tr : *traces) {
        tr.attn.assign(s_.n_blocks, std::vector<std::vector<double>>(s_.H));
      }
    }

    // LLP: copy lookback, extend with W^T x + b
    for (std::size_t b = 0; b < nw; ++b) {
      double* row = xp_.row(b);
      const double* x = X + b * s_.L;
      for (std::size_t i = 0; i < s_.L; ++i) row[i] = x[i];
      for (std::size_t t = 0; t < s_.T; ++t) row[s_.L + t] = pv.llp_b[t];
    }
    // pad part: xp[:, L:] += X * llp_w
    {
      // write into the tail columns row by row
      pad_tmp_.resize(nw, s_.T);
      gemm_ab(nw, s_.T, s_.L, X, pv.llp_w, pad_tmp_.v.data(), false, 1.0);
      for (std::size_t b = 0; b < nw; ++b) {
        double* row = xp_.row(b) + s_.L;
        const double* p = pad_tmp_.row(b);
        for (std::size_t t = 0; t < s_.T; ++t) row[t] += p[t];
      }
    }

    parallel_for(nw, [&](std::size_t b) {
      thread_local std::vector<cplx> buf, scratch;
      rfft_row(*plan_, xp_.row(b), f_.row_re(b), f_.row_im(b), buf, scratch);
    });

    // band split + F-RIN over the backbone band
    parallel_for(nw, [&](std::size_t b) {
      const double* fre = f_.row_re(b);
      const double* fim = f_.row_im(b);
      double* bbre = bb_.row_re(b);
      double* bbim = bb_.row_im(b);
      for (std::size_t i = 0; i < s_.Bb; ++i) {
        bbre[i] = fre[s_.n_low + i];
        bbim[i] = fim[s_.n_low + i];
      }
      frin_norm_row(bbre, bbim, s_.Bb, fr_.row_re(b), fr_.row_im(b), frin_[b]);
    });

    cgemm_ab(fr_, pv.pin_re, pv.pin_im, s_.Bb, s_.Lp, fc0_);

    const CMat* z = &fc0_;
    for (std::size_t blk = 0; blk < s_.n_blocks; ++blk) {
      block_forward(*z, pv.blocks[blk], blocks_[blk], nw, blk, traces);
      z = &blocks_[blk].out;
    }

    cgemm_ab(*z, pv.pout_re, pv.pout_im, s_.Lp, s_.Bb, outb_);

    // denormalize, splice, inverse transform
    parallel_for(nw, [&](std::size_t b) {
      const FrinState& st = frin_[b];
      double* dre = den_.row_re(b);
      double* dim = den_.row_im(b);
      const double* ore = outb_.row_re(b);
      const double* oim = outb_.row_im(b);
      if (opt.silence_backbone) {
        for (std::size_t i = 0; i < s_.Bb; ++i) {
          dre[i] = 0.0;
          dim[i] = 0.0;
        }
      } else {
        for (std::size_t i = 0; i < s_.Bb; ++i) {
          dre[i] = ore[i] * st.scale + st.m_re;
          dim[i] = oim[i] * st.scale + st.m_im;
        }
      }
      double* hre = fhat_.row_re(b);
      double* him = fhat_.row_im(b);
      const double* fre = f_.row_re(b);
      const double* fim = f_.row_im(b);
      for (std::size_t i = 0; i < s_.n_low; ++i) {
        hre[i] = fre[i];
        him[i] = fim[i];
      }
      for (std::size_t i = 0; i < s_.Bb; ++i) {
        hre[s_.n_low + i] = dre[i];
        him[s_.n_low + i] = dim[i];
      }
      for (std::size_t i = s_.n_low + s_.Bb; i < s_.K; ++i) {
        hre[i] = 0.0;
        him[i] = 0.0;
      }
      him[0] = 0.0;
      if (s_.N % 2 == 0) him[s_.K - 1] = 0.0;

      thread_local std::vector<cplx> buf, scratch;
      irfft_row(*plan_, hre, him, xhat_.row(b), buf, scratch);
      if (out) {
        const double* tail = xhat_.row(b) + s_.L;
        double* o = out + b * s_.T;
        for (std::size_t t = 0; t < s_.T; ++t) o[t] = tail[t];
      }
    });
  }

  // Accumulates parameter gradients into gv given the forecast cotangent
  // c_out (nw x T). Must follow a forward() on the same inputs with default
  // options.
  void backward(const double* X, std::size_t nw, const ParamView& pv, const double* c_out,
                GradView& gv) {
    c_resize(nw);

    // through irfft and recovery
    parallel_for(nw, [&](std::size_t b) {
      thread_local std::vector<cplx> buf, scratch;
      thread_local std::vector<double> cx;
      if (cx.size() < s_.N) cx.resize(s_.N);
      const double* co = c_out + b * s_.T;
      for (std::size_t i = 0; i < s_.L; ++i) cx[i] = 0.0;
      for (std::size_t t = 0; t < s_.T; ++t) cx[s_.L + t] = co[t];
      irfft_row_adj(*plan_, cx.data(), c_fhat_.row_re(b), c_fhat_.row_im(b), buf, scratch);

      // split the spectrum cotangent: bypassed low band flows back through
      // the raw spectrum; backbone band flows through F-RIN denorm.
      const FrinState& st = frin_[b];
      const double* hre = c_fhat_.row_re(b);
      const double* him = c_fhat_.row_im(b);
      double* cobre = c_outb_.row_re(b);
      double* cobim = c_outb_.row_im(b);
      const double* obre = outb_.row_re(b);
      const double* obim = outb_.row_im(b);
      double cs = 0.0, cm_re = 0.0, cm_im = 0.0;
      for (std::size_t i = 0; i < s_.Bb; ++i) {
        double cd_re = hre[s_.n_low + i];
        double cd_im = him[s_.n_low + i];
        cobre[i] = cd_re * st.scale;
        cobim[i] = cd_im * st.scale;
        cs += cd_re * obre[i] + cd_im * obim[i];
        cm_re += cd_re;
        cm_im += cd_im;
      }
      c_scale_[b] = cs;
      c_mean_re_[b] = cm_re;
      c_mean_im_[b] = cm_im;
    });

    cgemm_bwd_assign(c_fc_);
    {
      const CMat& fcE = s_.n_blocks ? blocks_[s_.n_blocks - 1].out : fc0_;
      cgemm_bwd_input(c_outb_, pv.pout_re, pv.pout_im, s_.Lp, s_.Bb, c_fc_);
      cgemm_bwd_weight(fcE, c_outb_, gv.pout_re, gv.pout_im, s_.Lp, s_.Bb);
    }

    for (std::size_t blk = s_.n_blocks; blk-- > 0;) {
      const CMat& z_in = blk == 0 ? fc0_ : blocks_[blk - 1].out;
      block_backward(z_in, pv.blocks[blk], blocks_[blk], nw, c_fc_, c_fc_next_, gv.blocks[blk]);
      std::swap(c_fc_, c_fc_next_);
    }

    // proj_in
    c_fr_.zero();
    cgemm_bwd_input(c_fc_, pv.pin_re, pv.pin_im, s_.Bb, s_.Lp, c_fr_);
    cgemm_bwd_weight(fr_, c_fc_, gv.pin_re, gv.pin_im, s_.Bb, s_.Lp);

    // F-RIN backward and the adjoint of rfft; grads for LLP collected after.
    parallel_for(nw, [&](std::size_t b) {
      double* cbre = c_f_.row_re(b);
      double* cbim = c_f_.row_im(b);
      // low band cotangent passes straight through the splice
      const double* hre = c_fhat_.row_re(b);
      const double* him = c_fhat_.row_im(b);
      for (std::size_t i = 0; i < s_.n_low; ++i) {
        cbre[i] = hre[i];
        cbim[i] = him[i];
      }
      // backbone band: cotangent of the raw backbone bins
      thread_local std::vector<double> cbb_re, cbb_im;
      if (cbb_re.size() < s_.Bb) {
        cbb_re.resize(s_.Bb);
        cbb_im.resize(s_.Bb);
      }
      for (std::size_t i = 0; i < s_.Bb; ++i) {
        cbb_re[i] = 0.0;
        cbb_im[i] = 0.0;
      }
      frin_norm_row_bwd(bb_.row_re(b), bb_.row_im(b), s_.Bb, frin_[b], c_fr_.row_re(b),
                        c_fr_.row_im(b), c_scale_[b], c_mean_re_[b], c_mean_im_[b],
                        cbb_re.data(), cbb_im.data());
      for (std::size_t i = 0; i < s_.Bb; ++i) {
        cbre[s_.n_low + i] = cbb_re[i];
        cbim[s_.n_low + i] = cbb_im[i];
      }
      for (std::size_t i = s_.n_low + s_.Bb; i < s_.K; ++i) {
        cbre[i] = 0.0;
        cbim[i] = 0.0;
      }
      // rfft forced these components to exact zero
      cbim[0] = 0.0;
      if (s_.N % 2 == 0) cbim[s_.K - 1] = 0.0;

      thread_local std::vector<cplx> buf, scratch;
      thread_local std::vector<double> cxp;
      if (cxp.size() < s_.N) cxp.resize(s_.N);
      rfft_row_adj(*plan_, cbre, cbim, cxp.data(), buf, scratch);
      double* cp = c_pad_.row(b);
      for (std::size_t t = 0; t < s_.T; ++t) cp[t] = cxp[s_.L + t];
    });

    // LLP grads
    gemm_atb(s_.L, s_.T, nw, X, c_pad_.v.data(), gv.llp_w, 1.0);
    for (std::size_t b = 0; b < nw; ++b) {
      const double* cp = c_pad_.row(b);
      for (std::size_t t = 0; t < s_.T; ++t) gv.llp_b[t] += cp[t];
    }
  }

  const RMat& padded() const { return xp_; }
  const CMat& spectrum() const { return f_; }
  const CMat& recovered() const { return fhat_; }

 private:
  void resize(std::size_t nw) {
    if (nw == cap_) return;
    cap_ = nw;
    xp_.resize(nw, s_.N);
    pad_tmp_.resize(nw, s_.T);
    xhat_.resize(nw, s_.N);
    f_.resize(nw, s_.K);
    bb_.resize(nw, s_.Bb);
    fr_.resize(nw, s_.Bb);
    fc0_.resize(nw, s_.Lp);
    outb_.resize(nw, s_.Bb);
    den_.resize(nw, s_.Bb);
    fhat_.resize(nw, s_.K);
    frin_.assign(nw, FrinState{});
    blocks_.resize(s_.n_blocks);
    for (auto& blk : blocks_) {
      blk.y1.resize(nw, s_.Lp);
      blk.n1.resize(nw, s_.Lp);
      blk.q.assign(s_.H, CMat{});
      blk.k.assign(s_.H, CMat{});
      blk.v.assign(s_.H, CMat{});
      blk.o.assign(s_.H, CMat{});
      for (std::size_t h = 0; h < s_.H; ++h) {
        blk.q[h].resize(nw, s_.l);
        blk.k[h].resize(nw, s_.l);
        blk.v[h].resize(nw, s_.l);
        blk.o[h].resize(nw, s_.l);
      }
      blk.cat.resize(nw, s_.Lp);
      blk.att.resize(nw, s_.Lp);
      blk.r1.resize(nw, s_.Lp);
      blk.y2.resize(nw, s_.Lp);
      blk.n2.resize(nw, s_.Lp);
      blk.u.resize(nw, s_.F);
      blk.act.resize(nw, s_.F);
      blk.f.resize(nw, s_.Lp);
      blk.out.resize(nw, s_.Lp);
      blk.cln1.assign(nw, FrinState{});
      blk.cln2.assign(nw, FrinState{});
      blk.mq.assign(s_.H * nw * s_.l, 0.0);
      blk.mk.assign(s_.H * nw * s_.l, 0.0);
      blk.A.assign(s_.H * nw * s_.l * s_.l, 0.0);
    }
    c_cap_ = 0;
  }

  void c_resize(std::size_t nw) {
    if (nw == c_cap_) return;
    c_cap_ = nw;
    c_fhat_.resize(nw, s_.K);
    c_outb_.resize(nw, s_.Bb);
    c_fc_.resize(nw, s_.Lp);
    c_fc_next_.resize(nw, s_.Lp);
    c_fr_.resize(nw, s_.Bb);
    c_f_.resize(nw, s_.K);
    c_pad_.resize(nw, s_.T);
    c_scale_.assign(nw, 0.0);
    c_mean_re_.assign(nw, 0.0);
    c_mean_im_.assign(nw, 0.0);
    cb_n1_.resize(nw, s_.Lp);
    cb_cat_.resize(nw, s_.Lp);
    cb_r1_.resize(nw, s_.Lp);
    cb_n2_.resize(nw, s_.Lp);
    cb_u_.resize(nw, s_.F);
    cb_act_.resize(nw, s_.F);
    cb_qh_.resize(nw, s_.l);
    cb_kh_.resize(nw, s_.l);
    cb_vh_.resize(nw, s_.l);
  }

  void cgemm_bwd_assign(CMat& m) { m.zero(); }

  void block_forward(const CMat& z, const BlockViewT<const double>& bv, BlockActs& a,
                     std::size_t nw, std::size_t blk, std::vector<AttentionTrace>* traces) {
    // CLN1
    parallel_for(nw, [&](std::size_t b) {
      frin_norm_row(z.row_re(b), z.row_im(b), s_.Lp, a.y1.row_re(b), a.y1.row_im(b), a.cln1[b]);
      double* nre = a.n1.row_re(b);
      double* nim = a.n1.row_im(b);
      const double* yre = a.y1.row_re(b);
      const double* yim = a.y1.row_im(b);
      for (std::size_t i = 0; i < s_.Lp; ++i) {
        nre[i] = bv.g1[i] * yre[i] + bv.o1_re[i];
        nim[i] = bv.g1[i] * yim[i] + bv.o1_im[i];
      }
    });

    // CSA heads
    const std::size_t mat = s_.Lp * s_.l;
    for (std::size_t h = 0; h < s_.H; ++h) {
      cgemm_ab(a.n1, bv.wq_re + h * mat, bv.wq_im + h * mat, s_.Lp, s_.l, a.q[h]);
      cgemm_ab(a.n1, bv.wk_re + h * mat, bv.wk_im + h * mat, s_.Lp, s_.l, a.k[h]);
      cgemm_ab(a.n1, bv.wv_re + h * mat, bv.wv_im + h * mat, s_.Lp, s_.l, a.v[h]);
    }
    parallel_for(nw, [&](std::size_t b) {
      for (std::size_t h = 0; h < s_.H; ++h) {
        std::size_t macs = 0;
        attention_row(a.q[h].row_re(b), a.q[h].row_im(b), a.k[h].row_re(b), a.k[h].row_im(b),
                      a.v[h].row_re(b), a.v[h].row_im(b), s_.l, inv_sqrt_l_,
                      &a.mq[(h * cap_ + b) * s_.l], &a.mk[(h * cap_ + b) * s_.l],
                      &a.A[(h * cap_ + b) * s_.l * s_.l], a.o[h].row_re(b), a.o[h].row_im(b),
                      &macs);
        if (traces) {
          auto& tr = (*traces)[b];
          tr.score_macs += macs;
          tr.attn[blk][h].assign(&a.A[(h * cap_ + b) * s_.l * s_.l],
                                 &a.A[(h * cap_ + b) * s_.l * s_.l] + s_.l * s_.l);
        }
        double* cre = a.cat.row_re(b) + h * s_.l;
        double* cim = a.cat.row_im(b) + h * s_.l;
        const double* ore = a.o[h].row_re(b);
        const double* oim = a.o[h].row_im(b);
        for (std::size_t i = 0; i < s_.l; ++i) {
          cre[i] = ore[i];
          cim[i] = oim[i];
        }
      }
    });
    cgemm_ab(a.cat, bv.wo_re, bv.wo_im, s_.Lp, s_.Lp, a.att);

    // residual 1, CLN2, CFF, residual 2
    parallel_for(nw, [&](std::size_t b) {
      double* rre = a.r1.row_re(b);
      double* rim = a.r1.row_im(b);
      const double* zre = z.row_re(b);
      const double* zim = z.row_im(b);
      const double* atr = a.att.row_re(b);
      const double* ati = a.att.row_im(b);
      for (std::size_t i = 0; i < s_.Lp; ++i) {
        rre[i] = zre[i] + atr[i];
        rim[i] = zim[i] + ati[i];
      }
      frin_norm_row(rre, rim, s_.Lp, a.y2.row_re(b), a.y2.row_im(b), a.cln2[b]);
      double* nre = a.n2.row_re(b);
      double* nim = a.n2.row_im(b);
      const double* yre = a.y2.row_re(b);
      const double* yim = a.y2.row_im(b);
      for (std::size_t i = 0; i < s_.Lp; ++i) {
        nre[i] = bv.g2[i] * yre[i] + bv.o2_re[i];
        nim[i] = bv.g2[i] * yim[i] + bv.o2_im[i];
      }
    });
    cgemm_ab(a.n2, bv.w1_re, bv.w1_im, s_.Lp, s_.F, a.u);
    parallel_for(nw, [&](std::size_t b) {
      const double* ure = a.u.row_re(b);
      const double* uim = a.u.row_im(b);
      double* are = a.act.row_re(b);
      double* aim = a.act.row_im(b);
      for (std::size_t i = 0; i < s_.F; ++i) {
        are[i] = gelu(ure[i]);
        aim[i] = gelu(uim[i]);
      }
    });
    cgemm_ab(a.act, bv.w2_re, bv.w2_im, s_.F, s_.Lp, a.f);
    parallel_for(nw, [&](std::size_t b) {
      double* ore = a.out.row_re(b);
      double* oim = a.out.row_im(b);
      const double* rre = a.r1.row_re(b);
      const double* rim = a.r1.row_im(b);
      const double* fre = a.f.row_re(b);
      const double* fim = a.f.row_im(b);
      for (std::size_t i = 0; i < s_.Lp; ++i) {
        ore[i] = rre[i] + fre[i];
        oim[i] = rim[i] + fim[i];
      }
    });
  }

  void block_backward(const CMat& z, const BlockViewT<const double>& bv, const BlockActs& a,
                      std::size_t nw, const CMat& c_out, CMat& c_z,
                      BlockViewT<double>& gb) {
    // out = r1 + f
    // CFF: f = act * w2, act = split-gelu(u), u = n2 * w1
    cb_act_.zero();
    cgemm_bwd_input(c_out, bv.w2_re, bv.w2_im, s_.F, s_.Lp, cb_act_);
    cgemm_bwd_weight(a.act, c_out, gb.w2_re, gb.w2_im, s_.F, s_.Lp);
    parallel_for(nw, [&](std::size_t b) {
      const double* ure = a.u.row_re(b);
      const double* uim = a.u.row_im(b);
      double* cure = cb_u_.row_re(b);
      double* cuim = cb_u_.row_im(b);
      const double* care = cb_act_.row_re(b);
      const double* caim = cb_act_.row_im(b);
      for (std::size_t i = 0; i < s_.F; ++i) {
        cure[i] = care[i] * gelu_grad(ure[i]);
        cuim[i] = caim[i] * gelu_grad(uim[i]);
      }
    });
    cb_n2_.zero();
    cgemm_bwd_input(cb_u_, bv.w1_re, bv.w1_im, s_.Lp, s_.F, cb_n2_);
    cgemm_bwd_weight(a.n2, cb_u_, gb.w1_re, gb.w1_im, s_.Lp, s_.F);

    // CLN2 -> c_r1 (plus the residual path from c_out)
    cb_r1_.zero();
    parallel_for(nw, [&](std::size_t b) {
      const double* cnre = cb_n2_.row_re(b);
      const double* cnim = cb_n2_.row_im(b);
      thread_local std::vector<double> cyre, cyim;
      if (cyre.size() < s_.Lp) {
        cyre.resize(s_.Lp);
        cyim.resize(s_.Lp);
      }
      for (std::size_t i = 0; i < s_.Lp; ++i) {
        cyre[i] = cnre[i] * bv.g2[i];
        cyim[i] = cnim[i] * bv.g2[i];
      }
      frin_norm_row_bwd(a.r1.row_re(b), a.r1.row_im(b), s_.Lp, a.cln2[b], cyre.data(),
                        cyim.data(), 0.0, 0.0, 0.0, cb_r1_.row_re(b), cb_r1_.row_im(b));
      double* rre = cb_r1_.row_re(b);
      double* rim = cb_r1_.row_im(b);
      const double* core = c_out.row_re(b);
      const double* coim = c_out.row_im(b);
      for (std::size_t i = 0; i < s_.Lp; ++i) {
        rre[i] += core[i];
        rim[i] += coim[i];
      }
    });
    // gain/offset grads for CLN2 (summed over windows)
    for (std::size_t b = 0; b < nw; ++b) {
      const double* cnre = cb_n2_.row_re(b);
      const double* cnim = cb_n2_.row_im(b);
      const double* yre = a.y2.row_re(b);
      const double* yim = a.y2.row_im(b);
      for (std::size_t i = 0; i < s_.Lp; ++i) {
        gb.g2[i] += cnre[i] * yre[i] + cnim[i] * yim[i];
        gb.o2_re[i] += cnre[i];
        gb.o2_im[i] += cnim[i];
      }
    }

    // r1 = z + att
    c_z.zero();
    for (std::size_t b = 0; b < nw; ++b) {
      double* czre = c_z.row_re(b);
      double* czim = c_z.row_im(b);
      const double* crre = cb_r1_.row_re(b);
      const double* crim = cb_r1_.row_im(b);
      for (std::size_t i = 0; i < s_.Lp; ++i) {
        czre[i] += crre[i];
        czim[i] += crim[i];
      }
    }

    // CSA backward: att = cat * wo
    cb_cat_.zero();
    cgemm_bwd_input(cb_r1_, bv.wo_re, bv.wo_im, s_.Lp, s_.Lp, cb_cat_);
    cgemm_bwd_weight(a.cat, cb_r1_, gb.wo_re, gb.wo_im, s_.Lp, s_.Lp);

    cb_n1_.zero();
    const std::size_t mat = s_.Lp * s_.l;
    for (std::size_t h = 0; h < s_.H; ++h) {
      parallel_for(nw, [&](std::size_t b) {
        thread_local std::vector<double> cA, c_mq, c_mk;
        if (cA.size() < s_.l * s_.l) {
          cA.resize(s_.l * s_.l);
          c_mq.resize(s_.l);
          c_mk.resize(s_.l);
        }
        attention_row_bwd(a.q[h].row_re(b), a.q[h].row_im(b), a.k[h].row_re(b),
                          a.k[h].row_im(b), a.v[h].row_re(b), a.v[h].row_im(b), s_.l,
                          inv_sqrt_l_, &a.mq[(h * cap_ + b) * s_.l],
                          &a.mk[(h * cap_ + b) * s_.l], &a.A[(h * cap_ + b) * s_.l * s_.l],
                          cb_cat_.row_re(b) + h * s_.l, cb_cat_.row_im(b) + h * s_.l,
                          cb_qh_.row_re(b), cb_qh_.row_im(b), cb_kh_.row_re(b),
                          cb_kh_.row_im(b), cb_vh_.row_re(b), cb_vh_.row_im(b), cA.data(),
                          c_mq.data(), c_mk.data());
      });
      cgemm_bwd_input(cb_qh_, bv.wq_re + h * mat, bv.wq_im + h * mat, s_.Lp, s_.l, cb_n1_);
      cgemm_bwd_weight(a.n1, cb_qh_, gb.wq_re + h * mat, gb.wq_im + h * mat, s_.Lp, s_.l);
      cgemm_bwd_input(cb_kh_, bv.wk_re + h * mat, bv.wk_im + h * mat, s_.Lp, s_.l, cb_n1_);
      cgemm_bwd_weight(a.n1, cb_kh_, gb.wk_re + h * mat, gb.wk_im + h * mat, s_.Lp, s_.l);
      cgemm_bwd_input(cb_vh_, bv.wv_re + h * mat, bv.wv_im + h * mat, s_.Lp, s_.l, cb_n1_);
      cgemm_bwd_weight(a.n1, cb_vh_, gb.wv_re + h * mat, gb.wv_im + h * mat, s_.Lp, s_.l);
    }

    // CLN1 -> adds to c_z
    parallel_for(nw, [&](std::size_t b) {
      const double* cnre = cb_n1_.row_re(b);
      const double* cnim = cb_n1_.row_im(b);
      thread_local std::vector<double> cyre, cyim;
      if (cyre.size() < s_.Lp) {
        cyre.resize(s_.Lp);
        cyim.resize(s_.Lp);
      }
      for (std::size_t i = 0; i < s_.Lp; ++i) {
        cyre[i] = cnre[i] * bv.g1[i];
        cyim[i] = cnim[i] * bv.g1[i];
      }
      frin_norm_row_bwd(z.row_re(b), z.row_im(b), s_.Lp, a.cln1[b], cyre.data(), cyim.data(),
                        0.0, 0.0, 0.0, c_z.row_re(b), c_z.row_im(b));
    });
    for (std::size_t b = 0; b < nw; ++b) {
      const double* cnre = cb_n1_.row_re(b);
      const double* cnim = cb_n1_.row_im(b);
      const double* yre = a.y1.row_re(b);
      const double* yim = a.y1.row_im(b);
      for (std::size_t i = 0; i < s_.Lp; ++i) {
        gb.g1[i] += cnre[i] * yre[i] + cnim[i] * yim[i];
        gb.o1_re[i] += cnre[i];
        gb.o1_im[i] += cnim[i];
      }
    }
  }

  Shapes s_;
  const FftPlan* plan_;
  double inv_sqrt_l_;
  std::size_t cap_ = 0, c_cap_ = 0;

  RMat xp_, pad_tmp_, xhat_, c_pad_;
  CMat f_, bb_, fr_, fc0_, outb_, den_, fhat_;
  std::vector<FrinState> frin_;
  std::vector<BlockActs> blocks_;

  CMat c_fhat_, c_outb_, c_fc_, c_fc_next_, c_fr_, c_f_;
  std::vector<double> c_scale_, c_mean_re_, c_mean_im_;
  CMat cb_n1_, cb_cat_, cb_r1_, cb_n2_, cb_u_, cb_act_, cb_qh_, cb_kh_, cb_vh_;
};

}  // namespace fremer::detail
