#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "fremer/spectral.hpp"
#include "fremer/tensor.hpp"

namespace fremer {

// Every shape in the pipeline follows from this configuration.
struct ForecastTask {
  std::size_t lookback = 720;        // L
  std::size_t horizon = 144;         // T
  double lpf_ratio = 0.01;           // top bins zeroed
  double hpf_ratio = 0.03;           // bottom bins bypassed around the backbone
  std::size_t n_combinations = 144;  // L', frequency combinations
  std::size_t n_heads = 8;           // H
  std::size_t n_blocks = 1;
  std::size_t ff_expansion = 2;

  std::size_t padded_len() const { return lookback + horizon; }
  std::size_t n_bins() const { return half_spectrum_len(padded_len()); }
  BandSpec band() const { return band_from_ratios(hpf_ratio, lpf_ratio, n_bins()); }
  std::size_t backbone_len() const {
    const BandSpec b = band();
    return n_bins() - b.n_low - b.n_high;
  }
  std::size_t head_dim() const { return n_combinations / n_heads; }  // l
  std::size_t ff_dim() const { return ff_expansion * n_combinations; }

  // Throws std::invalid_argument on any violated invariant.
  void validate() const;

  // L' = floor(L/5) rounded down to a multiple of H (floored at H).
  static ForecastTask defaults_for(std::size_t lookback, std::size_t horizon);
};

enum class BlockTensor { wq, wk, wv, wo, norm1_gain, norm1_offset, ff_w1, ff_w2, norm2_gain, norm2_offset };

// All learnable tensors in one flat, checkpointable set. Tensor order is
// fixed: llp.weight, llp.bias, proj_in, per-block group, proj_out.
struct FremerParams {
  std::vector<Tensor> tensors;

  static FremerParams init(const ForecastTask& t, std::uint64_t seed);
  static FremerParams zeros_like(const FremerParams& p);

  Tensor& llp_weight() { return tensors[0]; }
  const Tensor& llp_weight() const { return tensors[0]; }
  Tensor& llp_bias() { return tensors[1]; }
  const Tensor& llp_bias() const { return tensors[1]; }
  Tensor& proj_in() { return tensors[2]; }
  const Tensor& proj_in() const { return tensors[2]; }
  Tensor& block(std::size_t b, BlockTensor which) {
    return tensors[3 + 10 * b + static_cast<std::size_t>(which)];
  }
  const Tensor& block(std::size_t b, BlockTensor which) const {
    return tensors[3 + 10 * b + static_cast<std::size_t>(which)];
  }
  Tensor& proj_out() { return tensors.back(); }
  const Tensor& proj_out() const { return tensors.back(); }

  std::size_t n_blocks() const { return (tensors.size() - 4) / 10; }
  std::size_t scalar_count() const;
  const Tensor* find(std::string_view name) const;
  Tensor* find(std::string_view name);

  // Throws std::invalid_argument if any tensor shape disagrees with the task.
  void validate_shapes(const ForecastTask& t) const;
};

// Gradients are shape-congruent with the parameter set.
using GradientSet = FremerParams;

// F-RIN statistics captured at normalization and reapplied on the way out.
struct NormState {
  cplx mean{0.0, 0.0};
  double scale = 1.0;  // std(|f|) + eps
};

inline constexpr double kFrinEps = 1e-5;

struct ForwardOptions {
  bool capture_attention = false;
  // Splice zeros in place of the backbone band on recovery; the forecast
  // then reflects the low-frequency bypass alone.
  bool silence_backbone = false;
};

struct AttentionTrace {
  // attn[block][head] holds a row-major head_dim x head_dim matrix.
  std::vector<std::vector<std::vector<double>>> attn;
  std::size_t score_macs = 0;  // multiply-accumulates spent on score matrices
};

// --- pipeline pieces -------------------------------------------------------

// concat(x, W^T x + b): first L entries are x verbatim.
std::vector<double> llp_pad(std::span<const double> x, const FremerParams& p,
                            const ForecastTask& t);

std::pair<std::vector<cplx>, NormState> frin_normalize(std::span<const cplx> f);
std::vector<cplx> frin_denormalize(std::span<const cplx> f, const NormState& s);

// One attention head over a combined spectrum of length n_comb. wq/wk/wv are
// row-major n_comb x head_dim complex matrices. Scores are magnitude
// products, softmaxed per row at temperature sqrt(head_dim); attn_out, when
// given, receives the row-major attention matrix and the score MAC count.
std::vector<cplx> csa_head(std::span<const cplx> fc, std::span<const cplx> wq,
                           std::span<const cplx> wk, std::span<const cplx> wv,
                           std::size_t n_comb, std::size_t head_dim,
                           std::vector<double>* attn_out = nullptr,
                           std::size_t* score_macs = nullptr);

// All heads concatenated and mixed through W_O.
std::vector<cplx> csa_multihead(std::span<const cplx> fc, const FremerParams& p,
                                const ForecastTask& t, std::size_t block_index,
                                AttentionTrace* trace = nullptr);

// Pre-norm residual block: r = fc + CSA(CLN1(fc)); out = r + CFF(CLN2(r)).
std::vector<cplx> encoder_block(std::span<const cplx> fc, const FremerParams& p,
                                const ForecastTask& t, std::size_t block_index,
                                AttentionTrace* trace = nullptr);

// Full pipeline: LLP -> rfft -> band filter -> F-RIN -> proj_in -> blocks ->
// proj_out -> F-RIN denorm -> recovery (raw low band, zeroed top band) ->
// irfft -> last T samples.
std::vector<double> forward(std::span<const double> x, const FremerParams& p,
                            const ForecastTask& t, const ForwardOptions& opt = {},
                            AttentionTrace* trace = nullptr);

// Batched variant: xs is n_windows x L row-major, out n_windows x T.
void forward_batch(const double* xs, std::size_t n_windows, const FremerParams& p,
                   const ForecastTask& t, double* out, const ForwardOptions& opt = {},
                   std::vector<AttentionTrace>* traces = nullptr);

}  // namespace fremer
