#include "fremer/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "engine.hpp"
#include "fremer/rng.hpp"

namespace fremer {

using detail::CMat;

Tensor Tensor::real(std::string name, std::vector<std::size_t> shape) {
  Tensor t;
  t.name = std::move(name);
  t.shape = std::move(shape);
  t.is_complex = false;
  t.data.assign(t.numel(), 0.0);
  return t;
}

Tensor Tensor::complex(std::string name, std::vector<std::size_t> shape) {
  Tensor t;
  t.name = std::move(name);
  t.shape = std::move(shape);
  t.is_complex = true;
  t.data.assign(2 * t.numel(), 0.0);
  return t;
}

void ForecastTask::validate() const {
  if (lookback < 1 || horizon < 1) {
    throw std::invalid_argument("model: lookback and horizon must be >= 1");
  }
  if (!(lpf_ratio >= 0.0 && lpf_ratio < 0.5) || !(hpf_ratio >= 0.0 && hpf_ratio < 0.5)) {
    throw std::invalid_argument("model: filter ratios must lie in [0, 0.5)");
  }
  if (n_heads < 1 || n_combinations < 1 || n_blocks < 1 || ff_expansion < 1) {
    throw std::invalid_argument("model: n_combinations, n_heads, n_blocks, ff_expansion must be >= 1");
  }
  if (n_combinations % n_heads != 0) {
    throw std::invalid_argument("model: n_combinations (" + std::to_string(n_combinations) +
                                ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
  }
  const BandSpec b = band_from_ratios(hpf_ratio, lpf_ratio, n_bins());  // throws if bands overflow
  if (n_bins() - b.n_low - b.n_high < 1) {
    throw std::invalid_argument("model: filter bands leave an empty backbone");
  }
}

ForecastTask ForecastTask::defaults_for(std::size_t lookback, std::size_t horizon) {
  ForecastTask t;
  t.lookback = lookback;
  t.horizon = horizon;
  std::size_t lp = lookback / 5;
  lp -= lp % t.n_heads;
  t.n_combinations = std::max(t.n_heads, lp);
  t.validate();
  return t;
}

namespace {

const char* block_tensor_suffix(BlockTensor which) {
  switch (which) {
    case BlockTensor::wq: return "wq";
    case BlockTensor::wk: return "wk";
    case BlockTensor::wv: return "wv";
    case BlockTensor::wo: return "wo";
    case BlockTensor::norm1_gain: return "norm1.gain";
    case BlockTensor::norm1_offset: return "norm1.offset";
    case BlockTensor::ff_w1: return "ff.w1";
    case BlockTensor::ff_w2: return "ff.w2";
    case BlockTensor::norm2_gain: return "norm2.gain";
    case BlockTensor::norm2_offset: return "norm2.offset";
  }
  return "";
}

std::string block_tensor_name(std::size_t b, BlockTensor which) {
  return "block" + std::to_string(b) + "." + block_tensor_suffix(which);
}

void fill_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
}

FremerParams skeleton_for(const ForecastTask& t) {
  const std::size_t L = t.lookback, T = t.horizon;
  const std::size_t Bb = t.backbone_len(), Lp = t.n_combinations;
  const std::size_t H = t.n_heads, l = t.head_dim(), F = t.ff_dim();
  FremerParams p;
  p.tensors.push_back(Tensor::real("llp.weight", {L, T}));
  p.tensors.push_back(Tensor::real("llp.bias", {T}));
  p.tensors.push_back(Tensor::complex("proj_in", {Bb, Lp}));
  for (std::size_t b = 0; b < t.n_blocks; ++b) {
    p.tensors.push_back(Tensor::complex(block_tensor_name(b, BlockTensor::wq), {H, Lp, l}));
    p.tensors.push_back(Tensor::complex(block_tensor_name(b, BlockTensor::wk), {H, Lp, l}));
    p.tensors.push_back(Tensor::complex(block_tensor_name(b, BlockTensor::wv), {H, Lp, l}));
    p.tensors.push_back(Tensor::complex(block_tensor_name(b, BlockTensor::wo), {H * l, Lp}));
    p.tensors.push_back(Tensor::real(block_tensor_name(b, BlockTensor::norm1_gain), {Lp}));
    p.tensors.push_back(Tensor::complex(block_tensor_name(b, BlockTensor::norm1_offset), {Lp}));
    p.tensors.push_back(Tensor::complex(block_tensor_name(b, BlockTensor::ff_w1), {Lp, F}));
    p.tensors.push_back(Tensor::complex(block_tensor_name(b, BlockTensor::ff_w2), {F, Lp}));
    p.tensors.push_back(Tensor::real(block_tensor_name(b, BlockTensor::norm2_gain), {Lp}));
    p.tensors.push_back(Tensor::complex(block_tensor_name(b, BlockTensor::norm2_offset), {Lp}));
  }
  p.tensors.push_back(Tensor::complex("proj_out", {Lp, Bb}));
  return p;
}

}  // namespace

FremerParams FremerParams::init(const ForecastTask& t, std::uint64_t seed) {
  t.validate();
  FremerParams p = skeleton_for(t);

  Rng rng = Rng::substream(seed, "model.init");
  const std::size_t L = t.lookback, Bb = t.backbone_len();
  const std::size_t Lp = t.n_combinations, F = t.ff_dim();
  fill_uniform(p.llp_weight(), L, rng);
  // llp.bias stays zero
  fill_uniform(p.proj_in(), Bb, rng);
  for (std::size_t b = 0; b < t.n_blocks; ++b) {
    fill_uniform(p.block(b, BlockTensor::wq), Lp, rng);
    fill_uniform(p.block(b, BlockTensor::wk), Lp, rng);
    fill_uniform(p.block(b, BlockTensor::wv), Lp, rng);
    fill_uniform(p.block(b, BlockTensor::wo), Lp, rng);
    auto& g1 = p.block(b, BlockTensor::norm1_gain);
    g1.data.assign(g1.numel(), 1.0);
    fill_uniform(p.block(b, BlockTensor::ff_w1), Lp, rng);
    fill_uniform(p.block(b, BlockTensor::ff_w2), F, rng);
    auto& g2 = p.block(b, BlockTensor::norm2_gain);
    g2.data.assign(g2.numel(), 1.0);
    // offsets stay zero
  }
  fill_uniform(p.proj_out(), Lp, rng);
  return p;
}

FremerParams FremerParams::zeros_like(const FremerParams& p) {
  FremerParams z;
  z.tensors.reserve(p.tensors.size());
  for (const auto& t : p.tensors) {
    z.tensors.push_back(t.is_complex ? Tensor::complex(t.name, t.shape)
                                     : Tensor::real(t.name, t.shape));
  }
  return z;
}

std::size_t FremerParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.data.size();
  return n;
}

const Tensor* FremerParams::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

Tensor* FremerParams::find(std::string_view name) {
  for (auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void FremerParams::validate_shapes(const ForecastTask& t) const {
  const FremerParams want = skeleton_for(t);
  if (tensors.size() != want.tensors.size()) {
    throw std::invalid_argument("model: parameter set has " + std::to_string(tensors.size()) +
                                " tensors, task expects " + std::to_string(want.tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const Tensor& got = tensors[i];
    const Tensor& exp = want.tensors[i];
    if (got.name != exp.name || got.is_complex != exp.is_complex || got.shape != exp.shape) {
      throw std::invalid_argument("model: tensor '" + got.name + "' does not match task shape for '" +
                                  exp.name + "'");
    }
  }
}

// --- spec operations -----------------------------------------------------------

std::vector<double> llp_pad(std::span<const double> x, const FremerParams& p,
                            const ForecastTask& t) {
  if (x.size() != t.lookback) {
    throw std::invalid_argument("model: llp_pad input length " + std::to_string(x.size()) +
                                " != lookback " + std::to_string(t.lookback));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw std::invalid_argument("model: non-finite sample at index " + std::to_string(i));
    }
  }
  std::vector<double> out(t.padded_len());
  for (std::size_t i = 0; i < t.lookback; ++i) out[i] = x[i];
  std::vector<double> pad(t.horizon);
  detail::gemm_ab(1, t.horizon, t.lookback, x.data(), p.llp_weight().re(), pad.data(), false);
  const double* bias = p.llp_bias().re();
  for (std::size_t i = 0; i < t.horizon; ++i) out[t.lookback + i] = bias[i] + pad[i];
  return out;
}

std::pair<std::vector<cplx>, NormState> frin_normalize(std::span<const cplx> f) {
  if (f.empty()) throw std::invalid_argument("model: frin_normalize input is empty");
  const std::size_t n = f.size();
  std::vector<double> re(n), im(n), ore(n), oim(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = f[i].real();
    im[i] = f[i].imag();
  }
  detail::FrinState st;
  detail::frin_norm_row(re.data(), im.data(), n, ore.data(), oim.data(), st);
  std::vector<cplx> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = cplx(ore[i], oim[i]);
  return {std::move(out), NormState{cplx(st.m_re, st.m_im), st.scale}};
}

std::vector<cplx> frin_denormalize(std::span<const cplx> f, const NormState& s) {
  std::vector<cplx> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    out[i] = cplx(f[i].real() * s.scale + s.mean.real(), f[i].imag() * s.scale + s.mean.imag());
  }
  return out;
}

namespace {

// Planarize an interleaved complex matrix for the kernels.
void planarize(std::span<const cplx> v, std::vector<double>& re, std::vector<double>& im) {
  re.resize(v.size());
  im.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    re[i] = v[i].real();
    im[i] = v[i].imag();
  }
}

CMat planarize_row(std::span<const cplx> v) {
  CMat m;
  m.resize(1, v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    m.re[i] = v[i].real();
    m.im[i] = v[i].imag();
  }
  return m;
}

}  // namespace

std::vector<cplx> csa_head(std::span<const cplx> fc, std::span<const cplx> wq,
                           std::span<const cplx> wk, std::span<const cplx> wv,
                           std::size_t n_comb, std::size_t head_dim,
                           std::vector<double>* attn_out, std::size_t* score_macs) {
  if (fc.size() != n_comb || wq.size() != n_comb * head_dim || wk.size() != wq.size() ||
      wv.size() != wq.size()) {
    throw std::invalid_argument("model: csa_head shape mismatch");
  }
  CMat z = planarize_row(fc);
  std::vector<double> wre, wim;
  CMat q, k, v;
  q.resize(1, head_dim);
  k.resize(1, head_dim);
  v.resize(1, head_dim);
  planarize(wq, wre, wim);
  detail::cgemm_ab(z, wre.data(), wim.data(), n_comb, head_dim, q);
  planarize(wk, wre, wim);
  detail::cgemm_ab(z, wre.data(), wim.data(), n_comb, head_dim, k);
  planarize(wv, wre, wim);
  detail::cgemm_ab(z, wre.data(), wim.data(), n_comb, head_dim, v);

  std::vector<double> mq(head_dim), mk(head_dim), A(head_dim * head_dim);
  std::vector<double> o_re(head_dim), o_im(head_dim);
  std::size_t macs = 0;
  detail::attention_row(q.re.data(), q.im.data(), k.re.data(), k.im.data(), v.re.data(),
                        v.im.data(), head_dim, 1.0 / std::sqrt(static_cast<double>(head_dim)),
                        mq.data(), mk.data(), A.data(), o_re.data(), o_im.data(), &macs);
  for (std::size_t i = 0; i < head_dim * head_dim; ++i) {
    if (!std::isfinite(A[i])) {
      throw std::runtime_error("model: non-finite attention weight; training step must abort");
    }
  }
  if (attn_out) *attn_out = A;
  if (score_macs) *score_macs += macs;
  std::vector<cplx> out(head_dim);
  for (std::size_t i = 0; i < head_dim; ++i) out[i] = cplx(o_re[i], o_im[i]);
  return out;
}

std::vector<cplx> csa_multihead(std::span<const cplx> fc, const FremerParams& p,
                                const ForecastTask& t, std::size_t block_index,
                                AttentionTrace* trace) {
  const std::size_t Lp = t.n_combinations, H = t.n_heads, l = t.head_dim();
  if (fc.size() != Lp) throw std::invalid_argument("model: csa_multihead expects length n_combinations");
  const Tensor& wq = p.block(block_index, BlockTensor::wq);
  const Tensor& wk = p.block(block_index, BlockTensor::wk);
  const Tensor& wv = p.block(block_index, BlockTensor::wv);
  const Tensor& wo = p.block(block_index, BlockTensor::wo);

  if (trace) {
    trace->attn.assign(1, std::vector<std::vector<double>>(H));
  }

  CMat z = planarize_row(fc);
  CMat cat;
  cat.resize(1, Lp);
  const std::size_t mat = Lp * l;
  std::vector<double> mq(l), mk(l), A(l * l);
  CMat q, k, v;
  q.resize(1, l);
  k.resize(1, l);
  v.resize(1, l);
  std::size_t macs = 0;
  for (std::size_t h = 0; h < H; ++h) {
    detail::cgemm_ab(z, wq.re() + h * mat, wq.im() + h * mat, Lp, l, q);
    detail::cgemm_ab(z, wk.re() + h * mat, wk.im() + h * mat, Lp, l, k);
    detail::cgemm_ab(z, wv.re() + h * mat, wv.im() + h * mat, Lp, l, v);
    detail::attention_row(q.re.data(), q.im.data(), k.re.data(), k.im.data(), v.re.data(),
                          v.im.data(), l, 1.0 / std::sqrt(static_cast<double>(l)), mq.data(),
                          mk.data(), A.data(), cat.re.data() + h * l, cat.im.data() + h * l,
                          &macs);
    if (trace) trace->attn[0][h] = A;
  }
  if (trace) trace->score_macs += macs;

  CMat out;
  out.resize(1, Lp);
  detail::cgemm_ab(cat, wo.re(), wo.im(), Lp, Lp, out);
  std::vector<cplx> res(Lp);
  for (std::size_t i = 0; i < Lp; ++i) res[i] = cplx(out.re[i], out.im[i]);
  return res;
}

std::vector<cplx> encoder_block(std::span<const cplx> fc, const FremerParams& p,
                                const ForecastTask& t, std::size_t block_index,
                                AttentionTrace* trace) {
  const std::size_t Lp = t.n_combinations;
  if (fc.size() != Lp) throw std::invalid_argument("model: encoder_block expects length n_combinations");

  const auto cln = [&](std::span<const cplx> in, const Tensor& gain, const Tensor& offset) {
    std::vector<double> re(Lp), im(Lp), yre(Lp), yim(Lp);
    for (std::size_t i = 0; i < Lp; ++i) {
      re[i] = in[i].real();
      im[i] = in[i].imag();
    }
    detail::FrinState st;
    detail::frin_norm_row(re.data(), im.data(), Lp, yre.data(), yim.data(), st);
    std::vector<cplx> out(Lp);
    const double* g = gain.re();
    const double* ore = offset.re();
    const double* oim = offset.im();
    for (std::size_t i = 0; i < Lp; ++i) {
      out[i] = cplx(g[i] * yre[i] + ore[i], g[i] * yim[i] + oim[i]);
    }
    return out;
  };

  // r = fc + CSA(CLN1(fc))
  std::vector<cplx> n1 = cln(fc, p.block(block_index, BlockTensor::norm1_gain),
                             p.block(block_index, BlockTensor::norm1_offset));
  std::vector<cplx> att = csa_multihead(n1, p, t, block_index, trace);
  std::vector<cplx> r(Lp);
  for (std::size_t i = 0; i < Lp; ++i) r[i] = fc[i] + att[i];

  // out = r + CFF(CLN2(r))
  std::vector<cplx> n2 = cln(r, p.block(block_index, BlockTensor::norm2_gain),
                             p.block(block_index, BlockTensor::norm2_offset));
  const Tensor& w1 = p.block(block_index, BlockTensor::ff_w1);
  const Tensor& w2 = p.block(block_index, BlockTensor::ff_w2);
  const std::size_t F = t.ff_dim();
  CMat zn = planarize_row(n2);
  CMat u, act, f;
  u.resize(1, F);
  act.resize(1, F);
  f.resize(1, Lp);
  detail::cgemm_ab(zn, w1.re(), w1.im(), Lp, F, u);
  for (std::size_t i = 0; i < F; ++i) {
    act.re[i] = detail::gelu(u.re[i]);
    act.im[i] = detail::gelu(u.im[i]);
  }
  detail::cgemm_ab(act, w2.re(), w2.im(), F, Lp, f);

  std::vector<cplx> out(Lp);
  for (std::size_t i = 0; i < Lp; ++i) out[i] = r[i] + cplx(f.re[i], f.im[i]);
  return out;
}

void forward_batch(const double* xs, std::size_t n_windows, const FremerParams& p,
                   const ForecastTask& t, double* out, const ForwardOptions& opt,
                   std::vector<AttentionTrace>* traces) {
  p.validate_shapes(t);
  for (std::size_t i = 0; i < n_windows * t.lookback; ++i) {
    if (!std::isfinite(xs[i])) {
      throw std::invalid_argument("model: non-finite input sample (window " +
                                  std::to_string(i / t.lookback) + ", index " +
                                  std::to_string(i % t.lookback) + ")");
    }
  }
  detail::Engine engine(t);
  const detail::ParamView pv = detail::ParamView::from(p, engine.shapes());
  engine.forward(xs, n_windows, pv, out, opt, traces);
}

std::vector<double> forward(std::span<const double> x, const FremerParams& p,
                            const ForecastTask& t, const ForwardOptions& opt,
                            AttentionTrace* trace) {
  if (x.size() != t.lookback) {
    throw std::invalid_argument("model: forward input length " + std::to_string(x.size()) +
                                " != lookback " + std::to_string(t.lookback));
  }
  std::vector<double> out(t.horizon);
  std::vector<AttentionTrace> traces;
  forward_batch(x.data(), 1, p, t, out.data(), opt, opt.capture_attention ? &traces : nullptr);
  if (opt.capture_attention && trace) *trace = std::move(traces[0]);
  return out;
}

}  // namespace fremer
