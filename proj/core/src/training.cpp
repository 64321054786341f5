#include "fremer/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "engine.hpp"
#include "fremer/rng.hpp"

namespace fremer {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("training: learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("training: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("training: epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("training: ADAM betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("training: ADAM eps must be > 0");
  if (grad_clip < 0.0) throw std::invalid_argument("training: grad_clip must be >= 0");
}

double loss_mse(std::span<const double> forecast, std::span<const double> target) {
  if (forecast.size() != target.size()) {
    throw std::invalid_argument("training: loss_mse length mismatch (" +
                                std::to_string(forecast.size()) + " vs " +
                                std::to_string(target.size()) + ")");
  }
  if (forecast.empty()) throw std::invalid_argument("training: loss_mse on empty vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < forecast.size(); ++i) {
    const double d = forecast[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(forecast.size());
}

namespace {

// Returns the name of the first tensor holding a non-finite value, or empty.
std::string first_nonfinite(const FremerParams& grads) {
  for (const auto& t : grads.tensors) {
    for (double v : t.data) {
      if (!std::isfinite(v)) return t.name;
    }
  }
  return {};
}

}  // namespace

BackwardResult backward(std::span<const double> x, std::span<const double> target,
                        const FremerParams& params, const ForecastTask& task) {
  if (x.size() != task.lookback || target.size() != task.horizon) {
    throw std::invalid_argument("training: backward input/target shape mismatch");
  }
  params.validate_shapes(task);

  detail::Engine engine(task);
  const detail::ParamView pv = detail::ParamView::from(params, engine.shapes());

  BackwardResult res;
  res.grads = FremerParams::zeros_like(params);
  detail::GradView gv = detail::GradView::from(res.grads, engine.shapes());

  std::vector<double> out(task.horizon);
  engine.forward(x.data(), 1, pv, out.data());
  res.loss = loss_mse(out, target);

  std::vector<double> c_out(task.horizon);
  const double inv_t = 2.0 / static_cast<double>(task.horizon);
  for (std::size_t i = 0; i < task.horizon; ++i) c_out[i] = inv_t * (out[i] - target[i]);
  engine.backward(x.data(), 1, pv, c_out.data(), gv);

  res.nonfinite_tensor = first_nonfinite(res.grads);
  res.finite = res.nonfinite_tensor.empty() && std::isfinite(res.loss);
  return res;
}

AdamState AdamState::init(const FremerParams& p) {
  AdamState st;
  st.m.reserve(p.tensors.size());
  st.v.reserve(p.tensors.size());
  for (const auto& t : p.tensors) {
    st.m.emplace_back(t.data.size(), 0.0);
    st.v.emplace_back(t.data.size(), 0.0);
  }
  return st;
}

void adam_step(FremerParams& params, const GradientSet& grads, AdamState& st,
               const TrainConfig& cfg) {
  if (st.m.size() != params.tensors.size()) {
    throw std::invalid_argument("training: ADAM state incongruent with parameters");
  }
  st.step += 1;
  const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
    auto& p = params.tensors[ti].data;
    const auto& g = grads.tensors[ti].data;
    auto& m = st.m[ti];
    auto& v = st.v[ti];
    if (p.size() != g.size()) {
      throw std::invalid_argument("training: gradient shape mismatch on '" +
                                  params.tensors[ti].name + "'");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / b1t;
      const double vhat = v[i] / b2t;
      p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

namespace {

struct WindowRef {
  std::size_t instance;  // index into the normalized-series table
  std::size_t begin;     // lookback start
};

double global_grad_norm(const FremerParams& grads) {
  double acc = 0.0;
  for (const auto& t : grads.tensors) {
    for (double v : t.data) acc += v * v;
  }
  return std::sqrt(acc);
}

}  // namespace

TrainResult train(const TraceSet& data, const ForecastTask& task, const TrainConfig& cfg,
                  const SplitSpec& split_spec) {
  task.validate();
  cfg.validate();
  split_spec.validate();
  const std::size_t L = task.lookback, T = task.horizon;

  // Normalize every instance with its training-span statistics.
  std::vector<std::string> ids;
  std::vector<std::vector<double>> series;
  std::vector<WindowRef> train_windows, val_windows;
  std::map<std::string, Normalizer> normalizers;
  for (const auto& [id, ts] : data.instances) {
    const SplitSpans spans = split(ts.values.size(), split_spec);
    const Normalizer norm = Normalizer::fit(
        std::span<const double>(ts.values).subspan(spans.train.begin, spans.train.size()));
    normalizers[id] = norm;
    std::vector<double> normed(ts.values.size());
    for (std::size_t i = 0; i < ts.values.size(); ++i) normed[i] = norm.normalize(ts.values[i]);
    const std::size_t idx = series.size();
    ids.push_back(id);
    series.push_back(std::move(normed));
    for (const Window& w : windows(spans.train, L, T)) {
      train_windows.push_back({idx, w.input_begin});
    }
    for (const Window& w : windows_with_history(spans.val, L, T)) {
      val_windows.push_back({idx, w.input_begin});
    }
  }
  if (train_windows.empty()) {
    throw std::invalid_argument("training: empty split, no training windows of length L+T fit");
  }
  if (val_windows.empty()) {
    throw std::invalid_argument("training: empty split, no validation windows available");
  }

  FremerParams params = FremerParams::init(task, cfg.seed);
  GradientSet grads = FremerParams::zeros_like(params);
  AdamState adam = AdamState::init(params);

  detail::Engine engine(task);
  const detail::ParamView pv = detail::ParamView::from(params, engine.shapes());
  detail::GradView gv = detail::GradView::from(grads, engine.shapes());

  const std::size_t bs = cfg.batch_size;
  std::vector<double> bx(bs * L), by(bs * T), bout(bs * T), c_out(bs * T);

  const auto fill_batch = [&](const std::vector<WindowRef>& refs, std::size_t from,
                              std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const WindowRef& w = refs[from + i];
      const double* src = series[w.instance].data() + w.begin;
      double* dx = bx.data() + i * L;
      for (std::size_t j = 0; j < L; ++j) dx[j] = src[j];
      double* dy = by.data() + i * T;
      const double* ty = src + L;
      for (std::size_t j = 0; j < T; ++j) dy[j] = ty[j];
    }
  };

  const auto eval_mean_mse = [&](const std::vector<WindowRef>& refs) {
    double sse = 0.0;
    for (std::size_t from = 0; from < refs.size(); from += bs) {
      const std::size_t count = std::min(bs, refs.size() - from);
      fill_batch(refs, from, count);
      engine.forward(bx.data(), count, pv, bout.data());
      for (std::size_t i = 0; i < count * T; ++i) {
        const double d = bout[i] - by[i];
        sse += d * d;
      }
    }
    return sse / (static_cast<double>(refs.size()) * static_cast<double>(T));
  };

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<WindowRef> order = train_windows;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng = Rng::substream(cfg.seed, "train.shuffle", epoch);
    shuffle_rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    std::size_t loss_windows = 0;
    for (std::size_t from = 0; from < order.size(); from += bs) {
      const std::size_t count = std::min(bs, order.size() - from);
      fill_batch(order, from, count);
      engine.forward(bx.data(), count, pv, bout.data());

      double sse = 0.0;
      const double inv = 2.0 / (static_cast<double>(count) * static_cast<double>(T));
      for (std::size_t i = 0; i < count * T; ++i) {
        const double d = bout[i] - by[i];
        sse += d * d;
        c_out[i] = inv * d;
      }
      const double batch_loss = sse / (static_cast<double>(count) * static_cast<double>(T));
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("training: divergence (non-finite loss) at epoch " +
                                 std::to_string(epoch));
      }

      for (auto& t : grads.tensors) t.zero();
      engine.backward(bx.data(), count, pv, c_out.data(), gv);
      const std::string bad = first_nonfinite(grads);
      if (!bad.empty()) {
        std::fprintf(stderr, "training: step rejected, non-finite gradient in '%s' (epoch %zu)\n",
                     bad.c_str(), epoch);
        continue;
      }
      if (cfg.grad_clip > 0.0) {
        const double norm = global_grad_norm(grads);
        if (norm > cfg.grad_clip) {
          const double scale = cfg.grad_clip / norm;
          for (auto& t : grads.tensors) {
            for (auto& v : t.data) v *= scale;
          }
        }
      }
      adam_step(params, grads, adam, cfg);
      loss_sum += batch_loss * static_cast<double>(count);
      loss_windows += count;
    }

    const double train_loss = loss_windows ? loss_sum / static_cast<double>(loss_windows) : 0.0;
    const double val_loss = eval_mean_mse(val_windows);
    if (!std::isfinite(val_loss)) {
      throw std::runtime_error("training: divergence (non-finite validation loss) at epoch " +
                               std::to_string(epoch));
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back({train_loss, val_loss, wall});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  result.normalizers = std::move(normalizers);
  return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("training: cannot open '" + path + "' for writing");
  out << "epoch,train_loss,val_loss,wall_seconds\n";
  char buf[160];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.3f\n", i, history[i].train_loss,
                  history[i].val_loss, history[i].wall_seconds);
    out << buf;
  }
}

}  // namespace fremer
