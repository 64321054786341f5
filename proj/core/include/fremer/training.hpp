#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fremer/data.hpp"
#include "fremer/model.hpp"

namespace fremer {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  double grad_clip = 0.0;  // max global L2 norm; 0 disables clipping

  void validate() const;
};

double loss_mse(std::span<const double> forecast, std::span<const double> target);

struct BackwardResult {
  double loss = 0.0;
  GradientSet grads;
  bool finite = true;              // false -> step must be rejected
  std::string nonfinite_tensor;    // diagnostics when finite == false
};

// Gradient of loss_mse(forward(x), target) with respect to every parameter
// scalar, complex tensors differentiated as pairs of real tensors.
BackwardResult backward(std::span<const double> x, std::span<const double> target,
                        const FremerParams& params, const ForecastTask& task);

struct AdamState {
  std::vector<std::vector<double>> m, v;  // parallel to params.tensors
  std::uint64_t step = 0;
  static AdamState init(const FremerParams& p);
};

// Standard bias-corrected update, applied independently per real scalar.
void adam_step(FremerParams& params, const GradientSet& grads, AdamState& st,
               const TrainConfig& cfg);

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  FremerParams params;  // snapshot with minimum validation loss
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::map<std::string, Normalizer> normalizers;
};

// Stride-1 training windows over each instance's training span, shuffled
// across instances per epoch; windows are normalized with per-instance
// training-span statistics. Model selection picks the best validation loss.
TrainResult train(const TraceSet& data, const ForecastTask& task, const TrainConfig& cfg,
                  const SplitSpec& split_spec = {});

// epoch,train_loss,val_loss,wall_seconds
void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace fremer
