#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fundcast/models.hpp"

namespace fundcast {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  std::size_t patience = 8;     // early stopping on validation MAE
  double dropout_rate = 0.1;
  double grad_clip_norm = 5.0;  // global norm, guards long sequences
  std::uint64_t seed = 0;
  /// Stride over instance days when expanding the training set (1 = all 41
  /// days). Evaluation always uses exact days; this only thins the per-epoch
  /// workload.
  int day_stride = 1;
  bool log_to_stderr = false;
};

struct EpochStats {
  double train_loss = 0.0;  // raw-scale MSE
  double val_mae = 0.0;     // raw RMB
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // index into epochs

  double best_val_mae() const { return epochs[best_epoch].val_mae; }
};

/// Raised when the loss goes non-finite; carries the history of the epochs
/// that completed before the divergence.
struct TrainDivergence : TrainingError {
  TrainHistory history;
  TrainDivergence(const std::string& msg, TrainHistory h)
      : TrainingError(msg), history(std::move(h)) {}
};

/// Mean of squared residuals (use on like-scaled vectors).
double mse_loss(const Vector& predictions, const Vector& targets);

/// Buckets instances by sequence length d so a batch never mixes lengths.
/// Within-length order and the order of the emitted batches are shuffled from
/// the seed; total count is preserved.
std::vector<std::vector<Instance>> batch_by_length(const std::vector<Instance>& instances,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed);

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8). `m1` and
/// `m2` are zeros_like clones of the model holding the moment estimates;
/// `step` counts completed updates. Non-finite gradients abort the step.
void adam_step(Model& params, const Model& grads, Model& m1, Model& m2,
               std::size_t step, double lr);

/// Scales gradients so their global L2 norm is at most max_norm.
void clip_gradients(Model& grads, double max_norm);

/// Mean standardized squared error over the batch; accumulates gradients into
/// `grads` (caller zeroes). Returns the standardized-scale batch loss.
double batch_loss_and_grads(const Model& model, const Corpus& corpus,
                            const std::vector<Instance>& batch, Rng& dropout_rng,
                            Model& grads);

/// Inference-mode standardized loss over a set of instances (no gradients).
double dataset_loss_std(const Model& model, const Corpus& corpus,
                        const std::vector<Instance>& instances);

/// Mean absolute error in raw RMB over instances.
double dataset_mae(const Model& model, const Corpus& corpus,
                   const std::vector<Instance>& instances);

/// Mini-batch Adam over length buckets; z-scoring statistics are fitted on
/// the training split before the first epoch. Returns the parameters of the
/// best validation-MAE epoch (checkpointed, not last).
std::pair<Model, TrainHistory> train(Model model, const Corpus& corpus,
                                     const Dataset& splits, const TrainConfig& cfg);

void write_history_csv(const TrainHistory& history, const std::string& path);

// ---------------------------------------------------------------------------
// Tuning

struct TuneSpace {
  std::vector<std::size_t> width_grid;  // candidate widths per layer
  std::size_t max_depth = 3;
  double min_rel_gain = 0.01;  // stop growing when the marginal gain drops below
};

struct TuneTrace {
  std::vector<std::size_t> widths;
  double score = 0.0;  // validation MAE, lower is better
};

struct TuneResult {
  std::vector<std::size_t> widths;
  double score = 0.0;
  std::vector<TuneTrace> trace;
};

/// Greedy layer-wise search: tune layer 1 width over the grid, freeze it, add
/// layer 2, and so on; growth stops when the relative improvement falls below
/// min_rel_gain. The objective maps a width stack to a score (lower better).
TuneResult tune_layer_widths(const TuneSpace& space,
                             const std::function<double(const std::vector<std::size_t>&)>& objective);

/// Full protocol: the widths being tuned are the LSTM units for recurrent
/// variants and the hidden head widths for the feed-forward baselines.
struct TunedConfig {
  ArchConfig config;
  TuneResult result;
};
TunedConfig tune(ModelVariant variant, const Corpus& corpus, const Dataset& splits,
                 const TuneSpace& space, const ArchConfig& base, const TrainConfig& train_cfg);

}  // namespace fundcast
