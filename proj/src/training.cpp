#include "fundcast/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>

namespace fundcast {

double mse_loss(const Vector& predictions, const Vector& targets) {
  if (predictions.empty()) throw UsageError("mse_loss: empty input");
  if (predictions.size() != targets.size())
    throw ShapeError("mse_loss: length mismatch " + std::to_string(predictions.size()) +
                     " vs " + std::to_string(targets.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - targets[i];
    acc += r * r;
  }
  return acc / static_cast<double>(predictions.size());
}

namespace {

void seeded_shuffle_instances(std::vector<Instance>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.uniform_int(i)]);
}

}  // namespace

std::vector<std::vector<Instance>> batch_by_length(const std::vector<Instance>& instances,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed) {
  if (instances.empty()) throw UsageError("batch_by_length: no instances");
  if (batch_size == 0) throw UsageError("batch_by_length: batch size must be positive");
  std::map<int, std::vector<Instance>> buckets;
  for (const Instance& inst : instances) buckets[inst.day].push_back(inst);
  Rng rng = Rng(seed).split(0xba7c);
  std::vector<std::vector<Instance>> batches;
  for (auto& [day, bucket] : buckets) {
    seeded_shuffle_instances(bucket, rng);
    for (std::size_t i = 0; i < bucket.size(); i += batch_size) {
      const std::size_t end = std::min(i + batch_size, bucket.size());
      batches.emplace_back(bucket.begin() + i, bucket.begin() + end);
    }
  }
  // shuffle batch order too so epochs do not sweep lengths monotonically
  for (std::size_t i = batches.size(); i > 1; --i)
    std::swap(batches[i - 1], batches[rng.uniform_int(i)]);
  return batches;
}

void clip_gradients(Model& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& s : param_spans(grads))
    for (double v : s) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (auto& s : param_spans(grads))
    for (double& v : s) v *= scale;
}

void adam_step(Model& params, const Model& grads, Model& m1, Model& m2,
               std::size_t step, double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  auto p = param_spans(params);
  auto g = param_spans(grads);
  auto a = param_spans(m1);
  auto b = param_spans(m2);
  const double t = static_cast<double>(step);
  const double corr1 = 1.0 - std::pow(kBeta1, t);
  const double corr2 = 1.0 - std::pow(kBeta2, t);
  for (std::size_t s = 0; s < p.size(); ++s) {
    for (std::size_t i = 0; i < p[s].size(); ++i) {
      const double gi = g[s][i];
      if (!std::isfinite(gi))
        throw NumericError("adam_step: non-finite gradient; aborting update");
      a[s][i] = kBeta1 * a[s][i] + (1.0 - kBeta1) * gi;
      b[s][i] = kBeta2 * b[s][i] + (1.0 - kBeta2) * gi * gi;
      const double mhat = a[s][i] / corr1;
      const double vhat = b[s][i] / corr2;
      p[s][i] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

double batch_loss_and_grads(const Model& model, const Corpus& corpus,
                            const std::vector<Instance>& batch, Rng& dropout_rng,
                            Model& grads) {
  if (batch.empty()) throw UsageError("batch_loss_and_grads: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  ModelCache cache;
  for (const Instance& inst : batch) {
    const CaseRecord& rec = corpus[inst.case_index];
    const double out = model_forward_std(model, rec, inst.day, RunMode::Train,
                                         &dropout_rng, &cache);
    const double target = model.norm.norm_target(inst.label);
    const double r = out - target;
    loss += r * r * inv_n;
    model_backward(model, rec, inst.day, cache, 2.0 * r * inv_n, grads);
  }
  return loss;
}

double dataset_loss_std(const Model& model, const Corpus& corpus,
                        const std::vector<Instance>& instances) {
  if (instances.empty()) throw UsageError("dataset_loss_std: no instances");
  double acc = 0.0;
  for (const Instance& inst : instances) {
    const double out = model_forward_std(model, corpus[inst.case_index], inst.day,
                                         RunMode::Inference, nullptr, nullptr);
    const double r = out - model.norm.norm_target(inst.label);
    acc += r * r;
  }
  return acc / static_cast<double>(instances.size());
}

double dataset_mae(const Model& model, const Corpus& corpus,
                   const std::vector<Instance>& instances) {
  if (instances.empty()) throw UsageError("dataset_mae: no instances");
  double acc = 0.0;
  for (const Instance& inst : instances)
    acc += std::abs(predict_day(model, corpus[inst.case_index], inst.day) - inst.label);
  return acc / static_cast<double>(instances.size());
}

namespace {

std::vector<Instance> instances_for(const Corpus& corpus,
                                    const std::vector<std::size_t>& cases,
                                    int day_stride, bool series_based) {
  std::vector<Instance> out;
  for (std::size_t idx : cases) {
    const CaseRecord& rec = corpus[idx];
    if (!series_based) {
      // feed-forward baselines: one instance per case (prediction is
      // constant over days)
      out.push_back({idx, 1, rec.total_donations});
      continue;
    }
    const int span = static_cast<int>(rec.series.cols);
    for (int d = 1; d <= std::min(kPredictionDays, span); d += std::max(day_stride, 1))
      out.push_back({idx, d, rec.total_donations});
  }
  return out;
}

void zero_params(Model& m) {
  for (auto& s : param_spans(m))
    std::fill(s.begin(), s.end(), 0.0);
}

}  // namespace

std::pair<Model, TrainHistory> train(Model model, const Corpus& corpus,
                                     const Dataset& splits, const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
  if (cfg.batch_size == 0 || cfg.max_epochs == 0 || cfg.patience == 0)
    throw ConfigError("train: batch_size, max_epochs and patience must be positive");
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0)
    throw ConfigError("train: dropout_rate must be in [0,1)");
  if (splits.train.empty() || splits.val.empty())
    throw UsageError("train: need non-empty train and validation splits");

  model.norm = Normalizer::fit(corpus, splits.train);
  model.config.dropout_rate = cfg.dropout_rate;
  if (model.pre_dense) model.pre_dense->dropout_rate = cfg.dropout_rate;
  model.head.dropout_rate = cfg.dropout_rate;

  const bool series_based = variant_uses_series(model.variant);
  const std::vector<Instance> train_instances =
      instances_for(corpus, splits.train, cfg.day_stride, series_based);
  const std::vector<Instance> val_instances =
      instances_for(corpus, splits.val, cfg.day_stride, series_based);
  if (train_instances.empty() || val_instances.empty())
    throw UsageError("train: splits produced no usable instances");

  Model grads = zeros_like(model);
  Model m1 = zeros_like(model);
  Model m2 = zeros_like(model);
  std::size_t adam_t = 0;

  TrainHistory history;
  Model best = model;
  double best_mae = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  Rng dropout_rng = Rng(cfg.seed).split(0xd202);
  const double raw_scale = model.norm.target_std * model.norm.target_std;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches =
        batch_by_length(train_instances, cfg.batch_size, cfg.seed + epoch);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (const auto& batch : batches) {
      zero_params(grads);
      const double loss = batch_loss_and_grads(model, corpus, batch, dropout_rng, grads);
      if (!std::isfinite(loss))
        throw TrainDivergence(
            "train: non-finite loss at epoch " + std::to_string(epoch), history);
      clip_gradients(grads, cfg.grad_clip_norm);
      adam_step(model, grads, m1, m2, ++adam_t, cfg.learning_rate);
      epoch_loss += loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    epoch_loss /= static_cast<double>(seen);

    const double val_mae = dataset_mae(model, corpus, val_instances);
    const auto t1 = std::chrono::steady_clock::now();
    EpochStats stats;
    stats.train_loss = epoch_loss * raw_scale;
    stats.val_mae = val_mae;
    stats.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    history.epochs.push_back(stats);

    if (val_mae < best_mae) {
      best_mae = val_mae;
      best = model;
      history.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (cfg.log_to_stderr)
      std::cerr << "epoch " << epoch << " train_loss " << stats.train_loss
                << " val_mae " << val_mae << "\n";
    if (since_best >= cfg.patience) break;
  }
  return {std::move(best), std::move(history)};
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_history_csv: cannot open " + path);
  out << std::setprecision(12);
  out << "epoch,train_loss,val_mae,wall_seconds,is_best\n";
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const auto& e = history.epochs[i];
    out << i << ',' << e.train_loss << ',' << e.val_mae << ',' << e.wall_seconds << ','
        << (i == history.best_epoch ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Tuning

TuneResult tune_layer_widths(
    const TuneSpace& space,
    const std::function<double(const std::vector<std::size_t>&)>& objective) {
  if (space.width_grid.empty()) throw UsageError("tune: empty width grid");
  if (space.max_depth == 0) throw UsageError("tune: max_depth must be positive");
  TuneResult result;
  std::vector<std::size_t> widths;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t depth = 0; depth < space.max_depth; ++depth) {
    std::size_t best_width = 0;
    double depth_best = std::numeric_limits<double>::infinity();
    for (std::size_t w : space.width_grid) {
      widths.push_back(w);
      const double score = objective(widths);
      result.trace.push_back({widths, score});
      widths.pop_back();
      if (score < depth_best) {
        depth_best = score;
        best_width = w;
      }
    }
    const bool first = depth == 0;
    const double rel_gain = first ? 1.0 : (best_score - depth_best) / best_score;
    if (!first && rel_gain < space.min_rel_gain) break;  // marginal improvement
    widths.push_back(best_width);
    best_score = depth_best;
    result.widths = widths;
    result.score = best_score;
  }
  return result;
}

TunedConfig tune(ModelVariant variant, const Corpus& corpus, const Dataset& splits,
                 const TuneSpace& space, const ArchConfig& base,
                 const TrainConfig& train_cfg) {
  const bool series_based = variant_uses_series(variant);
  auto objective = [&](const std::vector<std::size_t>& widths) {
    ArchConfig cfg = base;
    if (series_based)
      cfg.lstm_units = widths;
    else
      cfg.nn_hidden = widths;
    Rng rng(train_cfg.seed);
    Model model = build_model(variant, cfg, rng);
    auto [trained, history] = train(std::move(model), corpus, splits, train_cfg);
    return history.best_val_mae();
  };
  TunedConfig out;
  out.result = tune_layer_widths(space, objective);
  out.config = base;
  if (series_based)
    out.config.lstm_units = out.result.widths;
  else
    out.config.nn_hidden = out.result.widths;
  return out;
}

}  // namespace fundcast
