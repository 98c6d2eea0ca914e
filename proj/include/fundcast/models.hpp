#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fundcast/data.hpp"
#include "fundcast/layers.hpp"
#include "fundcast/recurrent.hpp"

namespace fundcast {

/// The seven architectures of the model zoo. Input requirements per variant:
/// conditioned LSTMs read everything, the partial variant drops all daily
/// features except the donation amount, the time-series variant reads no
/// static or text input, and the feed-forward baselines read no daily input.
enum class ModelVariant {
  LstmCond,
  LstmCondPartial,
  LstmReplicate,
  LstmConcatenate,
  LstmTimeSeries,
  NnTimeInvariant,
  NnTimeInvariantNoText,
};

constexpr std::size_t kNumVariants = 7;
extern const std::array<ModelVariant, kNumVariants> kAllVariants;

std::string variant_name(ModelVariant v);
/// Accepts the CLI spellings (lstm-cond, lstm-cond-partial, lstm-replicate,
/// lstm-concatenate, lstm-time-series, nn-time-invariant,
/// nn-time-invariant-no-text); throws UsageError listing valid names.
ModelVariant parse_variant(const std::string& name);

bool variant_uses_text(ModelVariant v);
bool variant_uses_static(ModelVariant v);
bool variant_uses_series(ModelVariant v);

struct ArchConfig {
  std::size_t vocab_size = 8192;
  std::size_t emb_dim = 32;
  std::size_t max_post_len = 64;
  std::vector<ConvPoolLayerSpec> conv;   // text feature stack
  std::vector<std::size_t> lstm_units;   // per-layer hidden sizes
  std::vector<std::size_t> head_hidden;  // hidden widths of the output head
  std::vector<std::size_t> pre_dense;    // per-step dense widths (time-series model)
  std::vector<std::size_t> nn_hidden;    // hidden widths of the NN baselines
  double dropout_rate = 0.1;

  /// Tuned shapes: conditioned LSTMs use 64/32 units with a 3-layer head;
  /// the time-series model is dense-64 into LSTM 64/32 into dense 32/16; the
  /// NN baselines use 60/130/90.
  static ArchConfig defaults_for(ModelVariant v);
};

/// Per-feature z-scoring statistics fitted on the training split. The target
/// is standardized for optimization only; predictions are always mapped back
/// to raw RMB.
struct Normalizer {
  Vector static_mean, static_std;
  Vector series_mean, series_std;
  double target_mean = 0.0;
  double target_std = 1.0;

  static Normalizer identity();
  static Normalizer fit(const Corpus& corpus, const std::vector<std::size_t>& train_cases);

  Vector norm_static(const Vector& raw) const;
  Vector norm_series(const Vector& raw) const;
  double norm_target(double y) const { return (y - target_mean) / target_std; }
  double denorm_target(double z) const { return target_mean + target_std * z; }
};

struct Model {
  ModelVariant variant = ModelVariant::LstmCond;
  ArchConfig config;
  Normalizer norm;
  std::vector<std::string> vocab_words;  // tokenizer words (ids 2..)
  std::uint64_t split_seed = 0;          // split used when the model was trained

  std::optional<EmbeddingTable> embedding;
  std::optional<ConvPoolStack> text_encoder;
  std::optional<DenseStack> pre_dense;
  std::vector<LstmParams> lstm;
  std::optional<ConditionParams> condition;
  DenseStack head;

  std::size_t condition_length() const;
  std::size_t series_input_dim() const;
};

Model build_model(ModelVariant variant, const ArchConfig& config, Rng& rng);

/// Predicted total donations in RMB for the given day. Day 0 is valid only
/// for the feed-forward baselines; LSTM variants need the series to cover
/// days 1..d.
double predict_day(const Model& model, const CaseRecord& rec, int day);

// --- training-path API -----------------------------------------------------

struct ModelCache {
  Matrix embedded;
  TextEncodeCache text_cache;
  Vector text_feat;
  Vector conditions;
  std::vector<DenseCache> pre_dense_caches;
  LstmRunCache lstm_cache;
  bool ran_lstm = false;
  Vector head_input;
  DenseCache head_cache;
};

/// Standardized-output forward pass. rng is consumed only in Train mode with
/// dropout enabled; cache may be null for inference-only calls.
double model_forward_std(const Model& model, const CaseRecord& rec, int day,
                         RunMode mode, Rng* rng, ModelCache* cache);

/// Accumulates parameter gradients for one instance into `grads` (a
/// zeros_like clone of the model).
void model_backward(const Model& model, const CaseRecord& rec, int day,
                    const ModelCache& cache, double d_out_std, Model& grads);

Model zeros_like(const Model& model);

/// Every trainable array in a fixed order; grads and Adam state share the
/// layout because they are zeros_like clones.
std::vector<std::span<double>> param_spans(Model& model);
std::vector<std::span<const double>> param_spans(const Model& model);
std::size_t param_count(const Model& model);

Vector flatten_params(const Model& model);
void unflatten_params(Model& model, const Vector& theta);

// --- checkpointing -----------------------------------------------------------

/// Self-describing versioned binary container (MessagePack document holding
/// variant, config, normalizer stats, vocabulary, split seed and all
/// parameter arrays). Round-trips byte-exactly.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace fundcast
