#pragma once

#include <cstddef>
#include <vector>

#include "fundcast/numcore.hpp"

namespace fundcast {

// ---------------------------------------------------------------------------
// Word embedding

/// Learned embedding table. Row 0 is the padding token and stays all-zeros:
/// initialization zeroes it and backward passes never write a gradient there.
struct EmbeddingTable {
  std::size_t vocab_size = 0;
  std::size_t dim = 0;
  Matrix weights;  // vocab_size x dim

  static EmbeddingTable init(std::size_t vocab_size, std::size_t dim, Rng& rng);
  static EmbeddingTable zeros(std::size_t vocab_size, std::size_t dim);
};

constexpr int kPadToken = 0;
constexpr int kUnkToken = 1;

/// One row per token; padding tokens map to zero rows.
Matrix embed_post(const EmbeddingTable& table, const std::vector<int>& tokens);

/// Accumulates d_embedded back into per-row gradients. The pad row is frozen:
/// its gradient is forced to zero.
void embed_post_backward(const std::vector<int>& tokens, const Matrix& d_embedded,
                         EmbeddingTable& grads);

// ---------------------------------------------------------------------------
// Conv / max-pool text feature stack

struct ConvPoolLayer {
  std::size_t filters = 0;
  std::size_t window = 0;
  std::size_t pool = 0;
  Matrix weight;  // filters x (window * in_channels)
  Vector bias;    // filters
};

struct ConvPoolLayerSpec {
  std::size_t filters = 0;
  std::size_t window = 0;
  std::size_t pool = 0;
};

/// Valid convolutions over the token axis, ReLU, then max pooling with a kept
/// trailing partial window. Output length depends only on configuration and
/// input length.
struct ConvPoolStack {
  std::vector<ConvPoolLayer> layers;

  static ConvPoolStack init(const std::vector<ConvPoolLayerSpec>& specs,
                            std::size_t in_channels, Rng& rng);
  static ConvPoolStack zeros_like(const ConvPoolStack& other);

  std::size_t out_channels(std::size_t in_channels) const {
    return layers.empty() ? in_channels : layers.back().filters;
  }
};

/// Output length after all layers for a given input length; throws ShapeError
/// if some layer's window exceeds its input (caller should pad).
std::size_t encode_text_length(const ConvPoolStack& stack, std::size_t in_len);
/// Flattened feature length (rows * channels after the last pool).
std::size_t encode_text_feature_size(const ConvPoolStack& stack, std::size_t in_len,
                                     std::size_t in_channels);

struct ConvLayerCache {
  Matrix input;
  Matrix pre_act;                 // conv output before ReLU
  std::vector<std::size_t> argmax;  // flat (pooled_row, filter) -> pre_act row index
  Matrix pooled;
};

struct TextEncodeCache {
  std::vector<ConvLayerCache> layers;
};

Vector encode_text(const ConvPoolStack& stack, const Matrix& embedded);
Vector encode_text_cached(const ConvPoolStack& stack, const Matrix& embedded,
                          TextEncodeCache& cache);
/// Returns d_embedded; accumulates filter/bias gradients into `grads`.
Matrix encode_text_backward(const ConvPoolStack& stack, const TextEncodeCache& cache,
                            const Vector& d_out, ConvPoolStack& grads);

// ---------------------------------------------------------------------------
// Condition vector

/// [text features, static features], text first.
Vector concat_conditions(const Vector& text_features, const Vector& static_features);

// ---------------------------------------------------------------------------
// Dense stacks with dropout

struct DenseLayer {
  Matrix weight;
  Vector bias;
  Activation activation = Activation::Relu;
};

/// Sequential dense layers; dropout (inverted convention: mask and rescale by
/// 1/(1-rate) at train time, identity at inference) is applied to each
/// layer's input.
struct DenseStack {
  std::vector<DenseLayer> layers;
  double dropout_rate = 0.0;

  /// dims = {in, h1, ..., out}; all layers ReLU except an optional final
  /// identity layer when linear_output is set.
  static DenseStack init(const std::vector<std::size_t>& dims, double dropout_rate,
                         bool linear_output, Rng& rng);
  static DenseStack zeros_like(const DenseStack& other);

  std::size_t in_size() const { return layers.front().weight.cols; }
  std::size_t out_size() const { return layers.back().weight.rows; }
};

enum class RunMode { Train, Inference };

struct DenseLayerCache {
  Vector input;         // layer input before dropout
  Vector dropout_mask;  // per-entry multiplier (1 or 1/(1-rate)); empty => identity
  Vector output;        // post-activation
};

struct DenseCache {
  std::vector<DenseLayerCache> layers;
};

/// rng is consumed only in Train mode with dropout_rate > 0.
Vector dense_forward(const DenseStack& stack, const Vector& input, RunMode mode,
                     Rng* rng);
Vector dense_forward_cached(const DenseStack& stack, const Vector& input,
                            RunMode mode, Rng* rng, DenseCache& cache);
/// Returns d_input; accumulates weight/bias gradients into `grads`.
Vector dense_backward(const DenseStack& stack, const DenseCache& cache,
                      const Vector& d_out, DenseStack& grads);

/// Uniform +-1/sqrt(fan_in) initialization used across all learned modules.
void init_uniform_fan_in(Matrix& w, std::size_t fan_in, Rng& rng);

}  // namespace fundcast
