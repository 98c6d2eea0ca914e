#include "fundcast/layers.hpp"

#include <cmath>
#include <string>

namespace fundcast {

void init_uniform_fan_in(Matrix& w, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  for (double& v : w.data) v = rng.uniform(-bound, bound);
}

// ---------------------------------------------------------------------------
// Embedding

EmbeddingTable EmbeddingTable::init(std::size_t vocab_size, std::size_t dim,
                                    Rng& rng) {
  EmbeddingTable t;
  t.vocab_size = vocab_size;
  t.dim = dim;
  t.weights = Matrix(vocab_size, dim);
  init_uniform_fan_in(t.weights, dim, rng);
  for (std::size_t j = 0; j < dim; ++j) t.weights.at(kPadToken, j) = 0.0;
  return t;
}

EmbeddingTable EmbeddingTable::zeros(std::size_t vocab_size, std::size_t dim) {
  EmbeddingTable t;
  t.vocab_size = vocab_size;
  t.dim = dim;
  t.weights = Matrix(vocab_size, dim);
  return t;
}

Matrix embed_post(const EmbeddingTable& table, const std::vector<int>& tokens) {
  Matrix out(tokens.size(), table.dim);
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    const int id = tokens[p];
    if (id < 0 || static_cast<std::size_t>(id) >= table.vocab_size) {
      throw EncodingError("embed_post: token id " + std::to_string(id) +
                          " at position " + std::to_string(p) +
                          " outside vocabulary of size " +
                          std::to_string(table.vocab_size));
    }
    if (id == kPadToken) continue;  // pad row is frozen at zero by contract
    for (std::size_t j = 0; j < table.dim; ++j)
      out.at(p, j) = table.weights.at(static_cast<std::size_t>(id), j);
  }
  return out;
}

void embed_post_backward(const std::vector<int>& tokens, const Matrix& d_embedded,
                         EmbeddingTable& grads) {
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    const int id = tokens[p];
    if (id == kPadToken) continue;  // frozen pad row
    for (std::size_t j = 0; j < grads.dim; ++j)
      grads.weights.at(static_cast<std::size_t>(id), j) += d_embedded.at(p, j);
  }
}

// ---------------------------------------------------------------------------
// Conv / max-pool

ConvPoolStack ConvPoolStack::init(const std::vector<ConvPoolLayerSpec>& specs,
                                  std::size_t in_channels, Rng& rng) {
  ConvPoolStack stack;
  std::size_t channels = in_channels;
  for (const auto& spec : specs) {
    if (spec.filters == 0 || spec.window == 0 || spec.pool == 0)
      throw ConfigError("ConvPoolStack: filters, window and pool must be positive");
    ConvPoolLayer layer;
    layer.filters = spec.filters;
    layer.window = spec.window;
    layer.pool = spec.pool;
    layer.weight = Matrix(spec.filters, spec.window * channels);
    init_uniform_fan_in(layer.weight, spec.window * channels, rng);
    layer.bias = Vector(spec.filters, 0.0);
    stack.layers.push_back(std::move(layer));
    channels = spec.filters;
  }
  return stack;
}

ConvPoolStack ConvPoolStack::zeros_like(const ConvPoolStack& other) {
  ConvPoolStack stack = other;
  for (auto& layer : stack.layers) {
    std::fill(layer.weight.data.begin(), layer.weight.data.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  return stack;
}

namespace {

std::size_t pooled_len(std::size_t conv_len, std::size_t pool) {
  return (conv_len + pool - 1) / pool;  // trailing partial window kept
}

}  // namespace

std::size_t encode_text_length(const ConvPoolStack& stack, std::size_t in_len) {
  std::size_t len = in_len;
  for (std::size_t li = 0; li < stack.layers.size(); ++li) {
    const auto& layer = stack.layers[li];
    if (len < layer.window) {
      throw ShapeError("encode_text: input of length " + std::to_string(len) +
                       " is shorter than window " + std::to_string(layer.window) +
                       " at layer " + std::to_string(li) + "; pad the input");
    }
    len = pooled_len(len - layer.window + 1, layer.pool);
  }
  return len;
}

std::size_t encode_text_feature_size(const ConvPoolStack& stack, std::size_t in_len,
                                     std::size_t in_channels) {
  return encode_text_length(stack, in_len) * stack.out_channels(in_channels);
}

namespace {

void conv_pool_forward(const ConvPoolLayer& layer, const Matrix& input,
                       ConvLayerCache* cache, Matrix& pooled_out) {
  const std::size_t channels = input.cols;
  if (layer.weight.cols != layer.window * channels) {
    throw ShapeError("encode_text: layer expects " +
                     std::to_string(layer.weight.cols / layer.window) +
                     " channels, got " + std::to_string(channels));
  }
  if (input.rows < layer.window) {
    throw ShapeError("encode_text: input of length " + std::to_string(input.rows) +
                     " is shorter than window " + std::to_string(layer.window) +
                     "; pad the input");
  }
  const std::size_t conv_len = input.rows - layer.window + 1;
  Matrix pre(conv_len, layer.filters);
  for (std::size_t t = 0; t < conv_len; ++t) {
    for (std::size_t f = 0; f < layer.filters; ++f) {
      const double* w = layer.weight.data.data() + f * layer.weight.cols;
      double acc = layer.bias[f];
      for (std::size_t j = 0; j < layer.window; ++j) {
        const double* in_row = input.data.data() + (t + j) * channels;
        for (std::size_t c = 0; c < channels; ++c) acc += w[j * channels + c] * in_row[c];
      }
      pre.at(t, f) = acc;
    }
  }
  const std::size_t out_len = pooled_len(conv_len, layer.pool);
  pooled_out = Matrix(out_len, layer.filters);
  std::vector<std::size_t> argmax(out_len * layer.filters, 0);
  for (std::size_t s = 0; s < out_len; ++s) {
    const std::size_t begin = s * layer.pool;
    const std::size_t end = std::min(begin + layer.pool, conv_len);
    for (std::size_t f = 0; f < layer.filters; ++f) {
      double best = -1.0;  // ReLU outputs are >= 0
      std::size_t best_t = begin;
      for (std::size_t t = begin; t < end; ++t) {
        const double a = pre.at(t, f) > 0.0 ? pre.at(t, f) : 0.0;
        if (a > best) {
          best = a;
          best_t = t;
        }
      }
      pooled_out.at(s, f) = best;
      argmax[s * layer.filters + f] = best_t;
    }
  }
  if (cache) {
    cache->input = input;
    cache->pre_act = std::move(pre);
    cache->argmax = std::move(argmax);
    cache->pooled = pooled_out;
  }
}

Vector flatten(const Matrix& m) {
  return m.data;  // row-major flatten
}

}  // namespace

Vector encode_text(const ConvPoolStack& stack, const Matrix& embedded) {
  Matrix current = embedded;
  for (const auto& layer : stack.layers) {
    Matrix next;
    conv_pool_forward(layer, current, nullptr, next);
    current = std::move(next);
  }
  return flatten(current);
}

Vector encode_text_cached(const ConvPoolStack& stack, const Matrix& embedded,
                          TextEncodeCache& cache) {
  cache.layers.assign(stack.layers.size(), {});
  Matrix current = embedded;
  for (std::size_t li = 0; li < stack.layers.size(); ++li) {
    Matrix next;
    conv_pool_forward(stack.layers[li], current, &cache.layers[li], next);
    current = std::move(next);
  }
  return flatten(current);
}

Matrix encode_text_backward(const ConvPoolStack& stack, const TextEncodeCache& cache,
                            const Vector& d_out, ConvPoolStack& grads) {
  // d_pooled of the last layer is the unflattened d_out
  const auto& last = cache.layers.back();
  if (d_out.size() != last.pooled.rows * last.pooled.cols)
    throw ShapeError("encode_text_backward: gradient length mismatch");
  Matrix d_pooled(last.pooled.rows, last.pooled.cols);
  d_pooled.data = d_out;

  for (std::size_t li = stack.layers.size(); li-- > 0;) {
    const auto& layer = stack.layers[li];
    const auto& lc = cache.layers[li];
    auto& lg = grads.layers[li];
    const std::size_t channels = lc.input.cols;
    const std::size_t conv_len = lc.pre_act.rows;
    // route pooled gradients to argmax positions, through ReLU
    Matrix d_pre(conv_len, layer.filters);
    for (std::size_t s = 0; s < d_pooled.rows; ++s) {
      for (std::size_t f = 0; f < layer.filters; ++f) {
        const double g = d_pooled.at(s, f);
        if (g == 0.0) continue;
        const std::size_t t = lc.argmax[s * layer.filters + f];
        if (lc.pre_act.at(t, f) > 0.0) d_pre.at(t, f) += g;
      }
    }
    Matrix d_input(lc.input.rows, channels);
    for (std::size_t t = 0; t < conv_len; ++t) {
      for (std::size_t f = 0; f < layer.filters; ++f) {
        const double g = d_pre.at(t, f);
        if (g == 0.0) continue;
        lg.bias[f] += g;
        double* wg = lg.weight.data.data() + f * lg.weight.cols;
        const double* w = layer.weight.data.data() + f * layer.weight.cols;
        for (std::size_t j = 0; j < layer.window; ++j) {
          const double* in_row = lc.input.data.data() + (t + j) * channels;
          double* din_row = d_input.data.data() + (t + j) * channels;
          for (std::size_t c = 0; c < channels; ++c) {
            wg[j * channels + c] += g * in_row[c];
            din_row[c] += g * w[j * channels + c];
          }
        }
      }
    }
    d_pooled = std::move(d_input);
  }
  return d_pooled;
}

// ---------------------------------------------------------------------------
// Conditions

Vector concat_conditions(const Vector& text_features, const Vector& static_features) {
  Vector out;
  out.reserve(text_features.size() + static_features.size());
  out.insert(out.end(), text_features.begin(), text_features.end());
  out.insert(out.end(), static_features.begin(), static_features.end());
  return out;
}

// ---------------------------------------------------------------------------
// Dense stacks

DenseStack DenseStack::init(const std::vector<std::size_t>& dims, double dropout_rate,
                            bool linear_output, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("DenseStack: need at least in and out dims");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("DenseStack: dropout rate must be in [0,1)");
  DenseStack stack;
  stack.dropout_rate = dropout_rate;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer layer;
    layer.weight = Matrix(dims[i + 1], dims[i]);
    init_uniform_fan_in(layer.weight, dims[i], rng);
    layer.bias = Vector(dims[i + 1], 0.0);
    const bool is_last = i + 2 == dims.size();
    layer.activation =
        (is_last && linear_output) ? Activation::Identity : Activation::Relu;
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

DenseStack DenseStack::zeros_like(const DenseStack& other) {
  DenseStack stack = other;
  for (auto& layer : stack.layers) {
    std::fill(layer.weight.data.begin(), layer.weight.data.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  return stack;
}

namespace {

Vector draw_dropout_mask(std::size_t n, double rate, Rng& rng) {
  Vector mask(n);
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < n; ++i)
    mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

}  // namespace

Vector dense_forward_cached(const DenseStack& stack, const Vector& input,
                            RunMode mode, Rng* rng, DenseCache& cache) {
  cache.layers.assign(stack.layers.size(), {});
  Vector current = input;
  const bool drop = mode == RunMode::Train && stack.dropout_rate > 0.0;
  if (drop && rng == nullptr)
    throw UsageError("dense_forward: train mode with dropout requires an rng");
  for (std::size_t li = 0; li < stack.layers.size(); ++li) {
    const auto& layer = stack.layers[li];
    if (layer.weight.cols != current.size()) {
      throw ShapeError("dense_forward: layer " + std::to_string(li) + " expects " +
                       std::to_string(layer.weight.cols) + " inputs, got " +
                       std::to_string(current.size()));
    }
    auto& lc = cache.layers[li];
    lc.input = current;
    if (drop) {
      lc.dropout_mask = draw_dropout_mask(current.size(), stack.dropout_rate, *rng);
      for (std::size_t i = 0; i < current.size(); ++i) current[i] *= lc.dropout_mask[i];
    }
    Vector pre = matvec(layer.weight, current);
    add_to(pre, layer.bias);
    current = apply_activation(layer.activation, pre);
    lc.output = current;
  }
  return current;
}

Vector dense_forward(const DenseStack& stack, const Vector& input, RunMode mode,
                     Rng* rng) {
  DenseCache cache;
  return dense_forward_cached(stack, input, mode, rng, cache);
}

Vector dense_backward(const DenseStack& stack, const DenseCache& cache,
                      const Vector& d_out, DenseStack& grads) {
  Vector d_current = d_out;
  for (std::size_t li = stack.layers.size(); li-- > 0;) {
    const auto& layer = stack.layers[li];
    const auto& lc = cache.layers[li];
    auto& lg = grads.layers[li];
    Vector d_pre(d_current.size());
    for (std::size_t i = 0; i < d_current.size(); ++i)
      d_pre[i] = d_current[i] *
                 activation_grad_from_output(layer.activation, lc.output[i]);
    Vector dropped_input = lc.input;
    if (!lc.dropout_mask.empty())
      for (std::size_t i = 0; i < dropped_input.size(); ++i)
        dropped_input[i] *= lc.dropout_mask[i];
    add_outer(lg.weight, d_pre, dropped_input);
    add_to(lg.bias, d_pre);
    Vector d_input = matvec_transposed(layer.weight, d_pre);
    if (!lc.dropout_mask.empty())
      for (std::size_t i = 0; i < d_input.size(); ++i) d_input[i] *= lc.dropout_mask[i];
    d_current = std::move(d_input);
  }
  return d_current;
}

}  // namespace fundcast
