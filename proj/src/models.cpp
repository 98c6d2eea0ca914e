#include "fundcast/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace fundcast {

using json = nlohmann::ordered_json;

const std::array<ModelVariant, kNumVariants> kAllVariants = {
    ModelVariant::LstmCond,       ModelVariant::LstmCondPartial,
    ModelVariant::LstmReplicate,  ModelVariant::LstmConcatenate,
    ModelVariant::LstmTimeSeries, ModelVariant::NnTimeInvariant,
    ModelVariant::NnTimeInvariantNoText};

namespace {

constexpr const char* kVariantNames[kNumVariants] = {
    "lstm-cond",        "lstm-cond-partial",       "lstm-replicate",
    "lstm-concatenate", "lstm-time-series",        "nn-time-invariant",
    "nn-time-invariant-no-text"};

}  // namespace

std::string variant_name(ModelVariant v) {
  return kVariantNames[static_cast<int>(v)];
}

ModelVariant parse_variant(const std::string& name) {
  for (std::size_t i = 0; i < kNumVariants; ++i)
    if (name == kVariantNames[i]) return static_cast<ModelVariant>(i);
  std::string valid;
  for (const char* n : kVariantNames) {
    if (!valid.empty()) valid += ", ";
    valid += n;
  }
  throw UsageError("unknown model variant '" + name + "'; valid names: " + valid);
}

bool variant_uses_text(ModelVariant v) {
  switch (v) {
    case ModelVariant::LstmCond:
    case ModelVariant::LstmCondPartial:
    case ModelVariant::LstmReplicate:
    case ModelVariant::LstmConcatenate:
    case ModelVariant::NnTimeInvariant:
      return true;
    default:
      return false;
  }
}

bool variant_uses_static(ModelVariant v) {
  return v != ModelVariant::LstmTimeSeries;
}

bool variant_uses_series(ModelVariant v) {
  switch (v) {
    case ModelVariant::NnTimeInvariant:
    case ModelVariant::NnTimeInvariantNoText:
      return false;
    default:
      return true;
  }
}

ArchConfig ArchConfig::defaults_for(ModelVariant v) {
  ArchConfig c;
  c.conv = {{16, 3, 2}, {16, 3, 2}};
  switch (v) {
    case ModelVariant::LstmCond:
    case ModelVariant::LstmCondPartial:
    case ModelVariant::LstmReplicate:
    case ModelVariant::LstmConcatenate:
      c.lstm_units = {64, 32};
      c.head_hidden = {64, 32, 16};
      break;
    case ModelVariant::LstmTimeSeries:
      c.pre_dense = {64};
      c.lstm_units = {64, 32};
      c.head_hidden = {32, 16};
      break;
    case ModelVariant::NnTimeInvariant:
    case ModelVariant::NnTimeInvariantNoText:
      c.nn_hidden = {60, 130, 90};
      break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Normalizer

Normalizer Normalizer::identity() {
  Normalizer n;
  n.static_mean = Vector(kStaticDim, 0.0);
  n.static_std = Vector(kStaticDim, 1.0);
  n.series_mean = Vector(kSeriesFeatures, 0.0);
  n.series_std = Vector(kSeriesFeatures, 1.0);
  return n;
}

namespace {

void finish_stats(Vector& mean, Vector& m2, double count) {
  for (std::size_t i = 0; i < mean.size(); ++i) {
    double var = count > 0 ? m2[i] / count : 0.0;
    double sd = std::sqrt(std::max(var, 0.0));
    m2[i] = sd > 1e-12 ? sd : 1.0;
  }
}

void accumulate(Vector& mean, Vector& m2, double& count, const Vector& x) {
  // Welford, vectorized over features
  count += 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double delta = x[i] - mean[i];
    mean[i] += delta / count;
    m2[i] += delta * (x[i] - mean[i]);
  }
}

}  // namespace

Normalizer Normalizer::fit(const Corpus& corpus,
                           const std::vector<std::size_t>& train_cases) {
  if (train_cases.empty()) throw UsageError("Normalizer::fit: empty training split");
  Normalizer n = identity();
  Vector s_mean(kStaticDim, 0.0), s_m2(kStaticDim, 0.0);
  Vector d_mean(kSeriesFeatures, 0.0), d_m2(kSeriesFeatures, 0.0);
  double s_count = 0.0, d_count = 0.0;
  double y_mean = 0.0, y_m2 = 0.0, y_count = 0.0;
  for (std::size_t idx : train_cases) {
    const CaseRecord& rec = corpus[idx];
    accumulate(s_mean, s_m2, s_count, static_vector(rec.statics));
    for (int day = 1; day <= kHorizonDays; ++day)
      accumulate(d_mean, d_m2, d_count, series_day(rec, day));
    y_count += 1.0;
    const double delta = rec.total_donations - y_mean;
    y_mean += delta / y_count;
    y_m2 += delta * (rec.total_donations - y_mean);
  }
  finish_stats(s_mean, s_m2, s_count);
  finish_stats(d_mean, d_m2, d_count);
  n.static_mean = std::move(s_mean);
  n.static_std = std::move(s_m2);
  n.series_mean = std::move(d_mean);
  n.series_std = std::move(d_m2);
  n.target_mean = y_mean;
  const double y_sd = std::sqrt(std::max(y_count > 0 ? y_m2 / y_count : 0.0, 0.0));
  n.target_std = y_sd > 1e-12 ? y_sd : 1.0;
  return n;
}

Vector Normalizer::norm_static(const Vector& raw) const {
  Vector out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    out[i] = (raw[i] - static_mean[i]) / static_std[i];
  return out;
}

Vector Normalizer::norm_series(const Vector& raw) const {
  Vector out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    out[i] = (raw[i] - series_mean[i]) / series_std[i];
  return out;
}

// ---------------------------------------------------------------------------
// Construction

std::size_t Model::condition_length() const {
  std::size_t len = 0;
  if (variant_uses_text(variant) && text_encoder)
    len += encode_text_feature_size(*text_encoder, config.max_post_len, config.emb_dim);
  if (variant_uses_static(variant)) len += kStaticDim;
  return len;
}

std::size_t Model::series_input_dim() const {
  if (!variant_uses_series(variant)) return 0;
  return variant == ModelVariant::LstmCondPartial ? 1 : kSeriesFeatures;
}

namespace {

void require(bool ok, const std::string& field) {
  if (!ok) throw ConfigError("build_model: invalid config field: " + field);
}

}  // namespace

Model build_model(ModelVariant variant, const ArchConfig& config, Rng& rng) {
  Model m;
  m.variant = variant;
  m.config = config;
  m.norm = Normalizer::identity();

  const bool is_lstm = variant_uses_series(variant);
  if (variant_uses_text(variant)) {
    require(config.vocab_size >= 2, "vocab_size (need >= 2 for pad and unk)");
    require(config.emb_dim > 0, "emb_dim");
    require(config.max_post_len > 0, "max_post_len");
    require(!config.conv.empty(), "conv (text variants need at least one layer)");
    Rng r = rng.split(1);
    m.embedding = EmbeddingTable::init(config.vocab_size, config.emb_dim, r);
    m.text_encoder = ConvPoolStack::init(config.conv, config.emb_dim, r);
    try {  // validates window/pool sizes against the configured post length
      encode_text_feature_size(*m.text_encoder, config.max_post_len, config.emb_dim);
    } catch (const ShapeError& e) {
      throw ConfigError(std::string("build_model: conv layers do not fit "
                                    "max_post_len: ") + e.what());
    }
  }

  const std::size_t cond_len = m.condition_length();

  if (is_lstm) {
    require(!config.lstm_units.empty(), "lstm_units");
    for (std::size_t u : config.lstm_units) require(u > 0, "lstm_units");
    std::size_t step_dim = m.series_input_dim();
    if (variant == ModelVariant::LstmReplicate) step_dim += cond_len;
    Rng r = rng.split(2);
    if (variant == ModelVariant::LstmTimeSeries && !config.pre_dense.empty()) {
      std::vector<std::size_t> dims;
      dims.push_back(step_dim);
      dims.insert(dims.end(), config.pre_dense.begin(), config.pre_dense.end());
      m.pre_dense = DenseStack::init(dims, config.dropout_rate, false, r);
      step_dim = config.pre_dense.back();
    }
    std::size_t in_dim = step_dim;
    for (std::size_t u : config.lstm_units) {
      m.lstm.push_back(LstmParams::init(u, in_dim, r));
      in_dim = u;
    }
    if (variant == ModelVariant::LstmCond || variant == ModelVariant::LstmCondPartial) {
      require(cond_len > 0, "condition inputs (text/static) for conditioned variant");
      m.condition = ConditionParams::init(config.lstm_units.front(), cond_len, r);
    }
  }

  std::size_t head_in = 0;
  std::vector<std::size_t> hidden;
  if (is_lstm) {
    head_in = config.lstm_units.back();
    if (variant == ModelVariant::LstmConcatenate) head_in += cond_len;
    hidden = config.head_hidden;
  } else {
    require(cond_len > 0, "condition inputs for feed-forward variant");
    head_in = cond_len;
    hidden = config.nn_hidden;
  }
  std::vector<std::size_t> dims;
  dims.push_back(head_in);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  Rng r = rng.split(3);
  m.head = DenseStack::init(dims, config.dropout_rate, true, r);
  return m;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

Vector build_conditions(const Model& m, const CaseRecord& rec, RunMode mode, Rng* rng,
                        ModelCache* cache) {
  Vector text_feat;
  if (variant_uses_text(m.variant)) {
    if (rec.tokens.empty())
      throw UsageError("model forward: case " + rec.case_id +
                       " has no tokens; tokenize the corpus first");
    Matrix embedded = embed_post(*m.embedding, rec.tokens);
    if (cache) {
      text_feat = encode_text_cached(*m.text_encoder, embedded, cache->text_cache);
      cache->embedded = std::move(embedded);
    } else {
      text_feat = encode_text(*m.text_encoder, embedded);
    }
  }
  Vector statics;
  if (variant_uses_static(m.variant))
    statics = m.norm.norm_static(static_vector(rec.statics));
  Vector cond = concat_conditions(text_feat, statics);
  if (cache) {
    cache->text_feat = std::move(text_feat);
    cache->conditions = cond;
  }
  (void)mode;
  (void)rng;
  return cond;
}

}  // namespace

double model_forward_std(const Model& m, const CaseRecord& rec, int day, RunMode mode,
                         Rng* rng, ModelCache* cache) {
  const bool is_lstm = variant_uses_series(m.variant);
  if (day < 0) throw UsageError("predict: negative day");
  if (is_lstm) {
    if (day < 1)
      throw UsageError("predict: day-0 predictions are only defined for the "
                       "feed-forward baselines; LSTM variants start at day 1");
    if (static_cast<std::size_t>(day) > rec.series.cols)
      throw UsageError("predict: case " + rec.case_id + " covers " +
                       std::to_string(rec.series.cols) + " days; requested day " +
                       std::to_string(day));
  }

  Vector conditions;
  if (variant_uses_text(m.variant) || variant_uses_static(m.variant))
    conditions = build_conditions(m, rec, mode, rng, cache);

  Vector head_input;
  if (is_lstm) {
    std::vector<Vector> steps;
    steps.reserve(static_cast<std::size_t>(day));
    if (cache) cache->pre_dense_caches.clear();
    for (int d = 1; d <= day; ++d) {
      Vector x = m.norm.norm_series(series_day(rec, d));
      if (m.variant == ModelVariant::LstmCondPartial) x.resize(1);
      if (m.variant == ModelVariant::LstmReplicate) {
        x.insert(x.end(), conditions.begin(), conditions.end());
      }
      if (m.pre_dense) {
        if (cache) {
          cache->pre_dense_caches.emplace_back();
          x = dense_forward_cached(*m.pre_dense, x, mode, rng,
                                   cache->pre_dense_caches.back());
        } else {
          x = dense_forward(*m.pre_dense, x, mode, rng);
        }
      }
      steps.push_back(std::move(x));
    }
    const bool conditioned = m.condition.has_value();
    const ConditionParams* cp = conditioned ? &*m.condition : nullptr;
    const Vector* cond_ptr = conditioned ? &conditions : nullptr;
    const InitMode init = conditioned ? InitMode::Conditioned : InitMode::Zero;
    Vector final_h;
    if (cache) {
      final_h = run_sequence_cached(m.lstm, cp, cond_ptr, steps, init, cache->lstm_cache);
      cache->ran_lstm = true;
    } else {
      final_h = run_sequence(m.lstm, cp, cond_ptr, steps, init);
    }
    if (m.variant == ModelVariant::LstmConcatenate) {
      head_input = concat_conditions(final_h, conditions);
    } else {
      head_input = std::move(final_h);
    }
  } else {
    head_input = conditions;
  }

  Vector out;
  if (cache) {
    cache->head_input = head_input;
    out = dense_forward_cached(m.head, head_input, mode, rng, cache->head_cache);
  } else {
    out = dense_forward(m.head, head_input, mode, rng);
  }
  return out[0];
}

double predict_day(const Model& model, const CaseRecord& rec, int day) {
  const double z = model_forward_std(model, rec, day, RunMode::Inference, nullptr, nullptr);
  return model.norm.denorm_target(z);
}

void model_backward(const Model& m, const CaseRecord& rec, int day,
                    const ModelCache& cache, double d_out_std, Model& grads) {
  const bool is_lstm = variant_uses_series(m.variant);
  Vector d_head_out{d_out_std};
  Vector d_head_in = dense_backward(m.head, cache.head_cache, d_head_out, grads.head);

  Vector d_conditions(cache.conditions.size(), 0.0);
  if (is_lstm) {
    Vector d_final_h;
    if (m.variant == ModelVariant::LstmConcatenate) {
      const std::size_t h_len = m.config.lstm_units.back();
      d_final_h.assign(d_head_in.begin(), d_head_in.begin() + h_len);
      for (std::size_t i = h_len; i < d_head_in.size(); ++i)
        d_conditions[i - h_len] += d_head_in[i];
    } else {
      d_final_h = d_head_in;
    }

    const bool conditioned = m.condition.has_value();
    const bool need_inputs =
        m.variant == ModelVariant::LstmReplicate || m.pre_dense.has_value();
    std::vector<Vector> d_inputs;
    run_sequence_backward(m.lstm, conditioned ? &*m.condition : nullptr,
                          cache.lstm_cache, d_final_h, grads.lstm,
                          conditioned ? &*grads.condition : nullptr,
                          conditioned ? &d_conditions : nullptr,
                          need_inputs ? &d_inputs : nullptr);

    if (m.pre_dense) {
      for (std::size_t t = 0; t < d_inputs.size(); ++t) {
        Vector d_x = dense_backward(*m.pre_dense, cache.pre_dense_caches[t],
                                    d_inputs[t], *grads.pre_dense);
        (void)d_x;  // raw series input, nothing trainable upstream
      }
    } else if (m.variant == ModelVariant::LstmReplicate) {
      const std::size_t series_dim = m.series_input_dim();
      for (const Vector& d_x : d_inputs)
        for (std::size_t i = series_dim; i < d_x.size(); ++i)
          d_conditions[i - series_dim] += d_x[i];
    }
  } else {
    d_conditions = d_head_in;
  }

  if (variant_uses_text(m.variant)) {
    const std::size_t text_len = cache.text_feat.size();
    Vector d_text(d_conditions.begin(), d_conditions.begin() + text_len);
    Matrix d_embedded = encode_text_backward(*m.text_encoder, cache.text_cache, d_text,
                                             *grads.text_encoder);
    embed_post_backward(rec.tokens, d_embedded, *grads.embedding);
  }
  // static feature part of d_conditions has no trainable upstream
  (void)day;
}

// ---------------------------------------------------------------------------
// Parameter plumbing

Model zeros_like(const Model& model) {
  Model z = model;
  if (z.embedding)
    z.embedding = EmbeddingTable::zeros(z.embedding->vocab_size, z.embedding->dim);
  if (z.text_encoder) z.text_encoder = ConvPoolStack::zeros_like(*z.text_encoder);
  if (z.pre_dense) z.pre_dense = DenseStack::zeros_like(*z.pre_dense);
  for (auto& layer : z.lstm) layer = LstmParams::zeros_like(layer);
  if (z.condition) z.condition = ConditionParams::zeros_like(*z.condition);
  z.head = DenseStack::zeros_like(z.head);
  return z;
}

namespace {

template <typename ModelT, typename SpanT>
std::vector<SpanT> collect_spans(ModelT& m) {
  std::vector<SpanT> spans;
  auto add_mat = [&](auto& mat) { spans.push_back(SpanT(mat.data.data(), mat.data.size())); };
  auto add_vec = [&](auto& vec) { spans.push_back(SpanT(vec.data(), vec.size())); };
  if (m.embedding) add_mat(m.embedding->weights);
  if (m.text_encoder)
    for (auto& layer : m.text_encoder->layers) {
      add_mat(layer.weight);
      add_vec(layer.bias);
    }
  if (m.pre_dense)
    for (auto& layer : m.pre_dense->layers) {
      add_mat(layer.weight);
      add_vec(layer.bias);
    }
  for (auto& layer : m.lstm) {
    add_mat(layer.input_w);
    add_mat(layer.forget_w);
    add_mat(layer.cell_w);
    add_mat(layer.output_w);
    add_vec(layer.input_b);
    add_vec(layer.forget_b);
    add_vec(layer.cell_b);
    add_vec(layer.output_b);
  }
  if (m.condition) {
    add_mat(m.condition->weight);
    add_vec(m.condition->bias);
  }
  for (auto& layer : m.head.layers) {
    add_mat(layer.weight);
    add_vec(layer.bias);
  }
  return spans;
}

}  // namespace

std::vector<std::span<double>> param_spans(Model& model) {
  return collect_spans<Model, std::span<double>>(model);
}

std::vector<std::span<const double>> param_spans(const Model& model) {
  return collect_spans<const Model, std::span<const double>>(model);
}

std::size_t param_count(const Model& model) {
  std::size_t n = 0;
  for (const auto& s : param_spans(model)) n += s.size();
  return n;
}

Vector flatten_params(const Model& model) {
  Vector theta;
  theta.reserve(param_count(model));
  for (const auto& s : param_spans(model)) theta.insert(theta.end(), s.begin(), s.end());
  return theta;
}

void unflatten_params(Model& model, const Vector& theta) {
  std::size_t offset = 0;
  for (auto& s : param_spans(model)) {
    if (offset + s.size() > theta.size())
      throw ShapeError("unflatten_params: parameter vector too short");
    std::copy(theta.begin() + offset, theta.begin() + offset + s.size(), s.begin());
    offset += s.size();
  }
  if (offset != theta.size())
    throw ShapeError("unflatten_params: parameter vector length mismatch");
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointFormat = "fundcast-checkpoint";
constexpr int kCheckpointVersion = 1;

json config_to_json(const ArchConfig& c) {
  json j;
  j["vocab_size"] = c.vocab_size;
  j["emb_dim"] = c.emb_dim;
  j["max_post_len"] = c.max_post_len;
  json conv = json::array();
  for (const auto& l : c.conv)
    conv.push_back({{"filters", l.filters}, {"window", l.window}, {"pool", l.pool}});
  j["conv"] = std::move(conv);
  j["lstm_units"] = c.lstm_units;
  j["head_hidden"] = c.head_hidden;
  j["pre_dense"] = c.pre_dense;
  j["nn_hidden"] = c.nn_hidden;
  j["dropout_rate"] = c.dropout_rate;
  return j;
}

ArchConfig config_from_json(const json& j) {
  ArchConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.emb_dim = j.at("emb_dim").get<std::size_t>();
  c.max_post_len = j.at("max_post_len").get<std::size_t>();
  for (const auto& l : j.at("conv"))
    c.conv.push_back({l.at("filters").get<std::size_t>(), l.at("window").get<std::size_t>(),
                      l.at("pool").get<std::size_t>()});
  c.lstm_units = j.at("lstm_units").get<std::vector<std::size_t>>();
  c.head_hidden = j.at("head_hidden").get<std::vector<std::size_t>>();
  c.pre_dense = j.at("pre_dense").get<std::vector<std::size_t>>();
  c.nn_hidden = j.at("nn_hidden").get<std::vector<std::size_t>>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  return c;
}

json normalizer_to_json(const Normalizer& n) {
  json j;
  j["static_mean"] = n.static_mean;
  j["static_std"] = n.static_std;
  j["series_mean"] = n.series_mean;
  j["series_std"] = n.series_std;
  j["target_mean"] = n.target_mean;
  j["target_std"] = n.target_std;
  return j;
}

Normalizer normalizer_from_json(const json& j) {
  Normalizer n;
  n.static_mean = j.at("static_mean").get<Vector>();
  n.static_std = j.at("static_std").get<Vector>();
  n.series_mean = j.at("series_mean").get<Vector>();
  n.series_std = j.at("series_std").get<Vector>();
  n.target_mean = j.at("target_mean").get<double>();
  n.target_std = j.at("target_std").get<double>();
  return n;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["variant"] = variant_name(model.variant);
  j["config"] = config_to_json(model.config);
  j["normalizer"] = normalizer_to_json(model.norm);
  j["vocab"] = model.vocab_words;
  j["split_seed"] = model.split_seed;
  json params = json::array();
  for (const auto& s : param_spans(model)) params.push_back(Vector(s.begin(), s.end()));
  j["params"] = std::move(params);
  const std::vector<std::uint8_t> bytes = json::to_msgpack(j);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::from_msgpack(bytes);
  } catch (const std::exception& e) {
    throw ParseError("load_checkpoint: " + path + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat)
    throw ParseError("load_checkpoint: " + path + " is not a fundcast checkpoint");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw ParseError("load_checkpoint: unsupported version in " + path);
  const ModelVariant variant = parse_variant(j.at("variant").get<std::string>());
  const ArchConfig config = config_from_json(j.at("config"));
  Rng rng(0);
  Model model = build_model(variant, config, rng);
  model.norm = normalizer_from_json(j.at("normalizer"));
  model.vocab_words = j.at("vocab").get<std::vector<std::string>>();
  model.split_seed = j.at("split_seed").get<std::uint64_t>();
  const json& params = j.at("params");
  auto spans = param_spans(model);
  if (params.size() != spans.size())
    throw ParseError("load_checkpoint: parameter array count mismatch in " + path);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const Vector arr = params.at(i).get<Vector>();
    if (arr.size() != spans[i].size())
      throw ParseError("load_checkpoint: parameter array size mismatch in " + path);
    std::copy(arr.begin(), arr.end(), spans[i].begin());
  }
  return model;
}

}  // namespace fundcast
