#pragma once

// Shared fixtures for the test suites: toy corpora small enough for
// finite-difference gradient checking and a reusable whole-model checker.

#include <cmath>
#include <vector>

#include "fundcast/models.hpp"
#include "fundcast/training.hpp"

namespace fundcast::test {

/// Tiny architecture: vocab 12, embedding 3, one 2-filter conv, LSTM 3/2.
/// Small enough that central differences over every parameter stay cheap.
inline ArchConfig toy_config() {
  ArchConfig c;
  c.vocab_size = 12;
  c.emb_dim = 3;
  c.max_post_len = 6;
  c.conv = {{2, 2, 3}};
  c.lstm_units = {3, 2};
  c.head_hidden = {3};
  c.pre_dense = {4};
  c.nn_hidden = {4, 3};
  c.dropout_rate = 0.0;
  return c;
}

inline CaseRecord toy_case(std::uint64_t seed, int days = 5) {
  Rng rng(seed);
  CaseRecord rec;
  rec.case_id = "toy-" + std::to_string(seed);
  rec.statics.age = 20.0 + static_cast<double>(rng.uniform_int(50));
  rec.statics.is_female = rng.bernoulli(0.5);
  rec.statics.has_basic_insurance = rng.bernoulli(0.5);
  rec.statics.has_commercial_insurance = rng.bernoulli(0.2);
  rec.statics.target_amount = 5000.0 + 1000.0 * static_cast<double>(rng.uniform_int(20));
  rec.statics.content_length = 100 + static_cast<int>(rng.uniform_int(300));
  rec.statics.title_length = 8 + static_cast<int>(rng.uniform_int(12));
  rec.statics.region_id = static_cast<int>(rng.uniform_int(5));
  rec.statics.launch_month = 1 + static_cast<int>(rng.uniform_int(12));
  rec.statics.launch_day = 1 + static_cast<int>(rng.uniform_int(28));
  rec.statics.launch_weekday = static_cast<int>(rng.uniform_int(7));
  rec.statics.gender_disclosed = rng.bernoulli(0.9);
  rec.series = Matrix(kSeriesFeatures, static_cast<std::size_t>(days));
  double total = 0.0;
  for (int t = 0; t < days; ++t) {
    const double amt = std::round(rng.uniform(0.0, 400.0) * 100.0) / 100.0;
    rec.series.at(0, static_cast<std::size_t>(t)) = amt;
    total += amt;
    for (std::size_t f = 1; f < kSeriesFeatures; ++f)
      rec.series.at(f, static_cast<std::size_t>(t)) =
          static_cast<double>(rng.uniform_int(30));
  }
  rec.total_donations = total;
  rec.tokens.resize(6);
  for (std::size_t p = 0; p < 5; ++p)
    rec.tokens[p] = 2 + static_cast<int>(rng.uniform_int(10));
  rec.tokens[5] = kPadToken;  // keep a pad position in every toy post
  return rec;
}

inline Corpus toy_corpus(std::size_t n, std::uint64_t seed = 7, int days = 5) {
  Corpus corpus;
  for (std::size_t i = 0; i < n; ++i) corpus.push_back(toy_case(seed + i, days));
  return corpus;
}

struct GradCheck {
  double max_err = 0.0;
  std::size_t worst_index = 0;
  std::size_t n_params = 0;
};

/// Compares analytic gradients of the standardized batch loss against central
/// finite differences over every parameter. Dropout masks are replayed from
/// mask_seed so the finite-difference target is the same deterministic
/// function the analytic pass differentiates.
inline GradCheck check_model_gradients(const Model& model, const Corpus& corpus,
                                       const std::vector<Instance>& batch,
                                       double h = 1e-5,
                                       std::uint64_t mask_seed = 99) {
  Model grads = zeros_like(model);
  {
    Rng mask_rng(mask_seed);
    batch_loss_and_grads(model, corpus, batch, mask_rng, grads);
  }
  const Vector analytic = flatten_params(grads);

  Model probe = model;
  auto loss_at = [&](const Vector& theta) {
    unflatten_params(probe, theta);
    Rng mask_rng(mask_seed);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const Instance& inst : batch) {
      const double out = model_forward_std(probe, corpus[inst.case_index], inst.day,
                                           RunMode::Train, &mask_rng, nullptr);
      const double r = out - probe.norm.norm_target(inst.label);
      loss += r * r * inv_n;
    }
    return loss;
  };
  const Vector numeric = finite_diff_gradient(loss_at, flatten_params(model), h);

  GradCheck result;
  result.n_params = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double err = gradient_rel_error(analytic[i], numeric[i]);
    if (err > result.max_err) {
      result.max_err = err;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace fundcast::test
