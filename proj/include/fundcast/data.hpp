#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "fundcast/numcore.hpp"

namespace fundcast {

constexpr std::size_t kSeriesFeatures = 8;
constexpr int kHorizonDays = 42;      // observation window: six weeks
constexpr int kPredictionDays = 41;   // day 42 outcome is fully known

/// Daily feature order, fixed everywhere (files, matrices, clustering).
extern const std::array<const char*, kSeriesFeatures> kSeriesFeatureNames;

struct StaticFeatures {
  double age = 0.0;
  bool is_female = false;
  bool has_basic_insurance = false;
  bool has_commercial_insurance = false;
  double target_amount = 0.0;
  int content_length = 0;
  int title_length = 0;
  int region_id = 0;
  int launch_month = 1;
  int launch_day = 1;
  int launch_weekday = 0;
  bool gender_disclosed = false;
};

/// One crowdfunding case. `series` is kSeriesFeatures x T with T <= 42 days;
/// row 0 is the daily donation amount and must sum to total_donations within
/// 0.5 RMB.
struct CaseRecord {
  std::string case_id;
  StaticFeatures statics;
  std::string post_text;
  std::vector<int> tokens;  // filled by tokenize_corpus, not serialized
  Matrix series;
  double total_donations = 0.0;
};

using Corpus = std::vector<CaseRecord>;

/// One (case, day) training example; the label is the case's final total.
struct Instance {
  std::size_t case_index = 0;
  int day = 0;  // 1..41
  double label = 0.0;
};

struct Dataset {
  std::vector<std::size_t> train, val, test;
};

/// Returns an error message if the record violates schema invariants, empty
/// string otherwise.
std::string validate_case(const CaseRecord& rec);

/// Line-delimited records, one JSON object per line. Malformed lines raise
/// ParseError, invariant breaches ValidationError; both name the line number.
Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);

// ---------------------------------------------------------------------------
// Tokenization

struct Vocab {
  std::vector<std::string> words;  // ids 2.., after pad=0 and unk=1
  std::unordered_map<std::string, int> index;

  /// Most frequent whitespace tokens across the given cases (the training
  /// split only, to avoid leakage), capped at max_size words.
  static Vocab build(const Corpus& corpus, const std::vector<std::size_t>& case_indices,
                     std::size_t max_size);
  static Vocab from_words(std::vector<std::string> words);

  int id_of(const std::string& word) const;
};

/// Whitespace-split encoding, padded or truncated to exactly max_len ids.
std::vector<int> tokenize(const std::string& text, const Vocab& vocab,
                          std::size_t max_len);
void tokenize_corpus(Corpus& corpus, const Vocab& vocab, std::size_t max_len);

// ---------------------------------------------------------------------------
// Instances and splits

/// Exactly kPredictionDays instances per case, days 1..41.
std::vector<Instance> expand_instances(const Corpus& corpus);

/// Case-level disjoint partition with a seeded shuffle; all daily instances
/// of a case land in one split.
Dataset split_cases(const Corpus& corpus, const std::array<double, 3>& ratios,
                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Feature access

/// Raw static feature vector, fixed 12-dim order (see implementation).
Vector static_vector(const StaticFeatures& s);
constexpr std::size_t kStaticDim = 12;

/// Raw 8 daily values for a 1-based day; zero vector past the recorded span.
Vector series_day(const CaseRecord& rec, int day);

/// Sum of a series feature over days 1..day (clamped to the recorded span).
double series_cumulative(const CaseRecord& rec, int day, std::size_t feature = 0);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticCorpus {
  Corpus cases;
  std::vector<int> planted_cluster;  // 0..3, parallel to cases
};

extern const std::array<double, 4> kDefaultClusterMix;

/// Four planted case archetypes (low interest / active repliers / social
/// attention attractors / young & female) with exponentially decaying daily
/// donations, over-dispersed count features, archetype-dependent statics and
/// archetype-tilted post text. Pure function of (n_cases, seed, mix).
SyntheticCorpus generate_synthetic(std::size_t n_cases, std::uint64_t seed,
                                   const std::array<double, 4>& mix = kDefaultClusterMix);

}  // namespace fundcast
