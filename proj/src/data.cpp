#include "fundcast/data.hpp"

#include "fundcast/layers.hpp"  // pad/unk token ids

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace fundcast {

using json = nlohmann::ordered_json;

const std::array<const char*, kSeriesFeatures> kSeriesFeatureNames = {
    "donate_amt",        "donate_user_num",    "reply_num",
    "verification_user_num", "share_wechat_msg", "share_wechat_moment",
    "share_cnt",         "total_view"};

std::string validate_case(const CaseRecord& rec) {
  if (rec.case_id.empty()) return "empty case_id";
  if (rec.statics.age < 0.0 || rec.statics.age > 120.0)
    return "age " + std::to_string(rec.statics.age) + " outside [0,120]";
  if (rec.statics.target_amount <= 0.0) return "target_amount must be positive";
  if (rec.statics.content_length < 0 || rec.statics.title_length < 0)
    return "text lengths must be non-negative";
  if (rec.series.rows != kSeriesFeatures)
    return "series must have " + std::to_string(kSeriesFeatures) + " rows, got " +
           std::to_string(rec.series.rows);
  if (rec.series.cols == 0 || rec.series.cols > kHorizonDays)
    return "series length " + std::to_string(rec.series.cols) + " outside [1," +
           std::to_string(kHorizonDays) + "]";
  if (!all_finite(rec.series.data)) return "non-finite series value";
  for (double v : rec.series.data)
    if (v < 0.0) return "negative series value";
  if (rec.total_donations < 0.0) return "negative total_donations";
  double donated = 0.0;
  for (std::size_t t = 0; t < rec.series.cols; ++t) donated += rec.series.at(0, t);
  if (std::abs(donated - rec.total_donations) > 0.5)
    return "series donation sum " + std::to_string(donated) +
           " does not match total_donations " + std::to_string(rec.total_donations);
  return {};
}

namespace {

json case_to_json(const CaseRecord& rec) {
  json j;
  j["case_id"] = rec.case_id;
  j["age"] = rec.statics.age;
  j["is_female"] = rec.statics.is_female;
  j["has_basic_insurance"] = rec.statics.has_basic_insurance;
  j["has_commercial_insurance"] = rec.statics.has_commercial_insurance;
  j["target_amount"] = rec.statics.target_amount;
  j["content_length"] = rec.statics.content_length;
  j["title_length"] = rec.statics.title_length;
  j["region_id"] = rec.statics.region_id;
  j["launch_month"] = rec.statics.launch_month;
  j["launch_day"] = rec.statics.launch_day;
  j["launch_weekday"] = rec.statics.launch_weekday;
  j["gender_disclosed"] = rec.statics.gender_disclosed;
  j["post_text"] = rec.post_text;
  json series = json::array();
  for (std::size_t f = 0; f < rec.series.rows; ++f) {
    json row = json::array();
    for (std::size_t t = 0; t < rec.series.cols; ++t) row.push_back(rec.series.at(f, t));
    series.push_back(std::move(row));
  }
  j["series"] = std::move(series);
  j["total_donations"] = rec.total_donations;
  return j;
}

CaseRecord case_from_json(const json& j) {
  CaseRecord rec;
  rec.case_id = j.at("case_id").get<std::string>();
  rec.statics.age = j.at("age").get<double>();
  rec.statics.is_female = j.at("is_female").get<bool>();
  rec.statics.has_basic_insurance = j.at("has_basic_insurance").get<bool>();
  rec.statics.has_commercial_insurance = j.at("has_commercial_insurance").get<bool>();
  rec.statics.target_amount = j.at("target_amount").get<double>();
  rec.statics.content_length = j.at("content_length").get<int>();
  rec.statics.title_length = j.at("title_length").get<int>();
  rec.statics.region_id = j.at("region_id").get<int>();
  rec.statics.launch_month = j.at("launch_month").get<int>();
  rec.statics.launch_day = j.at("launch_day").get<int>();
  rec.statics.launch_weekday = j.at("launch_weekday").get<int>();
  rec.statics.gender_disclosed = j.at("gender_disclosed").get<bool>();
  rec.post_text = j.at("post_text").get<std::string>();
  const json& series = j.at("series");
  if (!series.is_array() || series.empty())
    throw std::runtime_error("series must be a non-empty array");
  const std::size_t rows = series.size();
  const std::size_t cols = series.at(0).size();
  rec.series = Matrix(rows, cols);
  for (std::size_t f = 0; f < rows; ++f) {
    const json& row = series.at(f);
    if (row.size() != cols) throw std::runtime_error("ragged series rows");
    for (std::size_t t = 0; t < cols; ++t) rec.series.at(f, t) = row.at(t).get<double>();
  }
  rec.total_donations = j.at("total_donations").get<double>();
  return rec;
}

}  // namespace

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_corpus: cannot open " + path);
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    CaseRecord rec;
    try {
      rec = case_from_json(json::parse(line));
    } catch (const std::exception& e) {
      throw ParseError("load_corpus: " + path + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
    if (std::string err = validate_case(rec); !err.empty()) {
      throw ValidationError("load_corpus: " + path + ":" + std::to_string(line_no) +
                            ": rejected record: " + err);
    }
    corpus.push_back(std::move(rec));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: stable newlines
  if (!out) throw IoError("save_corpus: cannot open " + path + " for writing");
  for (const auto& rec : corpus) out << case_to_json(rec).dump() << '\n';
  if (!out) throw IoError("save_corpus: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Tokenization

Vocab Vocab::from_words(std::vector<std::string> words) {
  Vocab v;
  v.words = std::move(words);
  for (std::size_t i = 0; i < v.words.size(); ++i)
    v.index.emplace(v.words[i], static_cast<int>(i) + 2);
  return v;
}

Vocab Vocab::build(const Corpus& corpus, const std::vector<std::size_t>& case_indices,
                   std::size_t max_size) {
  std::map<std::string, std::size_t> counts;  // ordered: deterministic ties
  for (std::size_t idx : case_indices) {
    std::istringstream ss(corpus[idx].post_text);
    std::string word;
    while (ss >> word) ++counts[word];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(max_size, ranked.size());
  std::vector<std::string> words;
  words.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) words.push_back(ranked[i].first);
  return from_words(std::move(words));
}

int Vocab::id_of(const std::string& word) const {
  auto it = index.find(word);
  return it == index.end() ? kUnkToken : it->second;
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab,
                          std::size_t max_len) {
  std::vector<int> ids;
  ids.reserve(max_len);
  std::istringstream ss(text);
  std::string word;
  while (ids.size() < max_len && ss >> word) ids.push_back(vocab.id_of(word));
  ids.resize(max_len, kPadToken);
  return ids;
}

void tokenize_corpus(Corpus& corpus, const Vocab& vocab, std::size_t max_len) {
  for (auto& rec : corpus) rec.tokens = tokenize(rec.post_text, vocab, max_len);
}

// ---------------------------------------------------------------------------
// Instances and splits

std::vector<Instance> expand_instances(const Corpus& corpus) {
  std::vector<Instance> out;
  out.reserve(corpus.size() * kPredictionDays);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (int d = 1; d <= kPredictionDays; ++d)
      out.push_back({i, d, corpus[i].total_donations});
  return out;
}

namespace {

void seeded_shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.uniform_int(i)]);
}

}  // namespace

Dataset split_cases(const Corpus& corpus, const std::array<double, 3>& ratios,
                    std::uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw UsageError("split_cases: ratios must sum to 1");
  if (corpus.size() < 10)
    throw UsageError("split_cases: corpus has " + std::to_string(corpus.size()) +
                     " cases; need at least 10");
  const std::size_t n = corpus.size();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> fractional{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(exact);
    fractional[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {  // largest-remainder rounding
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (fractional[i] > fractional[best]) best = i;
    ++counts[best];
    fractional[best] = -1.0;
    ++assigned;
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng(seed).split(0x5611d);
  seeded_shuffle(order, rng);
  Dataset ds;
  ds.train.assign(order.begin(), order.begin() + counts[0]);
  ds.val.assign(order.begin() + counts[0], order.begin() + counts[0] + counts[1]);
  ds.test.assign(order.begin() + counts[0] + counts[1], order.end());
  return ds;
}

// ---------------------------------------------------------------------------
// Feature access

Vector static_vector(const StaticFeatures& s) {
  return {s.age,
          s.is_female ? 1.0 : 0.0,
          s.has_basic_insurance ? 1.0 : 0.0,
          s.has_commercial_insurance ? 1.0 : 0.0,
          s.target_amount,
          static_cast<double>(s.content_length),
          static_cast<double>(s.title_length),
          static_cast<double>(s.region_id),
          static_cast<double>(s.launch_month),
          static_cast<double>(s.launch_day),
          static_cast<double>(s.launch_weekday),
          s.gender_disclosed ? 1.0 : 0.0};
}

Vector series_day(const CaseRecord& rec, int day) {
  Vector out(kSeriesFeatures, 0.0);
  if (day < 1 || day > kHorizonDays)
    throw UsageError("series_day: day " + std::to_string(day) + " outside 1..42");
  const std::size_t t = static_cast<std::size_t>(day - 1);
  if (t < rec.series.cols)
    for (std::size_t f = 0; f < kSeriesFeatures; ++f) out[f] = rec.series.at(f, t);
  return out;
}

double series_cumulative(const CaseRecord& rec, int day, std::size_t feature) {
  double acc = 0.0;
  const std::size_t span = std::min<std::size_t>(rec.series.cols,
                                                 static_cast<std::size_t>(std::max(day, 0)));
  for (std::size_t t = 0; t < span; ++t) acc += rec.series.at(feature, t);
  return acc;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

const std::array<double, 4> kDefaultClusterMix = {0.854, 0.07, 0.05, 0.026};

namespace {

struct ClusterRecipe {
  double total_donations;
  std::array<double, 7> count_totals;  // features 2..8 in Table order
  double mean_age;
  double p_female;
  double mean_target;
  double mean_content;
  double mean_title;
  double donation_decay;
};

// Archetypes: low interest / active repliers / social attention attractors /
// young & female. Scale targets keep the archetype orderings (totals, ages,
// share counts) intact.
const std::array<ClusterRecipe, 4> kRecipes = {{
    {17677.0, {574, 334, 38, 26, 298, 515, 6326}, 41.0, 0.401, 182187.0, 375.0, 17.0, 0.15},
    {74782.0, {2721, 1034, 114, 68, 1155, 1809, 25417}, 31.0, 0.388, 269570.0, 527.0, 18.0, 0.35},
    {65069.0, {2555, 827, 110, 811, 21252, 43298, 25160}, 28.0, 0.430, 268861.0, 482.0, 19.0, 0.10},
    {246493.0, {10028, 967, 220, 160, 4595, 7645, 75560}, 22.0, 0.485, 383299.0, 687.0, 18.0, 0.45},
}};

constexpr std::size_t kSharedWords = 128;
constexpr std::size_t kClusterWords = 96;

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::vector<std::size_t> allocate_counts(std::size_t n, const std::array<double, 4>& mix) {
  std::vector<std::size_t> counts(4, 0);
  std::array<double, 4> fractional{};
  std::size_t assigned = 0;
  for (int z = 0; z < 4; ++z) {
    const double exact = mix[z] * static_cast<double>(n);
    counts[z] = static_cast<std::size_t>(exact);
    fractional[z] = exact - static_cast<double>(counts[z]);
    assigned += counts[z];
  }
  while (assigned < n) {
    int best = 0;
    for (int z = 1; z < 4; ++z)
      if (fractional[z] > fractional[best]) best = z;
    ++counts[best];
    fractional[best] = -1.0;
    ++assigned;
  }
  return counts;
}

std::string synth_word(std::size_t id) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "w%03zu", id);
  return buf;
}

}  // namespace

SyntheticCorpus generate_synthetic(std::size_t n_cases, std::uint64_t seed,
                                   const std::array<double, 4>& mix) {
  if (n_cases < 10) throw UsageError("generate_synthetic: need at least 10 cases");
  double mix_sum = 0.0;
  for (double m : mix) {
    if (m < 0.0) throw UsageError("generate_synthetic: mix entries must be >= 0");
    mix_sum += m;
  }
  if (std::abs(mix_sum - 1.0) > 1e-6)
    throw UsageError("generate_synthetic: mix must sum to 1");

  Rng rng = Rng(seed).split(0xda7a);
  const std::vector<std::size_t> counts = allocate_counts(n_cases, mix);
  std::vector<std::size_t> clusters;
  clusters.reserve(n_cases);
  for (int z = 0; z < 4; ++z) clusters.insert(clusters.end(), counts[z], z);
  seeded_shuffle(clusters, rng);

  SyntheticCorpus out;
  out.cases.reserve(n_cases);
  out.planted_cluster.reserve(n_cases);

  for (std::size_t i = 0; i < n_cases; ++i) {
    const std::size_t z = clusters[i];
    const ClusterRecipe& rec = kRecipes[z];
    CaseRecord c;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "case-%06zu", i);
    c.case_id = idbuf;

    // statics
    c.statics.age = std::clamp(std::round(rng.normal(rec.mean_age, 8.0)), 1.0, 95.0);
    c.statics.is_female = rng.bernoulli(rec.p_female);
    c.statics.has_basic_insurance = rng.bernoulli(0.55);
    c.statics.has_commercial_insurance = rng.bernoulli(0.12);
    c.statics.target_amount =
        std::max(1000.0, std::round(rng.lognormal_with_mean(rec.mean_target, 0.35) / 10.0) * 10.0);
    c.statics.content_length = static_cast<int>(
        std::clamp(std::round(rng.lognormal_with_mean(rec.mean_content, 0.25)), 30.0, 5000.0));
    c.statics.title_length =
        static_cast<int>(std::clamp(std::round(rng.normal(rec.mean_title, 3.0)), 4.0, 60.0));
    c.statics.region_id = static_cast<int>(rng.uniform_int(30));
    c.statics.launch_month = 1 + static_cast<int>(rng.uniform_int(12));
    c.statics.launch_day = 1 + static_cast<int>(rng.uniform_int(28));
    c.statics.launch_weekday = static_cast<int>(rng.uniform_int(7));
    c.statics.gender_disclosed = rng.bernoulli(0.92);

    // post text: shared pool plus an archetype-specific range so the text
    // carries cluster signal
    const std::size_t n_tokens = static_cast<std::size_t>(
        std::clamp(c.statics.content_length / 8, 12, 96));
    std::string text;
    for (std::size_t w = 0; w < n_tokens; ++w) {
      std::size_t id;
      if (rng.bernoulli(0.45))
        id = kSharedWords + z * kClusterWords + rng.uniform_int(kClusterWords);
      else
        id = rng.uniform_int(kSharedWords);
      if (!text.empty()) text += ' ';
      text += synth_word(id);
    }
    c.post_text = std::move(text);

    // daily series: total x normalized exp(-lambda t) with multiplicative
    // log-normal noise; the label is the realized sum
    c.series = Matrix(kSeriesFeatures, kHorizonDays);
    const double case_total = rng.lognormal_with_mean(rec.total_donations, 0.45);
    std::array<double, kHorizonDays> weights{};
    double wsum = 0.0;
    for (int t = 0; t < kHorizonDays; ++t) {
      weights[t] = std::exp(-rec.donation_decay * static_cast<double>(t + 1));
      wsum += weights[t];
    }
    double realized = 0.0;
    for (int t = 0; t < kHorizonDays; ++t) {
      const double mean_t = case_total * weights[t] / wsum;
      const double amount = round2(rng.lognormal_with_mean(std::max(mean_t, 1e-9), 0.35));
      c.series.at(0, t) = amount;
      realized += amount;
    }
    c.total_donations = round2(realized);
    // re-sync feature 1 sum with the rounded total
    c.series.at(0, 0) = round2(c.series.at(0, 0) + (c.total_donations - realized));

    const double count_decay = rec.donation_decay * 0.8 + 0.03;
    double cwsum = 0.0;
    std::array<double, kHorizonDays> cweights{};
    for (int t = 0; t < kHorizonDays; ++t) {
      cweights[t] = std::exp(-count_decay * static_cast<double>(t + 1));
      cwsum += cweights[t];
    }
    for (std::size_t f = 1; f < kSeriesFeatures; ++f) {
      const double feature_total = rng.lognormal_with_mean(rec.count_totals[f - 1], 0.5);
      for (int t = 0; t < kHorizonDays; ++t) {
        const double mean_t = feature_total * cweights[t] / cwsum;
        c.series.at(f, t) = std::round(rng.lognormal_with_mean(std::max(mean_t, 1e-9), 0.5));
      }
    }

    out.planted_cluster.push_back(static_cast<int>(z));
    out.cases.push_back(std::move(c));
  }
  return out;
}

}  // namespace fundcast
