#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fundcast/data.hpp"
#include "fundcast/layers.hpp"
#include "support.hpp"

using namespace fundcast;
namespace fs = std::filesystem;

namespace {

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name) {
    path = fs::temp_directory_path() / ("fundcast_test_" + name);
  }
  ~TempFile() { std::remove(path.string().c_str()); }
};

}  // namespace

TEST_CASE("load_corpus on an empty file gives an empty corpus") {
  TempFile f("empty.jsonl");
  std::ofstream(f.path).close();
  CHECK(load_corpus(f.path.string()).empty());
}

TEST_CASE("corpus round-trips through save and load") {
  const SyntheticCorpus synth = generate_synthetic(25, 11);
  TempFile f("roundtrip.jsonl");
  save_corpus(synth.cases, f.path.string());
  const Corpus loaded = load_corpus(f.path.string());
  REQUIRE(loaded.size() == synth.cases.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].case_id == synth.cases[i].case_id);
    CHECK(loaded[i].post_text == synth.cases[i].post_text);
    CHECK(loaded[i].total_donations == synth.cases[i].total_donations);
    CHECK(loaded[i].series.data == synth.cases[i].series.data);
    CHECK(loaded[i].statics.age == synth.cases[i].statics.age);
    CHECK(loaded[i].statics.target_amount == synth.cases[i].statics.target_amount);
  }
  // a second save is byte-identical
  TempFile f2("roundtrip2.jsonl");
  save_corpus(loaded, f2.path.string());
  std::ifstream a(f.path, std::ios::binary), b(f2.path, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("load_corpus rejects malformed lines with line numbers") {
  TempFile f("malformed.jsonl");
  std::ofstream(f.path) << "{not json\n";
  CHECK_THROWS_WITH_AS(load_corpus(f.path.string()), doctest::Contains(":1:"),
                       ParseError);
}

TEST_CASE("load_corpus rejects records whose series sum mismatches the total") {
  SyntheticCorpus synth = generate_synthetic(10, 3);
  synth.cases[4].total_donations += 10.0;  // break the invariant
  TempFile f("badsum.jsonl");
  save_corpus(synth.cases, f.path.string());
  CHECK_THROWS_WITH_AS(load_corpus(f.path.string()), doctest::Contains(":5:"),
                       ValidationError);
}

TEST_CASE("tokenize pads, truncates and maps unknowns to UNK") {
  const Vocab vocab = Vocab::from_words({"alpha", "beta", "gamma"});
  CHECK(tokenize("", vocab, 4) == std::vector<int>{0, 0, 0, 0});
  CHECK(tokenize("alpha beta", vocab, 4) == std::vector<int>{2, 3, 0, 0});
  CHECK(tokenize("alpha zzz beta", vocab, 4) == std::vector<int>{2, kUnkToken, 3, 0});
  CHECK(tokenize("alpha beta gamma alpha beta", vocab, 3) == std::vector<int>{2, 3, 4});
}

TEST_CASE("vocabulary built from the train split only covers test by UNK") {
  const SyntheticCorpus synth = generate_synthetic(60, 5);
  const Dataset splits = split_cases(synth.cases, {0.8, 0.1, 0.1}, 9);
  const Vocab vocab = Vocab::build(synth.cases, splits.train, 4096);
  std::set<std::string> train_words;
  for (std::size_t idx : splits.train) {
    std::istringstream ss(synth.cases[idx].post_text);
    std::string w;
    while (ss >> w) train_words.insert(w);
  }
  for (const std::string& w : vocab.words) CHECK(train_words.count(w) == 1);
  // every test-only token must map to UNK
  for (std::size_t idx : splits.test) {
    std::istringstream ss(synth.cases[idx].post_text);
    std::string w;
    while (ss >> w)
      if (!train_words.count(w)) CHECK(vocab.id_of(w) == kUnkToken);
  }
}

TEST_CASE("expand_instances yields exactly 41 days per case") {
  const Corpus corpus = test::toy_corpus(3);
  const auto instances = expand_instances(corpus);
  CHECK(instances.size() == corpus.size() * 41);
  std::set<int> days;
  for (const auto& inst : instances)
    if (inst.case_index == 1) days.insert(inst.day);
  CHECK(days.size() == 41);
  CHECK(*days.begin() == 1);
  CHECK(*days.rbegin() == 41);
}

TEST_CASE("split_cases partitions 10 cases as 8/1/1") {
  const Corpus corpus = test::toy_corpus(10);
  const Dataset ds = split_cases(corpus, {0.8, 0.1, 0.1}, 1);
  CHECK(ds.train.size() == 8);
  CHECK(ds.val.size() == 1);
  CHECK(ds.test.size() == 1);
}

TEST_CASE("split_cases is disjoint, exhaustive and deterministic") {
  const SyntheticCorpus synth = generate_synthetic(103, 17);
  const Dataset a = split_cases(synth.cases, {0.8, 0.1, 0.1}, 5);
  const Dataset b = split_cases(synth.cases, {0.8, 0.1, 0.1}, 5);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  std::set<std::size_t> seen;
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (std::size_t idx : *part) CHECK(seen.insert(idx).second);
  CHECK(seen.size() == synth.cases.size());
  // ratios within one case of 80/10/10
  CHECK(std::abs(static_cast<int>(a.train.size()) - 82) <= 1);
  CHECK(std::abs(static_cast<int>(a.val.size()) - 10) <= 1);
  CHECK(std::abs(static_cast<int>(a.test.size()) - 10) <= 1);
}

TEST_CASE("split_cases rejects tiny corpora and bad ratios") {
  const Corpus corpus = test::toy_corpus(9);
  CHECK_THROWS_AS(split_cases(corpus, {0.8, 0.1, 0.1}, 1), UsageError);
  const Corpus ok = test::toy_corpus(12);
  CHECK_THROWS_AS(split_cases(ok, {0.8, 0.3, 0.1}, 1), UsageError);
}

TEST_CASE("generate_synthetic honors the default mix") {
  const SyntheticCorpus synth = generate_synthetic(1000, 23);
  std::array<std::size_t, 4> counts{};
  for (int z : synth.planted_cluster) ++counts[static_cast<std::size_t>(z)];
  const double share1 = static_cast<double>(counts[0]) / 1000.0;
  CHECK(share1 == doctest::Approx(0.854).epsilon(0.035));
}

TEST_CASE("generated corpus passes all record invariants") {
  const SyntheticCorpus synth = generate_synthetic(300, 29);
  for (const auto& rec : synth.cases) CHECK(validate_case(rec).empty());
}

TEST_CASE("generate_synthetic is a pure function of its inputs") {
  const SyntheticCorpus a = generate_synthetic(50, 31);
  const SyntheticCorpus b = generate_synthetic(50, 31);
  REQUIRE(a.cases.size() == b.cases.size());
  for (std::size_t i = 0; i < a.cases.size(); ++i) {
    CHECK(a.cases[i].series.data == b.cases[i].series.data);
    CHECK(a.cases[i].post_text == b.cases[i].post_text);
  }
  const SyntheticCorpus c = generate_synthetic(50, 32);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.cases.size(); ++i)
    if (a.cases[i].series.data != c.cases[i].series.data) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("per-cluster mean totals follow the planted ordering") {
  const SyntheticCorpus synth = generate_synthetic(4000, 37);
  std::array<double, 4> sums{};
  std::array<std::size_t, 4> counts{};
  for (std::size_t i = 0; i < synth.cases.size(); ++i) {
    const auto z = static_cast<std::size_t>(synth.planted_cluster[i]);
    sums[z] += synth.cases[i].total_donations;
    ++counts[z];
  }
  std::array<double, 4> means{};
  for (std::size_t z = 0; z < 4; ++z)
    means[z] = sums[z] / static_cast<double>(counts[z]);
  CHECK(means[0] < means[1]);  // low interest below active repliers
  CHECK(means[0] < means[2]);  // and below social attention
  CHECK(means[1] < means[3]);  // young & female on top
  CHECK(means[2] < means[3]);
}

TEST_CASE("generate_synthetic validates the mix") {
  CHECK_THROWS_AS(generate_synthetic(100, 1, {0.5, 0.5, 0.5, 0.5}), UsageError);
  CHECK_THROWS_AS(generate_synthetic(100, 1, {1.5, -0.5, 0.0, 0.0}), UsageError);
  CHECK_THROWS_AS(generate_synthetic(5, 1), UsageError);
}

TEST_CASE("series_day and series_cumulative clamp to the recorded span") {
  const CaseRecord rec = test::toy_case(3, 4);
  const Vector day2 = series_day(rec, 2);
  CHECK(day2[0] == rec.series.at(0, 1));
  const Vector past = series_day(rec, 40);
  for (double v : past) CHECK(v == 0.0);
  CHECK(series_cumulative(rec, 42, 0) ==
        doctest::Approx(rec.total_donations).epsilon(1e-9));
}
