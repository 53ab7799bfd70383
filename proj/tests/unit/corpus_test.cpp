#include "ppp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace ppp {
namespace {

using testing::TempDir;

TokenRecord tok(std::string doc, int sent, int idx, double rt, std::string surface = "w") {
  return {{std::move(doc), sent, idx}, std::move(surface), rt, false, false};
}

TEST(LoadRtCorpus, ThreeRowSentenceFlagsLastWordFinal) {
  TempDir dir;
  auto path = dir.write("c.tsv", "doc_id\tsent_id\tword_idx\tword\trt_ms\nd\t0\t0\tThe\t200\nd\t0\t1\tcat\t250\nd\t0\t2\tsat\t300\n");
  auto tokens = load_averaged_corpus(path);
  ASSERT_EQ(tokens.size(), 3u);
  EXPECT_TRUE(tokens[0].is_sent_initial);
  EXPECT_FALSE(tokens[0].is_sent_final);
  EXPECT_FALSE(tokens[1].is_sent_final);
  EXPECT_TRUE(tokens[2].is_sent_final);
  EXPECT_EQ(tokens[1].surface, "cat");
  EXPECT_DOUBLE_EQ(tokens[2].rt_ms, 300.0);
}

TEST(LoadRtCorpus, EmptyFileGivesNoRecords) {
  TempDir dir;
  EXPECT_TRUE(load_averaged_corpus(dir.write("e.tsv", "")).empty());
  EXPECT_TRUE(load_per_subject_corpus(dir.write("e2.tsv", "")).empty());
}

TEST(LoadRtCorpus, OrdersByKey) {
  TempDir dir;
  auto path = dir.write("c.tsv", "doc_id\tsent_id\tword_idx\tword\trt_ms\nd\t1\t0\tb\t1\nd\t0\t1\ty\t1\nd\t0\t0\tx\t1\n");
  auto tokens = load_averaged_corpus(path);
  ASSERT_EQ(tokens.size(), 3u);
  EXPECT_EQ(tokens[0].surface, "x");
  EXPECT_EQ(tokens[1].surface, "y");
  EXPECT_EQ(tokens[2].surface, "b");
  EXPECT_TRUE(tokens[2].is_sent_initial && tokens[2].is_sent_final);
}

TEST(LoadRtCorpus, MalformedRowReportsLineNumber) {
  TempDir dir;
  auto path = dir.write("c.tsv", "doc_id\tsent_id\tword_idx\tword\trt_ms\nd\t0\t0\ta\t1\nd\t0\tone\tb\t2\n");
  try {
    load_averaged_corpus(path);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  auto short_row = dir.write("s.tsv", "doc_id\tsent_id\tword_idx\tword\trt_ms\nd\t0\t0\ta\n");
  EXPECT_THROW(load_averaged_corpus(short_row), ParseError);
  auto bad_rt = dir.write("r.tsv", "doc_id\tsent_id\tword_idx\tword\trt_ms\nd\t0\t0\ta\tnan\n");
  EXPECT_THROW(load_averaged_corpus(bad_rt), ParseError);
}

TEST(LoadRtCorpus, DuplicateKeyInAveragedLayoutIsAnError) {
  TempDir dir;
  auto path = dir.write("c.tsv", "doc_id\tsent_id\tword_idx\tword\trt_ms\nd\t0\t0\ta\t1\nd\t0\t0\ta\t2\n");
  EXPECT_THROW(load_averaged_corpus(path), ParseError);
}

TEST(LoadRtCorpus, PerSubjectTwoByTwo) {
  auto loaded = load_rt_corpus(testing::data_path("per_subject.tsv"), CorpusLayout::per_subject);
  const auto& readings = std::get<std::vector<SubjectReading>>(loaded);
  EXPECT_EQ(readings.size(), 4u);
  EXPECT_EQ(detect_layout(testing::data_path("per_subject.tsv")), CorpusLayout::per_subject);
  EXPECT_EQ(detect_layout(testing::data_path("small_corpus.tsv")), CorpusLayout::averaged);
}

TEST(LoadRtCorpus, SubjectWithTwoReadingsOfOneTokenIsAnError) {
  TempDir dir;
  auto path = dir.write("p.tsv", "doc_id\tsent_id\tword_idx\tword\trt_ms\tsubject_id\nd\t0\t0\ta\t1\ts1\nd\t0\t0\ta\t2\ts1\n");
  EXPECT_THROW(load_per_subject_corpus(path), ParseError);
}

TEST(AverageSubjects, TwoPointMean) {
  std::vector<SubjectReading> r{{"s1", {"d", 0, 0}, "k", 200}, {"s2", {"d", 0, 0}, "k", 300}};
  auto t = average_subjects(r);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_DOUBLE_EQ(t[0].rt_ms, 250.0);
}

TEST(AverageSubjects, SingleSubjectIsIdentity) {
  std::vector<SubjectReading> r{{"s1", {"d", 0, 0}, "a", 123.5}, {"s1", {"d", 0, 1}, "b", 456.25}};
  auto t = average_subjects(r);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].rt_ms, 123.5);
  EXPECT_EQ(t[1].rt_ms, 456.25);
  EXPECT_TRUE(t[1].is_sent_final);
}

TEST(AverageSubjects, ThreeSubjects) {
  std::vector<SubjectReading> r{{"s1", {"d", 0, 0}, "k", 100}, {"s2", {"d", 0, 0}, "k", 200}, {"s3", {"d", 0, 0}, "k", 600}};
  EXPECT_DOUBLE_EQ(average_subjects(r)[0].rt_ms, 300.0);
}

TEST(AverageSubjects, EmptyInputIsAnError) { EXPECT_THROW(average_subjects({}), DomainError); }

TEST(AverageSubjects, CommutesWithSubjectOrder) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> rt(50, 900);
  std::vector<SubjectReading> r;
  for (int s = 0; s < 7; ++s) {
    for (int w = 0; w < 12; ++w) {
      if ((s + w) % 5 == 0) continue;  // ragged coverage
      r.push_back({"s" + std::to_string(s), {"d", w / 6, w % 6}, "w" + std::to_string(w), rt(rng)});
    }
  }
  auto expected = average_subjects(r);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(r.begin(), r.end(), rng);
    auto got = average_subjects(r);
    ASSERT_EQ(got.size(), expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].key, expected[i].key);
      EXPECT_EQ(got[i].rt_ms, expected[i].rt_ms);  // bit-identical
    }
  }
}

FilterPolicy no_boundaries() {
  FilterPolicy p;
  p.drop_sent_initial = false;
  p.drop_sent_final = false;
  return p;
}

TEST(FilterTokens, RemovesZeroReadingTimes) {
  std::vector<TokenRecord> t{tok("d", 0, 1, 200), tok("d", 0, 2, 0), tok("d", 0, 3, 250)};
  auto res = filter_tokens(t, no_boundaries());
  ASSERT_EQ(res.tokens.size(), 2u);
  EXPECT_EQ(res.tokens[0].rt_ms, 200);
  EXPECT_EQ(res.tokens[1].rt_ms, 250);
  EXPECT_EQ(res.summary.n_zero, 1u);
}

TEST(FilterTokens, ConstantReadingTimesAreNeverSdDropped) {
  std::vector<TokenRecord> t;
  for (int i = 0; i < 10; ++i) t.push_back(tok("d", 0, i, 300));
  auto res = filter_tokens(t, no_boundaries());
  EXPECT_EQ(res.tokens.size(), 10u);
  EXPECT_EQ(res.summary.sd, 0.0);
  EXPECT_EQ(res.summary.n_sd, 0u);
}

TEST(FilterTokens, DropsOutlierBeyondThreeSd) {
  std::vector<TokenRecord> t;
  for (int i = 0; i < 49; ++i) t.push_back(tok("d", i, 1, 100));
  t.push_back(tok("d", 49, 1, 10000));
  // Brute force: mean 298, sample SD sqrt((49*198^2 + 9702^2)/49) = 1400.0714...
  auto res = filter_tokens(t, no_boundaries());
  EXPECT_DOUBLE_EQ(res.summary.mean, 298.0);
  EXPECT_NEAR(res.summary.sd, 1400.071426749364, 1e-9);
  EXPECT_EQ(res.tokens.size(), 49u);
  EXPECT_EQ(res.summary.n_sd, 1u);
  for (const auto& r : res.tokens) EXPECT_EQ(r.rt_ms, 100);
}

TEST(FilterTokens, BoundaryWordsDroppedAfterSdRule) {
  std::vector<TokenRecord> t{tok("d", 0, 0, 200), tok("d", 0, 1, 210), tok("d", 0, 2, 220), tok("d", 0, 3, 0)};
  finalize_tokens(t);
  auto res = filter_tokens(t, FilterPolicy{});
  // Word 3 is zero; sentence-final flag follows the corpus maximum (word 3), so word 2 survives.
  ASSERT_EQ(res.tokens.size(), 2u);
  EXPECT_EQ(res.tokens[0].key.word_idx, 1);
  EXPECT_EQ(res.tokens[1].key.word_idx, 2);
  EXPECT_EQ(res.summary.n_initial, 1u);
  EXPECT_EQ(res.summary.n_zero, 1u);
}

TEST(FilterTokens, EverythingFilteredIsAWarningNotAnError) {
  std::vector<TokenRecord> t{tok("d", 0, 0, 0), tok("d", 0, 1, 0)};
  auto res = filter_tokens(t, FilterPolicy{});
  EXPECT_TRUE(res.tokens.empty());
  EXPECT_TRUE(res.summary.all_filtered);
  EXPECT_NE(res.summary.str().find("warning=all_rows_filtered"), std::string::npos);
}

TEST(FilterTokens, RejectsNonPositiveMultiplier) {
  FilterPolicy p;
  p.sd_multiplier = 0.0;
  EXPECT_THROW(filter_tokens({}, p), DomainError);
}

TEST(FilterTokens, SurvivorsSatisfyRecordedBoundsAndRunsAreDeterministic) {
  std::mt19937_64 rng(17);
  std::lognormal_distribution<double> rt(5.6, 0.5);
  std::bernoulli_distribution zero(0.05);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TokenRecord> t;
    for (int s = 0; s < 30; ++s) {
      for (int w = 0; w < 10; ++w) t.push_back(tok("d", s, w, zero(rng) ? 0.0 : rt(rng)));
    }
    finalize_tokens(t);
    FilterPolicy p;
    auto a = filter_tokens(t, p);
    auto b = filter_tokens(t, p);
    EXPECT_EQ(a.summary.str(), b.summary.str());
    ASSERT_EQ(a.tokens.size(), b.tokens.size());
    for (const auto& r : a.tokens) {
      EXPECT_GT(r.rt_ms, 0.0);
      EXPECT_LE(std::abs(r.rt_ms - a.summary.mean), 3.0 * a.summary.sd);
      EXPECT_FALSE(r.is_sent_initial);
      EXPECT_FALSE(r.is_sent_final);
    }
    EXPECT_TRUE(std::is_sorted(a.tokens.begin(), a.tokens.end(), [](auto& x, auto& y) { return x.key < y.key; }));
  }
}

TEST(LogFrequency, CountsAndFloor) {
  auto t = make_freq_table({{"one", 1}, {"thousand", 1000}, {"Cat", 7}});
  EXPECT_EQ(log_frequency(t, "one"), 0.0);
  EXPECT_EQ(log_frequency(t, "unseen"), 0.0);
  EXPECT_NEAR(log_frequency(t, "thousand"), 6.9078, 5e-5);
  EXPECT_DOUBLE_EQ(log_frequency(t, "cat"), std::log(7.0));
  EXPECT_DOUBLE_EQ(log_frequency(t, "CAT"), std::log(7.0));
}

TEST(LogFrequency, ConfigurableFloorAndMonotone) {
  auto t = make_freq_table({{"a", 3}, {"b", 10}}, 5);
  EXPECT_DOUBLE_EQ(log_frequency(t, "a"), std::log(5.0));
  EXPECT_DOUBLE_EQ(log_frequency(t, "zzz"), std::log(5.0));
  std::vector<std::pair<std::string, std::uint64_t>> entries;
  for (std::uint64_t c = 0; c < 200; ++c) entries.emplace_back("w" + std::to_string(c), c);
  auto m = make_freq_table(entries);
  for (std::uint64_t c = 1; c < 200; ++c) {
    EXPECT_LE(log_frequency(m, "w" + std::to_string(c - 1)), log_frequency(m, "w" + std::to_string(c)));
  }
  EXPECT_THROW(make_freq_table({}, 0), DomainError);
}

TEST(LogFrequency, LoadsTableWithOrWithoutHeader) {
  TempDir dir;
  auto with = load_freq_table(dir.write("f.tsv", "word\tcount\nThe\t10\nthe\t5\n"));
  EXPECT_DOUBLE_EQ(log_frequency(with, "THE"), std::log(15.0));
  EXPECT_EQ(with.total, 15u);
  auto without = load_freq_table(dir.write("g.tsv", "dog\t4\n"));
  EXPECT_DOUBLE_EQ(log_frequency(without, "dog"), std::log(4.0));
  EXPECT_THROW(load_freq_table(dir.write("h.tsv", "dog\t4\ncat\tmany\n")), ParseError);
}

TEST(WordLength, CountsCharacters) {
  EXPECT_EQ(word_length("cat"), 3u);
  EXPECT_EQ(word_length(""), 0u);
  EXPECT_EQ(word_length("mother."), 7u);
  EXPECT_EQ(word_length("mother.", {".,"}), 6u);
  EXPECT_EQ(word_length("caf\xC3\xA9"), 4u);  // UTF-8 code points
}

TEST(Stopwords, LoadedLowercased) {
  TempDir dir;
  auto s = load_stopwords(dir.write("s.txt", "The\n\nof\n"));
  EXPECT_EQ(s.size(), 2u);
  EXPECT_TRUE(s.contains("the"));
}

}  // namespace
}  // namespace ppp
