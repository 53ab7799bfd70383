#include "ppp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

namespace ppp {
namespace {

ProbabilityVector random_simplex(std::mt19937_64& rng, std::size_t k) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(k);
  double s = 0.0;
  for (auto& v : p) s += (v = e(rng));
  for (auto& v : p) v /= s;
  return ProbabilityVector(p);
}

// Direct evaluation in long double, no log1p tricks.
double renyi_oracle(std::span<const double> p, double alpha) {
  long double s = 0.0L;
  for (double v : p) {
    if (v > 0.0) s += std::pow(static_cast<long double>(v), static_cast<long double>(alpha));
  }
  return static_cast<double>(std::log2(s) / (1.0L - alpha));
}

TEST(SurprisalBits, Examples) {
  EXPECT_DOUBLE_EQ(surprisal_bits(std::log(0.5)), 1.0);
  EXPECT_EQ(surprisal_bits(0.0), 0.0);
  EXPECT_NEAR(surprisal_bits(std::log(0.1)), 3.321928094887362, 1e-12);
  EXPECT_THROW(surprisal_bits(0.1), DomainError);
  EXPECT_THROW(surprisal_bits(-INFINITY), DomainError);
}

TEST(ProbabilityVector, Validates) {
  EXPECT_THROW(ProbabilityVector({}), DomainError);
  EXPECT_THROW(ProbabilityVector({0.5, 0.6}), DomainError);
  EXPECT_THROW(ProbabilityVector({1.1, -0.1}), DomainError);
  EXPECT_NO_THROW(ProbabilityVector({0.5, 0.5 + 5e-7}));
}

TEST(ShannonEntropy, Examples) {
  EXPECT_DOUBLE_EQ(shannon_entropy(ProbabilityVector({0.25, 0.25, 0.25, 0.25})), 2.0);
  EXPECT_EQ(shannon_entropy(ProbabilityVector({1.0, 0.0, 0.0})), 0.0);
  EXPECT_DOUBLE_EQ(shannon_entropy(ProbabilityVector({0.5, 0.25, 0.25})), 1.5);
}

TEST(RenyiEntropy, Examples) {
  std::vector<double> u(8, 0.125);
  for (double a : {0.1, 0.5, 0.999, 2.0, 7.0}) EXPECT_NEAR(renyi_entropy(ProbabilityVector(u), a), 3.0, 1e-12);
  ProbabilityVector p({0.5, 0.25, 0.25});
  EXPECT_DOUBLE_EQ(renyi_entropy(p, 1.0), 1.5);
  EXPECT_NEAR(renyi_entropy(p, 0.5), 1.5431066063272239, 1e-12);
  EXPECT_THROW(renyi_entropy(p, 0.0), DomainError);
  EXPECT_THROW(renyi_entropy(p, -1.0), DomainError);
}

TEST(RenyiEntropy, MatchesDirectFormula) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  for (int i = 0; i < 500; ++i) {
    auto p = random_simplex(rng, dim(rng));
    for (double a : {0.25, 0.5, 0.9, 1.5, 3.0}) {
      EXPECT_NEAR(renyi_entropy(p, a), renyi_oracle(p.probs(), a), 1e-9);
    }
  }
}

TEST(RenyiEntropy, ApproachesShannonNearOne) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  for (int i = 0; i < 1000; ++i) {
    auto p = random_simplex(rng, dim(rng));
    const double h = shannon_entropy(p);
    EXPECT_LT(std::abs(renyi_entropy(p, 1.0 - 1e-7) - h), 1e-5);
    EXPECT_LT(std::abs(renyi_entropy(p, 1.0 + 1e-7) - h), 1e-5);
    // Just outside the delegation band the formula itself must stay close.
    EXPECT_LT(std::abs(renyi_entropy(p, 1.0 - 2e-6) - h), 1e-4);
  }
}

TEST(RenyiEntropy, NonincreasingInAlpha) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::size_t> dim(2, 64);
  std::uniform_real_distribution<double> alpha(0.01, 0.99);
  for (int i = 0; i < 1000; ++i) {
    auto p = random_simplex(rng, dim(rng));
    const double a = alpha(rng);
    EXPECT_GE(renyi_entropy(p, a) + 1e-12, shannon_entropy(p));
    EXPECT_GE(renyi_entropy(p, a / 2) + 1e-12, renyi_entropy(p, a));
  }
}

TEST(Entropies, PermutationInvariant) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 200; ++i) {
    auto p = random_simplex(rng, 10);
    std::vector<double> q(p.probs().begin(), p.probs().end());
    std::shuffle(q.begin(), q.end(), rng);
    ProbabilityVector pq(q);
    EXPECT_NEAR(shannon_entropy(p), shannon_entropy(pq), 1e-12);
    EXPECT_NEAR(renyi_entropy(p, 0.5), renyi_entropy(pq, 0.5), 1e-12);
  }
}

ScoreDumpRecord record(std::vector<SubwordScore> subwords) {
  ScoreDumpRecord r;
  r.key = {"d", 0, 0};
  r.surface = "w";
  r.model_id = "m";
  r.subwords = std::move(subwords);
  return r;
}

TEST(AggregateWord, Examples) {
  EXPECT_DOUBLE_EQ(aggregate_word(record({{"a", std::log(0.25), {}, {}}})).surprisal_bits, 2.0);
  EXPECT_DOUBLE_EQ(aggregate_word(record({{"a", std::log(0.5), {}, {}}, {"b", std::log(0.5), {}, {}}})).surprisal_bits,
                   2.0);
  // ln 2 and ln 4 to four places
  auto r = record({{"a", -1.0, 0.6931, {}}, {"b", -1.0, 1.3863, {}}});
  EXPECT_NEAR(*aggregate_word(r, EntropyPolicy::sum).shannon_bits, 3.0, 1e-3);
  EXPECT_NEAR(*aggregate_word(r, EntropyPolicy::first_subword).shannon_bits, 1.0, 1e-3);
  EXPECT_DOUBLE_EQ(*aggregate_word(record({{"a", -1.0, kLn2, {}}, {"b", -1.0, 2 * kLn2, {}}})).shannon_bits, 3.0);
}

TEST(AggregateWord, MissingEntropiesStayMissing) {
  auto r = record({{"a", -1.0, 0.5, {{0.5, 0.7}}}, {"b", -1.0, {}, {}}});
  auto sum = aggregate_word(r, EntropyPolicy::sum);
  EXPECT_FALSE(sum.shannon_bits);
  EXPECT_TRUE(sum.renyi_bits.empty());
  auto first = aggregate_word(r, EntropyPolicy::first_subword);
  ASSERT_TRUE(first.shannon_bits);
  EXPECT_DOUBLE_EQ(*first.shannon_bits, 0.5 / kLn2);
  EXPECT_DOUBLE_EQ(first.renyi_bits.at(0.5), 0.7 / kLn2);
}

TEST(AggregateWord, RejectsBadRecords) {
  EXPECT_THROW(aggregate_word(record({})), DomainError);
  EXPECT_THROW(aggregate_word(record({{"a", 0.2, {}, {}}})), DomainError);
}

TEST(AggregateWord, SurprisalIsAdditiveOverSplits) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> lp(-6.0, 0.0);
  std::uniform_int_distribution<int> n(2, 6);
  for (int i = 0; i < 500; ++i) {
    std::vector<SubwordScore> s(static_cast<std::size_t>(n(rng)));
    for (auto& x : s) x.logprob_nat = lp(rng);
    const auto cut = std::uniform_int_distribution<std::size_t>(1, s.size() - 1)(rng);
    auto whole = aggregate_word(record(s)).surprisal_bits;
    auto left = aggregate_word(record({s.begin(), s.begin() + static_cast<std::ptrdiff_t>(cut)})).surprisal_bits;
    auto right = aggregate_word(record({s.begin() + static_cast<std::ptrdiff_t>(cut), s.end()})).surprisal_bits;
    EXPECT_NEAR(whole, left + right, 1e-12 * std::max(1.0, whole));
  }
}

TEST(CorpusPpl, Examples) {
  std::vector<double> ones(5, 1.0);
  EXPECT_DOUBLE_EQ(corpus_ppl(ones), 2.0);
  EXPECT_DOUBLE_EQ(corpus_ppl(std::vector<double>{2.0, 4.0}), 8.0);
  EXPECT_NEAR(corpus_ppl(std::vector<double>{1.0, std::log2(10.0), 0.0}), 2.714417616594906, 1e-12);
  EXPECT_NEAR(corpus_ppl(std::vector<double>{1.0, 3.3219, 0.0}), 2.715, 1e-3);
  EXPECT_THROW(corpus_ppl(std::vector<double>{}), DomainError);
  std::vector<WordMetrics> w{{{"d", 0, 0}, 2.0, {}, {}}, {{"d", 0, 1}, 4.0, {}, {}}};
  EXPECT_DOUBLE_EQ(corpus_ppl(w), 8.0);
}

TEST(CorpusPpl, ResegmentationGivesIdenticalBits) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.02, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<WordMetrics> a, b;
    for (int w = 0; w < 200; ++w) {
      // Two splits of one word whose nat sums are equal as doubles.
      const double x = std::log(u(rng)), y = std::log(u(rng));
      const double total = x + y;
      auto ra = record({{"p", x, {}, {}}, {"q", y, {}, {}}});
      auto rb = record({{"pq", total, {}, {}}});
      a.push_back(aggregate_word(ra));
      b.push_back(aggregate_word(rb));
    }
    const double pa = corpus_ppl(a), pb = corpus_ppl(b);
    EXPECT_EQ(std::memcmp(&pa, &pb, sizeof pa), 0);
  }
}

TEST(Metric, NamesAndParsing) {
  EXPECT_EQ(Metric::surprisal().name(), "surprisal");
  EXPECT_EQ(Metric::shannon().name(), "shannon");
  EXPECT_EQ(Metric::renyi(0.5).name(), "renyi_0.5");
  EXPECT_EQ(parse_metric("renyi_0.5"), Metric::renyi(0.5));
  EXPECT_EQ(parse_metric("shannon"), Metric::shannon());
  EXPECT_THROW(parse_metric("renyi_-1"), Error);
  EXPECT_THROW(parse_metric("bogus"), Error);
}

std::vector<TokenRecord> three_tokens() {
  return {{{"d", 0, 0}, "The", 200, true, false}, {{"d", 0, 1}, "cat", 210, false, false}, {{"d", 0, 2}, "sat", 220, false, true}};
}

std::vector<ScoreDumpRecord> dump_for(const std::vector<TokenRecord>& tokens) {
  std::vector<ScoreDumpRecord> out;
  for (const auto& t : tokens) {
    auto r = record({{t.surface, -1.0, {}, {}}});
    r.key = t.key;
    r.surface = t.surface;
    out.push_back(r);
  }
  return out;
}

TEST(AlignDump, FullJoin) {
  auto tokens = three_tokens();
  auto dump = dump_for(tokens);
  std::reverse(dump.begin(), dump.end());
  auto joined = align_dump(dump, tokens);
  ASSERT_EQ(joined.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(joined[i].metrics.key, tokens[i].key);
}

TEST(AlignDump, MissingKeyIsNamed) {
  auto tokens = three_tokens();
  auto dump = dump_for(tokens);
  dump.erase(dump.begin() + 1);
  try {
    align_dump(dump, tokens);
    FAIL() << "expected a coverage error";
  } catch (const CoverageError& e) {
    ASSERT_EQ(e.missing().size(), 1u);
    EXPECT_EQ(e.missing()[0], "d:0:1");
  }
}

TEST(AlignDump, ExtraRecordIgnored) {
  auto tokens = three_tokens();
  auto dump = dump_for(tokens);
  auto extra = dump[0];
  extra.key = {"d", 1, 0};
  dump.push_back(extra);
  ASSERT_EQ(dump.size(), 4u);
  EXPECT_EQ(align_dump(dump, tokens).size(), 3u);
}

TEST(AlignDump, SurfaceMismatchNamesBothStrings) {
  auto tokens = three_tokens();
  auto dump = dump_for(tokens);
  dump[2].surface = "sit";
  try {
    align_dump(dump, tokens);
    FAIL() << "expected an alignment error";
  } catch (const AlignmentError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("sat"), std::string::npos);
    EXPECT_NE(what.find("sit"), std::string::npos);
  }
  dump[2].surface = " sat ";
  EXPECT_NO_THROW(align_dump(dump, tokens));
}

}  // namespace
}  // namespace ppp
