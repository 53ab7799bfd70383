#include "ppp/score_dump.hpp"

#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace ppp {
namespace {

const char* kHeader =
    R"({"format":"ppp-score-dump","version":1,"model_id":"m","prompt_id":"none","detokenization":"sentencepiece","entropy_alphas":[0.5],"context":"intra_sentential"})";

ScoreDump parse(const std::string& s) {
  std::istringstream in(s);
  return read_score_dump(in, "mem");
}

TEST(Detokenize, Rules) {
  std::vector<SubwordScore> sp{{"\xE2\x96\x81" "ca", -1, {}, {}}, {"t", -1, {}, {}}};
  EXPECT_EQ(detokenize(sp, Detokenization::sentencepiece), "cat");
  EXPECT_EQ(detokenize(sp, Detokenization::concat), "\xE2\x96\x81" "cat");
  std::vector<SubwordScore> bpe{{"\xC4\xA0" "do", -1, {}, {}}, {"g", -1, {}, {}}};
  EXPECT_EQ(detokenize(bpe, Detokenization::gpt2), "dog");
}

TEST(ReadScoreDump, ParsesFixture) {
  auto d = load_score_dump(testing::data_path("small_dump.jsonl"));
  EXPECT_TRUE(d.warnings.empty());
  EXPECT_EQ(d.header.model_id, "toy");
  EXPECT_EQ(d.header.detokenization, Detokenization::gpt2);
  ASSERT_EQ(d.records.size(), 8u);
  const auto& black = d.records[1];
  EXPECT_EQ(black.surface, "black");
  ASSERT_EQ(black.subwords.size(), 2u);
  EXPECT_DOUBLE_EQ(black.subwords[1].logprob_nat, -1.1);
  EXPECT_DOUBLE_EQ(*black.subwords[0].shannon_nat, 1.1);
  EXPECT_DOUBLE_EQ(black.subwords[0].renyi_nat.at(0.5), 1.6);
  EXPECT_EQ(black.model_id, "toy");
  EXPECT_EQ(black.prompt_id, "none");
}

TEST(ReadScoreDump, MissingContextWarns) {
  auto d = load_score_dump(testing::data_path("small_dump_nocontext.jsonl"));
  ASSERT_EQ(d.warnings.size(), 1u);
  EXPECT_NE(d.warnings[0].find("intra_sentential"), std::string::npos);
  EXPECT_EQ(d.records.size(), 8u);
}

TEST(ReadScoreDump, Errors) {
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse(R"({"doc_id":"d","sent_id":0,"word_idx":0,"surface":"a","subwords":[{"piece":"a","logprob":-1}]})"),
               ParseError);
  const std::string h = std::string(kHeader) + "\n";
  EXPECT_THROW(parse(h + "not json\n"), ParseError);
  EXPECT_THROW(parse(h + R"({"doc_id":"d","sent_id":0,"word_idx":0,"surface":"a","subwords":[]})"), ParseError);
  EXPECT_THROW(parse(h + R"({"doc_id":"d","sent_id":0,"word_idx":0,"surface":"a","subwords":[{"piece":"a","logprob":0.5}]})"),
               ParseError);
  EXPECT_THROW(parse(h + R"({"doc_id":"d","sent_id":0,"word_idx":0,"surface":"ab","subwords":[{"piece":"a","logprob":-1}]})"),
               ParseError);
  EXPECT_THROW(parse(h + R"({"doc_id":"d","sent_id":0,"word_idx":0,"surface":"a","model_id":"x","subwords":[{"piece":"a","logprob":-1}]})"),
               ParseError);
  EXPECT_THROW(parse(R"({"format":"other","model_id":"m"})"), ParseError);
  EXPECT_THROW(parse(R"({"format":"ppp-score-dump","version":2,"model_id":"m"})"), ParseError);
  try {
    parse(h + "\n" + R"({"doc_id":"d","sent_id":0})");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ReadScoreDump, BareHeaderWarnsPerMissingField) {
  auto d = parse(R"({"model_id":"m"})");
  EXPECT_EQ(d.warnings.size(), 4u);
  EXPECT_EQ(d.header.detokenization, Detokenization::concat);
}

TEST(WriteScoreDump, RoundTrips) {
  auto d = load_score_dump(testing::data_path("small_dump.jsonl"));
  d.records[0].dep_len = 2.0;
  std::ostringstream out;
  write_score_dump(out, d);
  auto back = parse(out.str());
  ASSERT_EQ(back.records.size(), d.records.size());
  EXPECT_TRUE(back.warnings.empty());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& a = d.records[i];
    const auto& b = back.records[i];
    EXPECT_EQ(a.key, b.key);
    EXPECT_EQ(a.surface, b.surface);
    ASSERT_EQ(a.subwords.size(), b.subwords.size());
    for (std::size_t j = 0; j < a.subwords.size(); ++j) {
      EXPECT_EQ(a.subwords[j].piece, b.subwords[j].piece);
      EXPECT_EQ(a.subwords[j].logprob_nat, b.subwords[j].logprob_nat);
      EXPECT_EQ(a.subwords[j].shannon_nat, b.subwords[j].shannon_nat);
      EXPECT_EQ(a.subwords[j].renyi_nat, b.subwords[j].renyi_nat);
    }
  }
  EXPECT_EQ(*back.records[0].dep_len, 2.0);
  std::ostringstream again;
  write_score_dump(again, back);
  EXPECT_EQ(out.str(), again.str());
}

}  // namespace
}  // namespace ppp
