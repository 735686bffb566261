// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "chvt/corpus.hpp"
#include "chvt/synthetic.hpp"

using namespace chvt;
using namespace chvt::corpus;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("chvt_corpus_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Tokenizer, LowercasesAndSplitsPunctuation) {
  EXPECT_EQ(split_tokens("Hello there!"), (std::vector<std::string>{"hello", "there", "!"}));
  EXPECT_EQ(split_tokens("  it's   OK,fine. "), (std::vector<std::string>{"it", "'", "s", "ok", ",", "fine", "."}));
  EXPECT_TRUE(split_tokens("   ").empty());
  EXPECT_EQ(normalize("Hello there!"), "hello there !");
}

TEST(Vocab, ReservedIdsAndRoundTrip) {
  const Vocab v = Vocab::build({{"Hello there!", "hello you"}}, 100);
  EXPECT_EQ(v.token(kPad), "<pad>");
  EXPECT_EQ(v.token(kUnk), "<unk>");
  EXPECT_EQ(v.token(kBos), "<s>");
  EXPECT_EQ(v.token(kEos), "</s>");
  EXPECT_EQ(v.token(kSep), "<sep>");
  EXPECT_EQ(v.id("hello"), kReserved);  // most frequent first
  const auto ids = v.tokenize("Hello there!");
  EXPECT_EQ(v.detokenize(ids), "hello there !");
  EXPECT_EQ(v.tokenize("zebra")[0], kUnk);
  EXPECT_THROW(v.tokenize("  "), ContractError);
}

TEST(Vocab, FrequencyOrderWithLexicographicTies) {
  const Vocab v = Vocab::build({{"b a c", "c b"}, {"d", "c"}}, 100);
  // counts: c=3, b=2, a=1, d=1
  EXPECT_EQ(v.token(5), "c");
  EXPECT_EQ(v.token(6), "b");
  EXPECT_EQ(v.token(7), "a");
  EXPECT_EQ(v.token(8), "d");
  const Vocab capped = Vocab::build({{"b a c", "c b"}, {"d", "c"}}, 2);
  EXPECT_EQ(capped.size(), kReserved + 2);
  EXPECT_EQ(capped.id("a"), kUnk);
}

TEST(Vocab, SaveLoadPreservesIds) {
  const Vocab v = Vocab::build(synthetic::overfit_pairs(), 1000);
  const fs::path p = scratch("vocab.txt");
  v.save(p.string());
  const Vocab w = Vocab::load(p.string());
  EXPECT_EQ(v.tokens(), w.tokens());
  EXPECT_EQ(Vocab::from_tokens(v.tokens()).tokens(), v.tokens());
  fs::remove(p);
}

TEST(Vocab, DependsOnlyOnTheTrainingPairs) {
  std::vector<TextPair> pairs;
  for (int i = 0; i < 50; ++i) pairs.push_back({"ctx " + std::to_string(i), "resp " + std::to_string(i % 7)});
  const Splits a = dedupe_split(pairs, 0.8, 0.1, 0.1, 3);
  EXPECT_EQ(Vocab::build(a.train, 1000).tokens(), Vocab::build(a.train, 1000).tokens());
  Splits b = a;
  b.valid.push_back({"totally new words", "never seen"});
  EXPECT_EQ(Vocab::build(a.train, 1000).tokens(), Vocab::build(b.train, 1000).tokens());
}

TEST(ExtractPairs, AdjacentTurns) {
  ExtractStats st;
  const auto p = extract_pairs({{"u1", "u2", "u3"}, {"solo"}, {"a", "b"}}, &st);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].context, "u1");
  EXPECT_EQ(p[0].response, "u2");
  EXPECT_EQ(p[1].context, "u2");
  EXPECT_EQ(p[1].response, "u3");
  EXPECT_EQ(st.dialogues, 3u);
  EXPECT_EQ(st.skipped, 1u);
  std::vector<Dialogue> many(10, Dialogue{"a", "b", "c", "d"});
  EXPECT_EQ(extract_pairs(many).size(), 30u);
}

TEST(DedupeSplit, DisjointDeterministicAndDeduplicated) {
  std::vector<TextPair> pairs;
  for (int i = 0; i < 200; ++i) pairs.push_back({"Context " + std::to_string(i % 120), "reply " + std::to_string(i % 120)});
  pairs.push_back({"context 3", "REPLY 3"});  // duplicate after normalisation
  const Splits a = dedupe_split(pairs, 0.8, 0.1, 0.1, 42);
  const Splits b = dedupe_split(pairs, 0.8, 0.1, 0.1, 42);
  EXPECT_EQ(a.train.size() + a.valid.size() + a.test.size(), 120u);
  EXPECT_EQ(a.train.size(), 96u);
  EXPECT_EQ(a.valid.size(), 12u);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto* split : {&a.train, &a.valid, &a.test}) {
    for (const auto& p : *split) EXPECT_TRUE(seen.emplace(p.context, p.response).second);
  }
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].context, b.train[i].context);
  const Splits c = dedupe_split(pairs, 0.8, 0.1, 0.1, 43);
  bool differs = false;
  for (std::size_t i = 0; i < a.train.size(); ++i) differs = differs || a.train[i].context != c.train[i].context;
  EXPECT_TRUE(differs);
  EXPECT_THROW(dedupe_split(pairs, 0.8, 0.3, 0.1, 1), ContractError);
}

TEST(EncodePairs, TruncatesContextLeftAndResponseRight) {
  const Vocab v = Vocab::build({{"a b c d e f", "g h i j k l"}}, 100);
  EncodeStats st;
  const auto enc = encode_pairs({{"a b c d e f", "g h i j k l"}}, v, 3, &st);
  EXPECT_EQ(v.detokenize(enc[0].context_ids), "d e f");
  EXPECT_EQ(v.detokenize(enc[0].response_ids), "g h i");
  EXPECT_EQ(st.truncated_contexts, 1u);
  EXPECT_EQ(st.truncated_responses, 1u);
}

TEST(ReadDialogues, JsonLinesObjectsAndTsv) {
  const fs::path p = scratch("dialogues.jsonl");
  {
    std::ofstream out(p);
    out << R"(["hi", "hello", "how are you"])" << "\n";
    out << R"({"utterances": ["a", "b"]})" << "\n";
    out << "\n";
  }
  const auto d = read_dialogues(p.string());
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].size(), 3u);
  EXPECT_EQ(d[1][1], "b");
  const fs::path t = scratch("dialogues.tsv");
  {
    std::ofstream out(t);
    out << "one\ttwo\tthree\n";
  }
  const auto e = read_dialogues(t.string());
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0], (Dialogue{"one", "two", "three"}));
  EXPECT_THROW(read_dialogues((fs::temp_directory_path() / "chvt_missing_file").string()), std::runtime_error);
  fs::remove(p);
  fs::remove(t);
}

TEST(PairFiles, RoundTrip) {
  const fs::path p = scratch("pairs.tsv");
  const auto pairs = synthetic::overfit_pairs();
  write_pairs(p.string(), pairs);
  const auto back = read_pairs(p.string());
  ASSERT_EQ(back.size(), pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(back[i].context, pairs[i].context);
    EXPECT_EQ(back[i].response, pairs[i].response);
  }
  fs::remove(p);
}

TEST(Synthetic, TemplateCorpusHasEnoughUniquePairs) {
  const auto pairs = extract_pairs(synthetic::template_dialogues(1500, 1));
  const Splits s = dedupe_split(pairs, 1.0, 0.0, 0.0, 1);
  EXPECT_GE(s.train.size(), 2000u);
  EXPECT_EQ(synthetic::one_to_many_pairs().size(), 12u);
  EXPECT_EQ(synthetic::overfit_pairs().size(), 8u);
}
