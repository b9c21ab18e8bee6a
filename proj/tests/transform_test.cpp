// Copyright 2026 The selattack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "selattack/mock.hpp"
#include "selattack/transform.hpp"
#include "support/testing.hpp"

using namespace selattack;
using selattack::testing::for_all;
using selattack::testing::make_item;
using selattack::testing::TempDir;

namespace {

std::vector<std::string> texts_of(const std::vector<CandidatePerturbation>& cs, EditKind kind) {
  std::vector<std::string> out;
  for (const auto& c : cs) {
    if (c.edit.kind == kind) out.push_back(c.text);
  }
  return out;
}

class FixedFiller final : public MaskFiller {
 public:
  explicit FixedFiller(std::vector<MaskFill> fills) : fills_(std::move(fills)) {}
  std::vector<MaskFill> fill(const MaskRequest& r) override {
    last = r;
    return fills_;
  }
  MaskRequest last;

 private:
  std::vector<MaskFill> fills_;
};

class ListGenerator final : public TextGenerator {
 public:
  explicit ListGenerator(std::vector<std::string> outputs) : outputs_(std::move(outputs)) {}
  std::string generate(const GenerationRequest& r) override {
    requests.push_back(r);
    return outputs_[r.sample_index % outputs_.size()];
  }
  std::vector<GenerationRequest> requests;

 private:
  std::vector<std::string> outputs_;
};

}  // namespace

TEST(CharEdits, SwapsAndDeletesEnumeratedByHand) {
  const auto cs = char_edits("answer", 0, 7);
  EXPECT_EQ(texts_of(cs, EditKind::kCharSwap),
            (std::vector<std::string>{"naswer", "asnwer", "anwser", "ansewr", "answre"}));
  EXPECT_EQ(texts_of(cs, EditKind::kCharDelete),
            (std::vector<std::string>{"nswer", "aswer", "anwer", "anser", "answr", "answe"}));
}

TEST(CharEdits, InsertionsAndSubstitutionsUseKeyboardNeighbours) {
  const std::string word = "answer";
  const auto layout = KeyboardLayout::qwerty();
  const auto cs = char_edits(word, 0, 7);
  for (const auto& c : cs) {
    const auto pos = c.provenance["position"].get<std::size_t>();
    if (c.edit.kind == EditKind::kCharInsert) {
      ASSERT_EQ(c.text.size(), word.size() + 1);
      const char anchor = pos < word.size() ? word[pos] : word[pos - 1];
      EXPECT_NE(layout.neighbors(anchor).find(c.text[pos]), std::string_view::npos) << c.text;
      EXPECT_EQ(c.text.substr(0, pos) + c.text.substr(pos + 1), word);
    } else if (c.edit.kind == EditKind::kCharSubstitute) {
      ASSERT_EQ(c.text.size(), word.size());
      EXPECT_NE(layout.neighbors(word[pos]).find(c.text[pos]), std::string_view::npos) << c.text;
    }
  }
  std::set<std::string> unique;
  for (const auto& c : cs) unique.insert(c.text);
  EXPECT_EQ(unique.size(), cs.size());
  EXPECT_EQ(unique.count(word), 0u);
}

TEST(CharEdits, OneLetterWordOnlyInsertsAndSubstitutes) {
  const auto cs = char_edits("a", 0, 7);
  ASSERT_FALSE(cs.empty());
  for (const auto& c : cs) {
    EXPECT_TRUE(c.edit.kind == EditKind::kCharInsert || c.edit.kind == EditKind::kCharSubstitute);
  }
}

TEST(CharEdits, DeterministicPerSeed) {
  const std::string text = "The quick brown fox jumps";
  for (std::size_t t = 0; t < 5; ++t) {
    const auto a = char_edits(text, t, 42);
    const auto b = char_edits(text, t, 42);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].text, b[i].text);
  }
  // Different seeds should change at least one randomized edit somewhere.
  bool differs = false;
  for (std::uint64_t s = 1; s < 20 && !differs; ++s) {
    const auto a = char_edits(text, 1, 0);
    const auto b = char_edits(text, 1, s);
    std::vector<std::string> ta, tb;
    for (const auto& c : a) ta.push_back(c.text);
    for (const auto& c : b) tb.push_back(c.text);
    differs = ta != tb;
  }
  EXPECT_TRUE(differs);
}

TEST(CharEdits, PreservesCaseAndSkipsNonAscii) {
  for (const auto& c : char_edits("Zebra", 0, 3)) {
    if (c.edit.kind == EditKind::kCharSubstitute && c.provenance["position"] == 0) {
      EXPECT_TRUE(std::isupper(static_cast<unsigned char>(c.text[0]))) << c.text;
    }
  }
  EXPECT_TRUE(char_edits("caf\xC3\xA9 noir", 0, 3).empty());
  EXPECT_THROW(char_edits("one two", 5, 1), ValidationError);
}

TEST(CharEdits, CustomLayoutFile) {
  TempDir dir;
  write_file(dir / "kb.tsv", "a\tz\nb\ty\n");
  const auto layout = KeyboardLayout::load(dir / "kb.tsv");
  const auto cs = char_edits("ab", 0, 1, layout);
  EXPECT_EQ(texts_of(cs, EditKind::kCharSubstitute), (std::vector<std::string>{"zb", "ay"}));
  write_file(dir / "bad.tsv", "ab c\n");
  EXPECT_THROW(KeyboardLayout::load(dir / "bad.tsv"), ParseError);
}

TEST(CharEdits, EveryCandidateIsWithinEditDistanceOne) {
  const auto why = for_all(1000, 31, [](std::mt19937_64& rng) -> std::string {
    const std::string w = selattack::testing::random_string(rng, "abcdeqwxyz", 8);
    if (w.empty()) return {};
    for (const auto& c : char_edits(w, 0, rng())) {
      if (c.edit.before != w) return "edit does not cover the word";
      if (c.text == w) return "null edit emitted";
      if (std::abs(static_cast<long>(c.text.size()) - static_cast<long>(w.size())) > 1) return "length";
    }
    return {};
  });
  EXPECT_TRUE(why.empty()) << why;
}

TEST(Embed, KZeroAndIdenticalVectors) {
  StaticEmbeddingTable t;
  t.add("tall", {1, 0});
  t.add("high", {2, 0});
  t.add("short", {0, 1});
  EXPECT_TRUE(embed_substitutions("a tall tree", 1, 0, t).empty());
  const auto n = nearest_neighbors(t, "tall", 2);
  ASSERT_EQ(n.size(), 2u);
  EXPECT_EQ(n[0].word, "high");
  EXPECT_DOUBLE_EQ(n[0].cosine, 1.0);
}

// Expected order from brute-force cosines over the table:
// queen 0.9939, prince 0.7071, then apple and pear tied at 0 (by word).
TEST(Embed, ToyTableNeighbourOrder) {
  TempDir dir;
  write_file(dir / "emb.tsv",
             "king\t1 0 0\nqueen\t0.9 0.1 0\nprince\t0.7,0.7,0\napple\t0 0 1\npear\t0 0.1 0.9\n");
  auto t = StaticEmbeddingTable::load(dir / "emb.tsv");
  const auto cs = embed_substitutions("The King rules", 1, 4, t);
  std::vector<std::string> got;
  for (const auto& c : cs) got.push_back(c.edit.after);
  EXPECT_EQ(got, (std::vector<std::string>{"Queen", "Prince", "Apple", "Pear"}));
  EXPECT_EQ(cs[0].text, "The Queen rules");
  EXPECT_EQ(cs[0].edit.kind, EditKind::kWordEmbedSub);
  EXPECT_EQ(cs[1].provenance["knn_rank"], 1);
}

TEST(Embed, EncoderBackedVocabulary) {
  auto enc = make_mock_encoder("bow");
  EncoderEmbeddings e(enc, {"alpha", "beta"});
  // Bag-of-words vectors of distinct single words are orthogonal.
  const auto n = nearest_neighbors(e, "alpha", 5);
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n[0].word, "beta");
  EXPECT_DOUBLE_EQ(n[0].cosine, 0.0);
}

TEST(MaskFill, ScoreOrderAndFilters) {
  FixedFiller f({{"height", 0.2}, {"altitude", 0.5}, {"peak", 0.7}, {"12", 0.9}, {"Peak", 0.1}});
  const auto cs = maskfill_substitutions("What is the height of it", 3, 5, f);
  std::vector<std::string> got;
  for (const auto& c : cs) got.push_back(c.edit.after);
  EXPECT_EQ(got, (std::vector<std::string>{"peak", "altitude"}));
  EXPECT_EQ(f.last.masked_text, "What is the <mask> of it");
  EXPECT_EQ(f.last.original_word, "height");
  const auto one = maskfill_substitutions("What is the height of it", 3, 1, f);
  EXPECT_EQ(one.size(), 1u);
  EXPECT_TRUE(maskfill_substitutions("What is the height", 3, 0, f).empty());
}

TEST(MaskFill, MockFillsInScoreOrder) {
  MockMaskFiller f("fills:peak,altitude,height");
  const auto cs = maskfill_substitutions("the summit height", 1, 3, f);
  std::vector<std::string> got;
  for (const auto& c : cs) got.push_back(c.edit.after);
  EXPECT_EQ(got, (std::vector<std::string>{"peak", "altitude", "height"}));
  // "height" equals the masked word at index 2 and is dropped there.
  EXPECT_EQ(maskfill_substitutions("the summit height", 2, 3, f).size(), 2u);
}

TEST(Reduction, OneCandidatePerWordAndReinsertion) {
  const std::string q = "Why is sky blue?";
  const auto cs = input_reduction(q);
  ASSERT_EQ(cs.size(), 4u);
  EXPECT_EQ(cs[0].text, "is sky blue?");
  EXPECT_EQ(cs[1].text, "Why sky blue?");
  EXPECT_EQ(cs[3].text, "Why is sky?");
  for (const auto& c : cs) {
    EXPECT_EQ(replace_span(c.text, {c.edit.span.begin, c.edit.span.begin}, c.edit.before), q);
  }
}

TEST(Reduction, ReinsertionPropertyAndFilter) {
  const auto why = for_all(1000, 32, [](std::mt19937_64& rng) -> std::string {
    const std::string q = selattack::testing::random_string(rng, "ab  ,?", 14);
    for (const auto& c : input_reduction(q)) {
      if (replace_span(c.text, {c.edit.span.begin, c.edit.span.begin}, c.edit.before) != q) {
        return "reinsertion failed for '" + q + "'";
      }
      if (words(c.text).size() + 1 != words(q).size()) return "not exactly one word removed";
    }
    return {};
  });
  EXPECT_TRUE(why.empty()) << why;
  const std::string q = "the cat and the dog";
  const std::set<std::string> stop{"the", "and"};
  const auto cs = input_reduction(q, [&](Span s) { return !stop.count(q.substr(s.begin, s.size())); });
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(cs[0].text, "the and the dog");
  EXPECT_TRUE(input_reduction("single").empty());
}

TEST(Paraphrase, DistinctSamplesAreKept) {
  const auto item = make_item("iot", "Which of the following is an example of the use of a device on the Internet of Things (IoT) ?",
                              {"a", "b", "c", "d"}, 0);
  ListGenerator g({
      "Which device below is an example of Internet of Things (IoT) technology in use?",
      "Which example below illustrates the application of a device in the Internet of Things (IoT)?",
      "Which example below demonstrates the application of a device within the Internet of Things (IoT) ecosystem?",
      "Which device below exemplifies the application of the Internet of Things (IoT)?",
      "Which example below demonstrates the application of a device in the Internet of Things (IoT)?",
  });
  const auto batch = paraphrase_candidates(item, 5, g, {0.3, 256, 100});
  EXPECT_EQ(batch.candidates.size(), 5u);
  EXPECT_TRUE(batch.rejected.empty());
  ASSERT_EQ(g.requests.size(), 5u);
  EXPECT_EQ(g.requests[0].system, std::string(kParaphraseSystemPrompt));
  EXPECT_EQ(g.requests[0].user, item.question);
  EXPECT_EQ(g.requests[3].seed, 103u);
  EXPECT_DOUBLE_EQ(g.requests[0].temperature, 0.3);
  for (const auto& c : batch.candidates) {
    EXPECT_EQ(c.edit.kind, EditKind::kParaphrase);
    EXPECT_EQ(c.edit.before, item.question);
  }
}

TEST(Paraphrase, DuplicatesCollapseWithMultiplicity) {
  const auto item = make_item("trip", "Large triplet repeat expansions can be detected by", {"a", "b"}, 0);
  ListGenerator g({
      "How can large triplet repeat expansions be identified?",
      "How can large triplet repeat expansions be identified?",
      "How can large triplet repeat expansions be identified?",
      "What methods can be used to identify large triplet repeat expansions?",
      "How can large triplet repeat expansions be identified?",
  });
  const auto batch = paraphrase_candidates(item, 5, g, {});
  ASSERT_EQ(batch.candidates.size(), 2u);
  EXPECT_EQ(batch.candidates[0].provenance["multiplicity"], 4);
  EXPECT_EQ(batch.candidates[0].provenance["sample_indices"], Json::array({0, 1, 2, 4}));
  EXPECT_EQ(batch.candidates[1].provenance["multiplicity"], 1);
}

TEST(Paraphrase, EchoIsNullEdit) {
  const auto item = make_item("e", "Is this unchanged?", {"a", "b"}, 0);
  MockGenerator echo("echo");
  const auto batch = paraphrase_candidates(item, 1, echo, {});
  ASSERT_EQ(batch.candidates.size(), 1u);
  EXPECT_TRUE(batch.candidates[0].null_edit);
  EXPECT_EQ(batch.candidates[0].text, item.question);
  EXPECT_THROW(paraphrase_candidates(item, 0, echo, {}), ValidationError);
}

TEST(Paraphrase, AnswersAndEmptyOutputsAreRejected) {
  const auto item = make_item("r", "Which gas do plants absorb?", {"O2", "CO2"}, 1);
  ListGenerator g({"B", "The answer is B) CO2", "(b)", "", "Which gas is taken in by plants?",
                   "Answer: CO2", "A. Oxygen"});
  const auto batch = paraphrase_candidates(item, 7, g, {});
  ASSERT_EQ(batch.candidates.size(), 1u);
  EXPECT_EQ(batch.candidates[0].text, "Which gas is taken in by plants?");
  ASSERT_EQ(batch.rejected.size(), 6u);
  EXPECT_EQ(batch.rejected[3].reason, "empty output");
  EXPECT_NE(batch.rejected[0].reason.find("answers"), std::string::npos);
  EXPECT_FALSE(looks_like_answer("A device that measures air pressure is called what?"));
  EXPECT_FALSE(looks_like_answer("Answering machines record what kind of signal?"));
}

TEST(Sources, DelegateToGenerators) {
  const std::string text = "tall towers";
  const Span w = word_at(text, 0);
  CharEditSource chars(5);
  EXPECT_EQ(chars.generate("id", Field::kQuestion, text, w).size(),
            char_edits(text, 0, 5).size());
  ReductionSource red;
  const auto r = red.generate("id", Field::kQuestion, text, w);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].text, "towers");
  EXPECT_EQ(r[0].base_id, "id");
  auto filler = std::make_shared<MockMaskFiller>("fills:high,tall");
  MaskFillSource mf(filler, 4);
  const auto m = mf.generate("id", Field::kQuestion, text, w);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].text, "high towers");
}
