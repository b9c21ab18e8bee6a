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

#include <cmath>
#include <string>
#include <vector>

#include "selattack/cache.hpp"
#include "selattack/constraint.hpp"
#include "selattack/mock.hpp"
#include "selattack/transform.hpp"
#include "support/testing.hpp"

using namespace selattack;
using selattack::testing::make_item;
using selattack::testing::TempDir;

namespace {

// Encoder with hand-placed vectors.
class TableEncoder final : public SentenceEncoder {
 public:
  std::map<std::string, std::vector<double>> table;
  std::vector<double> encode(std::string_view text) override { return table.at(std::string(text)); }
};

Verdict verdict(const std::string& model, std::optional<std::size_t> letter, std::size_t gold) {
  Verdict v;
  v.item_id = "i";
  v.model = model;
  v.letter = letter;
  v.correct = letter && *letter == gold;
  return v;
}

Edit sub(std::string before, std::string after, Span span = {0, 0}) {
  if (span.empty()) span = {0, before.size()};
  return {EditKind::kWordEmbedSub, Field::kQuestion, span, std::move(before), std::move(after)};
}

}  // namespace

TEST(Semantic, IdenticalAndOrthogonal) {
  TableEncoder enc;
  enc.table = {{"x", {1, 0}}, {"y", {0, 1}}};
  const auto same = check_semantic("x", "x", 1.0, enc);
  EXPECT_TRUE(same.pass);
  EXPECT_DOUBLE_EQ(same.cosine, 1.0);
  const auto orth = check_semantic("x", "y", 0.01, enc);
  EXPECT_FALSE(orth.pass);
  EXPECT_DOUBLE_EQ(orth.cosine, 0.0);
  EXPECT_TRUE(check_semantic("x", "y", 0.0, enc).pass);
}

// Bag-of-words cosine by hand: 3 / sqrt(3 * 4).
TEST(Semantic, BagOfWordsFixture) {
  auto enc = make_mock_encoder("bow");
  const auto v = check_semantic("the cat sat", "the cat sat down", 0.8, *enc);
  EXPECT_NEAR(v.cosine, 0.8660254037844386, 1e-15);
  EXPECT_TRUE(v.pass);
  EXPECT_FALSE(check_semantic("the cat sat", "the cat sat down", 0.9, *enc).pass);
}

TEST(Grammar, LexiconRules) {
  auto tagger = LexiconTagger::builtin();
  EXPECT_TRUE(check_grammatical(sub("height", "altitude"), tagger).pass);
  tagger.add("run", "VERB");
  tagger.add("blue", "ADJ");
  const auto bad = check_grammatical(sub("run", "blue"), tagger);
  EXPECT_FALSE(bad.pass);
  EXPECT_EQ(bad.original_tag, "VERB");
  EXPECT_EQ(bad.replacement_tag, "ADJ");
  const Edit ch{EditKind::kCharSwap, Field::kQuestion, {0, 3}, "run", "urn"};
  const auto c = check_grammatical(ch, tagger);
  EXPECT_TRUE(c.pass);
  EXPECT_FALSE(c.applicable);
  const auto unk = check_grammatical(sub("height", "zorblax"), tagger);
  EXPECT_TRUE(unk.pass);
  EXPECT_TRUE(unk.unknown_word);
}

TEST(Grammar, LexiconFileOverridesBuiltin) {
  TempDir dir;
  write_file(dir / "lex.tsv", "# comment\nblue\tNOUN\nzorblax\tNOUN\n");
  const auto t = LexiconTagger::load(dir / "lex.tsv", LexiconTagger::builtin());
  EXPECT_EQ(t.tag("Blue"), "NOUN");
  EXPECT_EQ(t.tag("the"), "DET");
  EXPECT_TRUE(check_grammatical(sub("height", "zorblax"), t).pass);
  EXPECT_FALSE(check_grammatical(sub("height", "zorblax"), t).unknown_word);
  write_file(dir / "bad.tsv", "lonely\n");
  EXPECT_THROW(LexiconTagger::load(dir / "bad.tsv"), ParseError);
}

TEST(Overlap, FractionArithmetic) {
  const std::string a = "one two three four five six seven eight nine ten";
  const std::string b = "one two three four five six seven eight nine tan";
  const auto v = check_overlap(a, b, {0.2, 2});
  EXPECT_TRUE(v.pass);
  EXPECT_DOUBLE_EQ(v.fraction, 0.1);
  EXPECT_EQ(v.changed_words, 1u);
  const auto three = check_overlap(a, "uno dos tres four five six seven eight nine ten", {0.2, std::nullopt});
  EXPECT_FALSE(three.pass);
  EXPECT_DOUBLE_EQ(three.fraction, 0.3);
}

TEST(Overlap, TranspositionCountsOnce) {
  EXPECT_EQ(damerau_levenshtein("answer", "asnwer"), 1u);
  const auto v = check_overlap("the answer is", "the asnwer is", {0.5, 2});
  EXPECT_TRUE(v.pass);
  EXPECT_EQ(v.max_distance, 1u);
  const auto far = check_overlap("the answer is", "the xxswer is", {0.5, 1});
  EXPECT_FALSE(far.pass);
  EXPECT_EQ(far.max_distance, 2u);
}

TEST(Overlap, LimitsDependOnEditKind) {
  OverlapConstraint c;
  EXPECT_TRUE(overlap_limits_for(c, EditKind::kCharInsert).max_levenshtein_per_word.has_value());
  EXPECT_FALSE(overlap_limits_for(c, EditKind::kWordMaskfillSub).max_levenshtein_per_word.has_value());
  EXPECT_FALSE(overlap_limits_for(c, EditKind::kWordDelete).max_levenshtein_per_word.has_value());
}

TEST(Overlap, SameSpanTwiceIsRedundant) {
  const std::string text = "alpha beta gamma delta epsilon";
  TouchedRegions touched;
  const Edit first{EditKind::kWordMaskfillSub, Field::kQuestion, {6, 10}, "beta", "bravo"};
  EXPECT_FALSE(check_overlap(text, apply_edit(text, first), {1.0, std::nullopt}, &first, &touched).redundant);
  touched.commit(first);
  const std::string now = apply_edit(text, first);
  const Edit again{EditKind::kCharSwap, Field::kQuestion, {6, 11}, "bravo", "rbavo"};
  const auto v = check_overlap(text, apply_edit(now, again), {1.0, std::nullopt}, &again, &touched);
  EXPECT_TRUE(v.redundant);
  EXPECT_FALSE(v.pass);
  // The neighbouring word, shifted by the committed edit, is still free.
  const Edit next{EditKind::kWordMaskfillSub, Field::kQuestion, {12, 17}, "gamma", "golf"};
  EXPECT_FALSE(touched.overlaps(Field::kQuestion, next.span));
  EXPECT_FALSE(touched.overlaps(Field::kSystemInstruction, {6, 11}));
}

TEST(Overlap, RegionsShiftAfterEarlierEdits) {
  TouchedRegions t;
  t.commit({EditKind::kWordMaskfillSub, Field::kQuestion, {10, 14}, "four", "quattro"});
  t.commit({EditKind::kWordDelete, Field::kQuestion, {0, 4}, "one ", ""});
  // "quattro" moved from [10,17) to [6,13).
  EXPECT_TRUE(t.overlaps(Field::kQuestion, {6, 8}));
  EXPECT_FALSE(t.overlaps(Field::kQuestion, {13, 15}));
  // The deletion left a zero-width region at 0; a span strictly containing it overlaps.
  EXPECT_FALSE(t.overlaps(Field::kQuestion, {0, 3}));
  EXPECT_TRUE(t.overlaps(Field::kQuestion, {0, 0}));
}

TEST(Pretransform, OptionsAndMarkersExcluded) {
  auto item = make_item("i", "Answer: what is the height?", {"tall", "short"}, 0);
  const auto mask = editable_mask(item, PretransformConstraint{});
  std::vector<std::string> editable;
  for (const auto& t : mask) editable.push_back(item.question.substr(t.span.begin, t.span.size()));
  EXPECT_EQ(editable, (std::vector<std::string>{"what", "is", "the", "height"}));
  for (const auto& t : mask) EXPECT_EQ(t.field, Field::kQuestion);
  EXPECT_EQ(mask[0].token_index, 1u);
  // A word "answer" without the colon stays editable.
  auto plain = make_item("j", "the answer is", {"a", "b"}, 0);
  EXPECT_EQ(editable_mask(plain, PretransformConstraint{}).size(), 3u);
}

TEST(Pretransform, ProtectedTokensAndInstructionField) {
  TempDir dir;
  write_file(dir / "protect.txt", "# stop words\nthe\nof\n");
  PretransformConstraint c;
  c.protected_tokens = load_protected_tokens(dir / "protect.txt");
  auto item = make_item("i", "the height of the tower", {"a", "b"}, 0);
  EXPECT_EQ(editable_mask(item, c).size(), 2u);
  item.system_instruction = "";
  EXPECT_EQ(editable_mask(item, c).size(), 2u);
  item.system_instruction = "Answer briefly";
  const auto mask = editable_mask(item, c);
  ASSERT_EQ(mask.size(), 4u);
  EXPECT_EQ(mask[2].field, Field::kSystemInstruction);
}

TEST(Selective, RuleTable) {
  const VerdictMap base{{"r1", verdict("r1", 0, 0)}, {"r2", verdict("r2", 2, 0)}};
  const auto invalid = verdict("t", std::nullopt, 0);
  // INVALID target, references correct.
  EXPECT_TRUE(selective_pass(invalid, {verdict("r1", 0, 0)}, base, ReferenceMode::kPreserveCorrect,
                             SelectiveDirection::kDegrade));
  // Target still correct.
  EXPECT_FALSE(selective_pass(verdict("t", 0, 0), {verdict("r1", 0, 0)}, base,
                              ReferenceMode::kPreserveCorrect, SelectiveDirection::kDegrade));
  // r2 was wrong at baseline and repeats the same wrong letter.
  const std::vector<Verdict> refs{verdict("r1", 0, 0), verdict("r2", 2, 0)};
  EXPECT_TRUE(selective_pass(invalid, refs, base, ReferenceMode::kPreserveResponse,
                             SelectiveDirection::kDegrade));
  EXPECT_FALSE(selective_pass(invalid, refs, base, ReferenceMode::kPreserveCorrect,
                              SelectiveDirection::kDegrade));
  // Improvement direction wants the target correct.
  EXPECT_TRUE(selective_pass(verdict("t", 0, 0), {verdict("r1", 0, 0)}, base,
                             ReferenceMode::kPreserveCorrect, SelectiveDirection::kImprove));
  EXPECT_THROW(selective_pass(invalid, {verdict("zz", 0, 0)}, base, ReferenceMode::kPreserveCorrect,
                              SelectiveDirection::kDegrade),
               ValidationError);
}

TEST(Selective, EvaluatesCandidateOnAllModels) {
  const auto item = make_item("i", "What is the height of the tower?", {"a", "b", "c", "d"}, 0);
  Evaluator target("t", make_mock("keyword:altitude->B"), ScoreMode::kLogprob, {});
  Evaluator r1("r1", make_mock("always-gold"), ScoreMode::kLogprob, {});
  Evaluator r2("r2", make_mock("keyword:altitude->C"), ScoreMode::kLogprob, {});
  const VerdictMap base{{"r1", r1.evaluate(item)}, {"r2", r2.evaluate(item)}};
  PerturbedItem p = identity_perturbation(item);
  p.question = "What is the altitude of the tower?";
  const auto ok = check_selective(item, p, target, {&r1}, base, ReferenceMode::kPreserveCorrect);
  EXPECT_TRUE(ok.pass);
  EXPECT_EQ(ok.target.letter, 1u);
  const auto bad = check_selective(item, p, target, {&r1, &r2}, base, ReferenceMode::kPreserveCorrect);
  EXPECT_FALSE(bad.pass);
  ASSERT_EQ(bad.references.size(), 2u);
  EXPECT_EQ(bad.references[1].letter, 2u);
}

TEST(Constraints, JsonRoundTripAndValidation) {
  ConstraintSet c;
  c.semantic.threshold = 0.7;
  c.overlap.enabled = false;
  c.pretransform.protected_tokens = {"the"};
  c.selective.reference_mode = ReferenceMode::kPreserveResponse;
  const Json j = constraints_to_json(c);
  const auto back = constraints_from_json(j);
  EXPECT_EQ(constraints_to_json(back), j);
  Json bad = j;
  bad["semantic"]["threshold"] = 1.5;
  EXPECT_THROW(constraints_from_json(bad), Error);
  Json options_editable = j;
  options_editable["pretransform"]["protected_fields"] = Json::array();
  EXPECT_THROW(constraints_from_json(options_editable), Error);
}

TEST(CheapChecks, OrderAndShortCircuit) {
  ConstraintSet c;
  auto enc = make_mock_encoder("bow");
  auto tagger = LexiconTagger::builtin();
  tagger.add("blue", "ADJ");
  TouchedRegions touched;
  const CheapCheckContext ctx{&c, enc.get(), &tagger, &touched};
  const std::string text = "what is the height of this old stone tower";
  const auto good = make_candidate("i", Field::kQuestion, text, EditKind::kWordMaskfillSub,
                                   {12, 18}, "altitude");
  const auto log = check_cheap(text, good, ctx);
  EXPECT_TRUE(log.admissible());
  ASSERT_TRUE(log.semantic.has_value());
  EXPECT_NEAR(log.semantic->cosine, 8.0 / 9.0, 1e-12);

  const auto wrong_pos = make_candidate("i", Field::kQuestion, text, EditKind::kWordMaskfillSub,
                                        {12, 18}, "blue");
  const auto l2 = check_cheap(text, wrong_pos, ctx);
  EXPECT_FALSE(l2.admissible());
  EXPECT_FALSE(l2.overlap.has_value());
  EXPECT_FALSE(l2.semantic.has_value());

  // Overlap disabled still rejects re-editing a touched span.
  c.overlap.enabled = false;
  touched.commit(good.edit);
  const auto l3 = check_cheap(text, make_candidate("i", Field::kQuestion, good.text,
                                                   EditKind::kCharSwap, {12, 14}, "la"),
                              ctx);
  ASSERT_TRUE(l3.overlap.has_value());
  EXPECT_TRUE(l3.overlap->redundant);
  const Json j = constraint_log_to_json(l3);
  EXPECT_EQ(j["admissible"], false);
}
