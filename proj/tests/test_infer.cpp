#include <gtest/gtest.h>

#include "util.hpp"
#include "vlr/infer.hpp"
#include "vlr/render.hpp"
#include "vlr/vision.hpp"

using namespace vlr;

namespace {

// Language head that always prefers `token`.
void force_token(Model& m, TokenId token) {
  m.params().get("lm.w").value.setZero();
  auto& b = m.params().get("lm.b").value;
  b.setZero();
  b(0, token) = 50.0;
}

DecodePolicy greedy() {
  DecodePolicy p;
  p.kind = DecodePolicy::Kind::Greedy;
  return p;
}

}  // namespace

TEST(DecodeToken, GreedyTieLowestId) {
  RowVec l(4);
  l << 1.0, 3.0, 3.0, 0.0;
  Rng rng(0);
  EXPECT_EQ(decode_token(l, greedy(), rng), 1);
}

TEST(DecodeToken, NucleusExcludesTail) {
  RowVec l(3);
  l << std::log(0.5), std::log(0.45), std::log(0.05);
  Rng rng(1);
  DecodePolicy p;
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 4000; ++i) ++counts[decode_token(l, p, rng)];
  EXPECT_EQ(counts[2], 0);
  EXPECT_GT(counts[0], counts[1]);
  EXPECT_GT(counts[1], 1000);
}

TEST(Reason, ImmediateSeparator) {
  Vocabulary vocab;
  Model m(tu::small_model(32), 1);
  force_token(m, Vocabulary::kSepReason);
  Rng rng(0);
  const ReasonResult r = reason(m, vocab.tokenize("3+4", true), 6, greedy(), Modeling::Probabilistic, rng);
  EXPECT_EQ(r.steps_taken, 0);
  EXPECT_TRUE(r.history.empty());
  EXPECT_FALSE(r.truncated);
}

TEST(Reason, NeverSeparatorTruncates) {
  Vocabulary vocab;
  Model m(tu::small_model(32), 1);
  force_token(m, 9);
  Rng rng(0);
  const ReasonResult r = reason(m, vocab.tokenize("3+4", true), 6, greedy(), Modeling::Probabilistic, rng);
  EXPECT_EQ(r.steps_taken, 6);
  EXPECT_EQ(r.history.size(), 6u);
  EXPECT_TRUE(r.truncated);
}

TEST(Reason, GreedyDeterministic) {
  Vocabulary vocab;
  Model m(tu::small_model(32), 1);
  const TokenSeq q = vocab.tokenize("3+4; then *2", true);
  Rng a(0), b(0);
  const ReasonResult ra = reason(m, q, 5, greedy(), Modeling::Deterministic, a);
  const ReasonResult rb = reason(m, q, 5, greedy(), Modeling::Deterministic, b);
  ASSERT_EQ(ra.steps_taken, rb.steps_taken);
  for (std::size_t i = 0; i < ra.history.size(); ++i) EXPECT_EQ(ra.history[i].z, rb.history[i].z);
}

TEST(Answer, EosFirstIsEmpty) {
  Vocabulary vocab;
  Model m(tu::small_model(32), 1);
  force_token(m, Vocabulary::kEos);
  Rng rng(0);
  EXPECT_TRUE(answer(m, vocab.tokenize("3+4", true), {}, greedy(), rng, 8).empty());
}

TEST(Answer, LengthBounded) {
  Vocabulary vocab;
  Model m(tu::small_model(32), 1);
  force_token(m, 12);
  Rng rng(0);
  EXPECT_EQ(answer(m, vocab.tokenize("3+4", true), {}, greedy(), rng, 5).size(), 5u);
}

TEST(InferConfig, Defaults) {
  const InferConfig c = InferConfig::from_json(nlohmann::json::object());
  EXPECT_EQ(c.decode.kind, DecodePolicy::Kind::Sample);
  EXPECT_DOUBLE_EQ(c.decode.top_p, 0.9);
  EXPECT_DOUBLE_EQ(c.decode.temperature, 1.0);
  EXPECT_EQ(c.to_json()["top_p"], 0.9);
  EXPECT_EQ(resolve_k_max(c, 3), 6);
  InferConfig d = c;
  d.k_max = 4;
  EXPECT_EQ(resolve_k_max(d, 3), 4);
}

TEST(ReasonAndAnswer, TerminatorFirst) {
  Vocabulary vocab;
  for (int i = 0; i < 40; ++i) vocab.add(std::to_string(i));
  Model m(tu::small_model(static_cast<int>(vocab.size())), 1);
  force_token(m, Vocabulary::kSepReason);
  Rng rng(0);
  const InferResult r = reason_and_answer(m, vocab, vocab.tokenize("3+4"), InferConfig{}, Modeling::Probabilistic, 3, rng);
  EXPECT_EQ(r.reasoning_length, 0);
  EXPECT_LE(r.answer_tokens.size(), 8u);
}

TEST(ReasonAndAnswer, BoundedAndNoVisionCalls) {
  Vocabulary vocab;
  for (int i = 0; i < 40; ++i) vocab.add(std::to_string(i));
  Model m(tu::small_model(static_cast<int>(vocab.size())), 7);
  const InferConfig cfg;
  const std::uint64_t r0 = render_call_count(), e0 = encode_call_count();
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    std::string q = std::to_string(rng.uniform_int(0, 39)) + "+" + std::to_string(rng.uniform_int(0, 39));
    const InferResult r = reason_and_answer(m, vocab, vocab.tokenize(q), cfg, Modeling::Probabilistic, 3, rng);
    EXPECT_LE(r.reasoning_length, 6);
    EXPECT_LE(r.answer_tokens.size(), 8u);
  }
  EXPECT_EQ(render_call_count(), r0);
  EXPECT_EQ(encode_call_count(), e0);
}

TEST(CotGenerate, Bounded) {
  Vocabulary vocab;
  Model m(tu::small_model(32), 1);
  force_token(m, Vocabulary::kStepDelim);
  Rng rng(0);
  InferConfig cfg;
  cfg.max_reasoning_tokens = 10;
  const InferResult r = cot_generate(m, vocab, vocab.tokenize("3+4", true), cfg, rng);
  EXPECT_EQ(r.reasoning_length, 10);
  EXPECT_TRUE(r.truncated);
  EXPECT_LE(r.answer_tokens.size(), 8u);
}
