#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "util.hpp"
#include "vlr/corpus.hpp"
#include "vlr/error.hpp"

using namespace vlr;

namespace {

int g_warnings = 0;
void count_warning(const std::string&) { ++g_warnings; }

// Evaluates "x op y = z ." sentences left to right; returns false on any mismatch.
bool chain_consistent(const std::string& reasoning, const std::string& answer, std::string* why) {
  std::istringstream in(reasoning);
  std::string sentence;
  long long prev = 0;
  bool first = true;
  long long last = 0;
  while (std::getline(in, sentence, '.')) {
    if (sentence.find_first_not_of(' ') == std::string::npos) continue;
    long long x = 0, y = 0, z = 0;
    char op = 0, eq = 0;
    std::istringstream s(sentence);
    if (!(s >> x >> op >> y >> eq >> z) || eq != '=') {
      *why = "unparsable sentence: " + sentence;
      return false;
    }
    long long v = op == '+' ? x + y : op == '-' ? x - y : op == '*' ? x * y : 0;
    if (v != z) {
      *why = "wrong arithmetic: " + sentence;
      return false;
    }
    if (!first && x != prev) {
      *why = "chain does not continue: " + sentence;
      return false;
    }
    first = false;
    prev = last = z;
  }
  if (first) {
    *why = "no sentences";
    return false;
  }
  if (std::to_string(last) != answer) {
    *why = "answer " + answer + " != " + std::to_string(last);
    return false;
  }
  return true;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

}  // namespace

TEST(Synthetic, TwoStepShape) {
  Vocabulary vocab;
  SyntheticConfig cfg;
  cfg.n = 1;
  cfg.steps_min = cfg.steps_max = 2;
  cfg.seed = 0;
  const Dataset d = generate_synthetic(cfg, vocab);
  ASSERT_EQ(d.size(), 1u);
  const std::string q = vocab.detokenize(d[0].question);
  EXPECT_NE(q.find("; then"), std::string::npos) << q;
  EXPECT_EQ(segment(d[0], SegmentPolicy::sentence()).K(), 2u);
  EXPECT_EQ(d[0].answer.size(), 1u);
}

TEST(Synthetic, Deterministic) {
  SyntheticConfig cfg;
  cfg.n = 200;
  Vocabulary v1, v2;
  const Dataset a = generate_synthetic(cfg, v1);
  const Dataset b = generate_synthetic(cfg, v2);
  const std::string p1 = tu::tmp_dir("corpus_det") + "/a.jsonl";
  const std::string p2 = tu::tmp_dir("corpus_det2") + "/b.jsonl";
  write_jsonl(p1, a, v1);
  write_jsonl(p2, b, v2);
  std::ifstream f1(p1), f2(p2);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  EXPECT_EQ(s1.str(), s2.str());
  EXPECT_TRUE(v1 == v2);
}

TEST(Synthetic, AnswersMatchIndependentInterpreter) {
  Vocabulary vocab;
  SyntheticConfig cfg;
  cfg.n = 1000;
  cfg.steps_min = 1;
  cfg.steps_max = 3;
  const Dataset d = generate_synthetic(cfg, vocab);
  for (const auto& s : d) {
    std::string why;
    ASSERT_TRUE(chain_consistent(vocab.detokenize(s.reasoning), vocab.detokenize(s.answer), &why))
        << s.id << ": " << why;
  }
}

TEST(Synthetic, OperandsBounded) {
  Vocabulary vocab;
  SyntheticConfig cfg;
  cfg.n = 300;
  const Dataset d = generate_synthetic(cfg, vocab);
  for (const auto& s : d) {
    for (TokenId t : s.question) {
      const std::string& tok = vocab.token(t);
      if (!tok.empty() && std::isdigit(static_cast<unsigned char>(tok[0]))) {
        EXPECT_LE(std::stoll(tok), 20) << tok;
      }
    }
  }
}

TEST(Vocab, RoundTrip) {
  Vocabulary vocab;
  const TokenSeq t = vocab.tokenize("3+4=7. 7*2=14.", true);
  EXPECT_EQ(vocab.tokenize(vocab.detokenize(t)), t);
  EXPECT_EQ(vocab.id("###"), Vocabulary::kSepReason);
  EXPECT_EQ(vocab.id("."), Vocabulary::kStepDelim);
  EXPECT_THROW(vocab.id("nope"), Error);
  const Vocabulary back = Vocabulary::from_json(vocab.to_json());
  EXPECT_TRUE(back == vocab);
}

TEST(Jsonl, ThreeLines) {
  const std::string dir = tu::tmp_dir("jsonl3");
  const std::string path = dir + "/d.jsonl";
  write_file(path,
             "{\"question\":\"1+2\",\"reasoning\":\"1+2=3.\",\"answer\":\"3\"}\n"
             "{\"question\":\"2+2\",\"reasoning\":\"2+2=4.\",\"answer\":\"4\"}\n"
             "{\"question\":\"5-1\",\"reasoning\":\"5-1=4.\",\"answer\":\"4\"}\n");
  Vocabulary vocab;
  const Dataset d = load_jsonl(path, vocab);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_TRUE(d[0].id.ends_with(":1"));
  EXPECT_TRUE(d[1].id.ends_with(":2"));
  EXPECT_TRUE(d[2].id.ends_with(":3"));
}

TEST(Jsonl, EmptyFileWarns) {
  const std::string path = tu::tmp_dir("jsonl_empty") + "/e.jsonl";
  write_file(path, "");
  g_warnings = 0;
  set_warning_sink(count_warning);
  Vocabulary vocab;
  const Dataset d = load_jsonl(path, vocab);
  set_warning_sink(nullptr);
  EXPECT_TRUE(d.empty());
  EXPECT_EQ(g_warnings, 1);
}

TEST(Jsonl, MissingReasoningNamesLine) {
  const std::string path = tu::tmp_dir("jsonl_bad") + "/b.jsonl";
  write_file(path,
             "{\"question\":\"1+2\",\"reasoning\":\"1+2=3.\",\"answer\":\"3\"}\n"
             "{\"question\":\"2+2\",\"answer\":\"4\"}\n");
  Vocabulary vocab;
  try {
    load_jsonl(path, vocab);
    FAIL() << "expected a data error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("reasoning"), std::string::npos) << e.what();
  }
}

TEST(Jsonl, RejectUnknownTokens) {
  const std::string path = tu::tmp_dir("jsonl_rej") + "/r.jsonl";
  write_file(path, "{\"question\":\"1+2\",\"reasoning\":\"1+2=3.\",\"answer\":\"3\"}\n");
  Vocabulary vocab;
  EXPECT_THROW(load_jsonl(path, vocab, UnknownTokens::Reject), Error);
}

TEST(Segment, SentencePolicy) {
  Vocabulary vocab;
  const Sample s = tu::make_sample(vocab, "s", "3+4; then *2", "3+4=7. 7*2=14.", "14");
  const Segmentation seg = segment(s, SegmentPolicy::sentence());
  ASSERT_EQ(seg.K(), 2u);
  EXPECT_EQ(seg.ranges[0], (Range{0, 6}));
  EXPECT_EQ(seg.ranges[1], (Range{6, 12}));
  EXPECT_EQ(s.reasoning[seg.ranges[0].end - 1], Vocabulary::kStepDelim);
  EXPECT_EQ(s.reasoning[seg.ranges[1].end - 1], Vocabulary::kStepDelim);
}

TEST(Segment, FixedRateCeil) {
  Vocabulary vocab;
  const Sample s = tu::make_sample(vocab, "s", "3+4; then -1", "3+4=7. 7-1.", "6");
  ASSERT_EQ(s.reasoning.size(), 10u);
  const Segmentation seg = segment(s, SegmentPolicy::fixed_rate(3));
  ASSERT_EQ(seg.K(), 4u);
  EXPECT_EQ(seg.ranges.back().size(), 1u);
  std::size_t covered = 0;
  for (const auto& r : seg.ranges) {
    EXPECT_EQ(r.begin, covered);
    covered = r.end;
  }
  EXPECT_EQ(covered, 10u);
}

TEST(Segment, WholePolicy) {
  Vocabulary vocab;
  SyntheticConfig cfg;
  cfg.n = 50;
  for (const auto& s : generate_synthetic(cfg, vocab)) {
    const Segmentation seg = segment(s, SegmentPolicy::whole());
    ASSERT_EQ(seg.K(), 1u);
    EXPECT_EQ(seg.ranges[0], (Range{0, s.reasoning.size()}));
  }
}

TEST(Segment, PolicyParse) {
  EXPECT_EQ(SegmentPolicy::parse("sentence"), SegmentPolicy::sentence());
  EXPECT_EQ(SegmentPolicy::parse("whole"), SegmentPolicy::whole());
  EXPECT_EQ(SegmentPolicy::parse("rate:5"), SegmentPolicy::fixed_rate(5));
  EXPECT_EQ(SegmentPolicy::parse(SegmentPolicy::fixed_rate(7).str()), SegmentPolicy::fixed_rate(7));
  EXPECT_THROW(SegmentPolicy::parse("bogus"), Error);
}

TEST(Validate, RejectsSpecialsInAnswer) {
  Vocabulary vocab;
  Sample s = tu::make_sample(vocab, "s", "1+2", "1+2=3.", "3");
  EXPECT_NO_THROW(validate_sample(s));
  s.answer.push_back(Vocabulary::kSepReason);
  EXPECT_THROW(validate_sample(s), Error);
}
