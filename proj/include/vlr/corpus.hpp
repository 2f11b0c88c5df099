#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace vlr {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

/// Word-level vocabulary. Special tokens occupy indices 0..4.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSepReason = 3;  // "###"
  static constexpr TokenId kStepDelim = 4;  // "."
  static constexpr TokenId kNumSpecial = 5;

  /// Specials plus the arithmetic alphabet (+ - * = ; then).
  Vocabulary();

  TokenId add(const std::string& token);
  std::optional<TokenId> find(std::string_view token) const;
  TokenId id(std::string_view token) const;  // throws data_error when absent
  const std::string& token(TokenId id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  static bool is_special(TokenId id) noexcept { return id >= 0 && id < kNumSpecial; }

  /// Split text into surface tokens: digit runs, letter runs, "###", and
  /// single punctuation characters. Whitespace separates tokens.
  static std::vector<std::string> lex(std::string_view text);

  /// Map text to ids. With extend=true unseen tokens are appended, otherwise
  /// they raise a data error.
  TokenSeq tokenize(std::string_view text, bool extend = false);
  TokenSeq tokenize(std::string_view text) const;

  /// Canonical surface form. tokenize(detokenize(t)) == t for any sequence
  /// without PAD/BOS/EOS.
  std::string detokenize(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct Sample {
  std::string id;
  TokenSeq question;
  TokenSeq reasoning;
  TokenSeq answer;
};

using Dataset = std::vector<Sample>;

struct SyntheticConfig {
  std::size_t n = 1000;
  int steps_min = 1;
  int steps_max = 3;
  std::int64_t operand_max = 20;
  std::int64_t result_max = 1000000;
  std::string ops = "+-*";
  std::uint64_t seed = 0;
};

/// Multi-step integer arithmetic chains. Each reasoning sentence is
/// "<x><op><y>=<z>." and consumes the previous result; the answer is the
/// last result. Pure function of the config (the vocabulary is extended with
/// any new number tokens in generation order).
Dataset generate_synthetic(const SyntheticConfig& cfg, Vocabulary& vocab);

/// Checks every field of the sample against the dataset invariants.
void validate_sample(const Sample& s);

enum class UnknownTokens { Extend, Reject };

/// One sample per JSON line with string fields question/reasoning/answer.
/// Ids are "<filename>:<line>" (1-based). Blank lines are skipped.
Dataset load_jsonl(const std::string& path, Vocabulary& vocab, UnknownTokens unknown = UnknownTokens::Extend);

void write_jsonl(const std::string& path, const Dataset& data, const Vocabulary& vocab);

struct SegmentPolicy {
  enum class Kind { Sentence, FixedRate, Whole };
  Kind kind = Kind::Sentence;
  int rate = 1;

  static SegmentPolicy sentence() { return {Kind::Sentence, 1}; }
  static SegmentPolicy fixed_rate(int c);
  static SegmentPolicy whole() { return {Kind::Whole, 1}; }

  /// "sentence", "whole", or "rate:<c>".
  static SegmentPolicy parse(std::string_view s);
  std::string str() const;
  bool operator==(const SegmentPolicy&) const = default;
};

/// Half-open token range [begin, end) over the reasoning sequence.
struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  bool operator==(const Range&) const = default;
};

struct Segmentation {
  SegmentPolicy policy;
  std::vector<Range> ranges;
  std::size_t K() const noexcept { return ranges.size(); }
};

/// Split the reasoning chain into K disjoint ordered ranges covering [0, L_r).
/// Sentence segments end with (and include) each STEP_DELIM; a chain with no
/// delimiter falls back to a single segment with a warning.
Segmentation segment(const Sample& sample, const SegmentPolicy& policy);

/// Tokens of segment k.
TokenSeq segment_tokens(const Sample& sample, const Segmentation& seg, std::size_t k);

}  // namespace vlr
