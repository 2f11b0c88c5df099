#include "vlr/corpus.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>

#include "vlr/error.hpp"
#include "vlr/rng.hpp"

namespace vlr {

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_'; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_alnum_token(const std::string& t) { return !t.empty() && (is_digit(t[0]) || is_alpha(t[0])); }
bool is_word_token(const std::string& t) { return !t.empty() && is_alpha(t[0]); }

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "###", "."}) add(t);
  for (const char* t : {"+", "-", "*", "=", ";", "then"}) add(t);
}

TokenId Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  return std::nullopt;
}

TokenId Vocabulary::id(std::string_view token) const {
  if (auto id = find(token)) return *id;
  throw data_error("token not in vocabulary: '" + std::string(token) + "'");
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw data_error("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::lex(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (is_space(c)) {
      ++i;
    } else if (is_digit(c)) {
      std::size_t j = i;
      while (j < text.size() && is_digit(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (is_alpha(c)) {
      std::size_t j = i;
      while (j < text.size() && is_alpha(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (text.substr(i, 3) == "###") {
      out.emplace_back("###");
      i += 3;
    } else {
      // One UTF-8 code point per punctuation token.
      std::size_t len = 1;
      const auto u = static_cast<unsigned char>(c);
      if (u >= 0xF0) len = 4;
      else if (u >= 0xE0) len = 3;
      else if (u >= 0xC0) len = 2;
      out.emplace_back(text.substr(i, std::min(len, text.size() - i)));
      i += len;
    }
  }
  return out;
}

TokenSeq Vocabulary::tokenize(std::string_view text, bool extend) {
  TokenSeq ids;
  for (const auto& t : lex(text)) ids.push_back(extend ? add(t) : id(t));
  return ids;
}

TokenSeq Vocabulary::tokenize(std::string_view text) const {
  TokenSeq ids;
  for (const auto& t : lex(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  const std::string* prev = nullptr;
  for (TokenId id : ids) {
    const std::string& t = token(id);
    if (prev) {
      const bool space = (is_alnum_token(*prev) && is_alnum_token(t)) || *prev == "." || *prev == ";" ||
                         *prev == "," || is_word_token(*prev) || *prev == "###" || t == "###" ||
                         (*prev == "#" && t == "#");
      if (space) out.push_back(' ');
    }
    out += t;
    prev = &t;
  }
  return out;
}

nlohmann::json Vocabulary::to_json() const { return tokens_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  const auto tokens = j.get<std::vector<std::string>>();
  if (tokens.size() < v.tokens_.size())
    throw data_error("vocabulary too short");
  for (std::size_t i = 0; i < v.tokens_.size(); ++i)
    if (tokens[i] != v.tokens_[i]) throw data_error("vocabulary prefix mismatch at index " + std::to_string(i));
  for (std::size_t i = v.tokens_.size(); i < tokens.size(); ++i) {
    if (v.find(tokens[i])) throw data_error("duplicate vocabulary token: " + tokens[i]);
    v.add(tokens[i]);
  }
  return v;
}

void validate_sample(const Sample& s) {
  auto check = [&](const TokenSeq& seq, const char* field, bool allow_delim) {
    if (seq.empty()) throw data_error("sample " + s.id + ": empty " + field);
    for (TokenId t : seq) {
      if (Vocabulary::is_special(t) && !(allow_delim && t == Vocabulary::kStepDelim))
        throw data_error("sample " + s.id + ": special token in " + field);
    }
  };
  // The step delimiter doubles as the sentence terminator inside reasoning chains.
  check(s.question, "question", false);
  check(s.reasoning, "reasoning", true);
  check(s.answer, "answer", false);
}

Dataset generate_synthetic(const SyntheticConfig& cfg, Vocabulary& vocab) {
  if (cfg.n < 1) throw config_error("generate_synthetic: n must be >= 1");
  if (cfg.steps_min < 1 || cfg.steps_max > 8 || cfg.steps_min > cfg.steps_max)
    throw config_error("generate_synthetic: steps must lie within [1, 8]");
  if (cfg.operand_max < 2) throw config_error("generate_synthetic: operand_max must be >= 2");
  if (cfg.result_max < cfg.operand_max || cfg.result_max > 1000000)
    throw config_error("generate_synthetic: result_max must lie within [operand_max, 1e6]");
  if (cfg.ops.empty() || cfg.ops.find_first_not_of("+-*") != std::string::npos)
    throw config_error("generate_synthetic: ops must be a non-empty subset of \"+-*\"");

  Rng rng(cfg.seed);
  Dataset out;
  out.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const int steps = static_cast<int>(rng.uniform_int(cfg.steps_min, cfg.steps_max));
    std::int64_t x = rng.uniform_int(0, cfg.operand_max);
    std::string question = std::to_string(x);
    std::vector<std::string> rtoks;
    for (int s = 0; s < steps; ++s) {
      // Draw an operator, then an operand that keeps the result in [0, result_max].
      std::vector<char> feasible;
      for (char c : cfg.ops) {
        if ((c == '+' && x < cfg.result_max) || (c == '-' && x >= 1) || (c == '*' && (x == 0 || cfg.result_max / x >= 2)))
          feasible.push_back(c);
      }
      if (feasible.empty()) throw config_error("generate_synthetic: no operator keeps the chain within result_max");
      const char op = feasible[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(feasible.size()) - 1))];
      std::int64_t hi = cfg.operand_max;
      if (op == '+') hi = std::min(hi, cfg.result_max - x);
      if (op == '-') hi = std::min(hi, x);
      if (op == '*' && x > 0) hi = std::min(hi, cfg.result_max / x);
      const std::int64_t y = rng.uniform_int(op == '*' ? 2 : 1, hi);
      const std::int64_t z = op == '+' ? x + y : op == '-' ? x - y : x * y;
      if (s == 0) {
        question += std::string(1, op) + std::to_string(y);
      } else {
        question += "; then " + std::string(1, op) + std::to_string(y);
      }
      for (const auto& t : {std::to_string(x), std::string(1, op), std::to_string(y), std::string("="),
                            std::to_string(z), std::string(".")})
        rtoks.push_back(t);
      x = z;
    }
    Sample sample;
    sample.id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(i);
    sample.question = vocab.tokenize(question, true);
    for (const auto& t : rtoks) sample.reasoning.push_back(vocab.add(t));
    sample.answer = vocab.tokenize(std::to_string(x), true);
    out.push_back(std::move(sample));
  }
  return out;
}

Dataset load_jsonl(const std::string& path, Vocabulary& vocab, UnknownTokens unknown) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open dataset: " + path);
  const std::string name = std::filesystem::path(path).filename().string();
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  const bool extend = unknown == UnknownTokens::Extend;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw data_error("malformed JSON at line " + std::to_string(lineno) + " of " + path + ": " + e.what());
    }
    Sample s;
    s.id = where;
    TokenSeq* fields[] = {&s.question, &s.reasoning, &s.answer};
    const char* names[] = {"question", "reasoning", "answer"};
    for (int f = 0; f < 3; ++f) {
      if (!j.is_object() || !j.contains(names[f]) || !j[names[f]].is_string())
        throw data_error("missing string field '" + std::string(names[f]) + "' at line " + std::to_string(lineno) +
                         " of " + path);
      try {
        *fields[f] = vocab.tokenize(j[names[f]].get<std::string>(), extend);
      } catch (const Error& e) {
        throw data_error("line " + std::to_string(lineno) + " of " + path + ": " + e.what());
      }
    }
    validate_sample(s);
    out.push_back(std::move(s));
  }
  if (out.empty()) warn("dataset " + path + " is empty");
  return out;
}

void write_jsonl(const std::string& path, const Dataset& data, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write dataset: " + path);
  for (const auto& s : data) {
    nlohmann::ordered_json j;
    j["question"] = vocab.detokenize(s.question);
    j["reasoning"] = vocab.detokenize(s.reasoning);
    j["answer"] = vocab.detokenize(s.answer);
    out << j.dump() << '\n';
  }
}

SegmentPolicy SegmentPolicy::fixed_rate(int c) {
  if (c < 1) throw config_error("fixed_rate segmentation needs c >= 1");
  return {Kind::FixedRate, c};
}

SegmentPolicy SegmentPolicy::parse(std::string_view s) {
  if (s == "sentence") return sentence();
  if (s == "whole") return whole();
  if (s.starts_with("rate:")) {
    try {
      return fixed_rate(std::stoi(std::string(s.substr(5))));
    } catch (const std::logic_error&) {
    }
  }
  throw config_error("unknown segmentation policy: " + std::string(s));
}

std::string SegmentPolicy::str() const {
  switch (kind) {
    case Kind::Sentence: return "sentence";
    case Kind::Whole: return "whole";
    case Kind::FixedRate: return "rate:" + std::to_string(rate);
  }
  return "?";
}

Segmentation segment(const Sample& sample, const SegmentPolicy& policy) {
  const std::size_t n = sample.reasoning.size();
  if (n == 0) throw data_error("segment: empty reasoning chain in sample " + sample.id);
  Segmentation seg{policy, {}};
  switch (policy.kind) {
    case SegmentPolicy::Kind::Whole:
      seg.ranges.push_back({0, n});
      break;
    case SegmentPolicy::Kind::FixedRate:
      for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(policy.rate))
        seg.ranges.push_back({b, std::min(n, b + static_cast<std::size_t>(policy.rate))});
      break;
    case SegmentPolicy::Kind::Sentence: {
      std::size_t b = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sample.reasoning[i] == Vocabulary::kStepDelim) {
          seg.ranges.push_back({b, i + 1});
          b = i + 1;
        }
      }
      if (seg.ranges.empty()) {
        warn("sample " + sample.id + ": no step delimiter, using a single segment");
        seg.ranges.push_back({0, n});
      } else if (b < n) {
        seg.ranges.push_back({b, n});
      }
      break;
    }
  }
  return seg;
}

TokenSeq segment_tokens(const Sample& sample, const Segmentation& seg, std::size_t k) {
  const Range r = seg.ranges.at(k);
  return TokenSeq(sample.reasoning.begin() + static_cast<std::ptrdiff_t>(r.begin),
                  sample.reasoning.begin() + static_cast<std::ptrdiff_t>(r.end));
}

}  // namespace vlr
