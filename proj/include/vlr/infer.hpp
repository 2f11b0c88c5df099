#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlr/corpus.hpp"
#include "vlr/model.hpp"
#include "vlr/rng.hpp"
#include "vlr/train.hpp"

namespace vlr {

struct DecodePolicy {
  enum class Kind { Sample, Greedy };
  Kind kind = Kind::Sample;
  double top_p = 0.9;
  double temperature = 1.0;
};

struct InferConfig {
  DecodePolicy decode;
  int k_max = 0;  // 0: twice the largest training K
  int max_answer_len = 8;
  int max_reasoning_tokens = 96;  // explicit-CoT decoding budget
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static InferConfig from_json(const nlohmann::json& j);
};

/// Nucleus sampling over softmax(logits / temperature), or argmax (lowest id on ties).
TokenId decode_token(const RowVec& logits, const DecodePolicy& policy, Rng& rng);

struct ReasonResult {
  std::vector<LatentState> history;
  int steps_taken = 0;
  bool truncated = false;
};

/// Latent phase: sample z_k from the running sequence, decode a
/// representative token from language_head(z_k), stop before appending z_k
/// when that token is SEP_REASON.
ReasonResult reason(Model& model, const TokenSeq& question, int k_max, const DecodePolicy& decode, Modeling modeling,
                    Rng& rng);

/// Answer phase over [Q, Z, SEP_REASON, A_<i]; stops at EOS or max_len.
TokenSeq answer(Model& model, const TokenSeq& question, const std::vector<LatentState>& history,
                const DecodePolicy& decode, Rng& rng, int max_len);

struct InferResult {
  std::string answer;
  TokenSeq answer_tokens;
  int reasoning_length = 0;
  bool truncated = false;
  std::string reasoning_text;  // explicit CoT only
};

int resolve_k_max(const InferConfig& cfg, std::size_t max_train_K);

InferResult reason_and_answer(Model& model, const Vocabulary& vocab, const TokenSeq& question, const InferConfig& cfg,
                              Modeling modeling, std::size_t max_train_K, Rng& rng);

/// Explicit-CoT decoding: reasoning tokens until SEP_REASON (length counted
/// in STEP_DELIM tokens), then the answer.
InferResult cot_generate(Model& model, const Vocabulary& vocab, const TokenSeq& question, const InferConfig& cfg,
                         Rng& rng);

}  // namespace vlr
