#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlr/corpus.hpp"
#include "vlr/infer.hpp"
#include "vlr/model.hpp"
#include "vlr/train.hpp"

namespace vlr {

/// Strip surrounding whitespace; canonical integer form ("014" -> "14", "+7" -> "7", "-0" -> "0").
std::string normalize_answer(std::string_view s);

double accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& golds);
double mean_reasoning_length(const std::vector<double>& lengths);

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;
};
/// Student-t interval: half-width = t_{(1+level)/2, n-1} * s / sqrt(n).
ConfidenceInterval confidence_interval(const std::vector<double>& values, double level = 0.95);

struct PredictionRecord {
  std::string id;
  std::string prediction;
  std::string gold;
  int reasoning_length = 0;
  bool truncated = false;
  bool correct = false;
  nlohmann::json to_json() const;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_reasoning_length = 0.0;
  double mean_length_untruncated = 0.0;
  std::size_t truncated = 0;
  std::vector<PredictionRecord> records;
};

/// Runs inference over `test` with one private rng stream per sample
/// (derived from cfg.seed and the sample index).
EvalResult evaluate(Model& model, const Vocabulary& vocab, const Dataset& test, const InferConfig& cfg,
                    Paradigm paradigm, Modeling modeling, std::size_t max_train_K);

/// Recomputes the aggregate metrics from prediction records.
EvalResult summarize(std::vector<PredictionRecord> records);

/// Most frequent training answer (ties: lexicographically smallest) and its test accuracy.
std::string majority_answer(const Dataset& train, const Vocabulary& vocab);
double majority_accuracy(const Dataset& train, const Dataset& test, const Vocabulary& vocab);

}  // namespace vlr
