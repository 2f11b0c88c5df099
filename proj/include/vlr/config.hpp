#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlr/corpus.hpp"
#include "vlr/infer.hpp"
#include "vlr/model.hpp"
#include "vlr/render.hpp"
#include "vlr/train.hpp"
#include "vlr/vision.hpp"

namespace vlr {

struct CorpusSection {
  SyntheticConfig train;  // n = 5000 by default
  std::size_t test_n = 500;
  std::uint64_t test_seed = 1;
  std::string train_path;  // when set, JSONL input replaces generation
  std::string test_path;
};

struct VisionSection {
  std::string mode = "Tiny";
  int d_v = 128;
  std::uint64_t encoder_seed = 1337;
  std::string segment_policy = "sentence";
};

struct EvalSection {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<int> compression_rates{2, 5, 10};
  std::string reports_dir = "reports";
  std::string run_root = "runs";  // VLR_RUN_ROOT overrides
  std::string name = "desk";
};

/// Sections: corpus, render, vision, model, train, infer, eval.
struct ExperimentConfig {
  CorpusSection corpus;
  RenderConfig render;
  VisionSection vision;
  ModelConfig model;
  TrainConfig train;
  InferConfig infer;
  EvalSection eval;

  ExperimentConfig();
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);

  /// "section.key=value"; value parsed as JSON when possible, else a string.
  void apply_override(const std::string& assignment);

  PrecomputeSpec precompute_spec() const;
  SegmentPolicy segment_policy() const { return SegmentPolicy::parse(vision.segment_policy); }
  std::string run_root() const;
};

}  // namespace vlr
