#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlr/corpus.hpp"
#include "vlr/model.hpp"
#include "vlr/optim.hpp"

namespace vlr {

struct CheckpointMeta {
  ModelConfig model;
  nlohmann::json train;  // TrainConfig echo
  Vocabulary vocab;
  nlohmann::json cache;  // fingerprints of the vision cache trained against (null for text prior)
  long step = 0;
  std::string rng_state;
  std::size_t max_train_K = 0;
  std::string segment_policy = "sentence";
  nlohmann::json config_echo;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::unique_ptr<Model> model;
  bool has_optimizer = false;
  long optimizer_steps = 0;
  std::vector<Mat> adam_m, adam_v;
};

/// Container: "VLRCKPT\0", u32 version, u64 header length, JSON header,
/// then little-endian float64 arrays (parameters, then optimizer moments) in
/// header order. Written to a temporary file and renamed.
void save_checkpoint(const std::string& path, const Model& model, const AdamW* opt, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vlr
