#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlr/corpus.hpp"
#include "vlr/model.hpp"
#include "vlr/objective.hpp"
#include "vlr/optim.hpp"
#include "vlr/vision.hpp"

namespace vlr {

enum class Paradigm { Latent, ExplicitCot };
enum class Modeling { Probabilistic, Deterministic };
enum class PriorKind { Vision, Text };
enum class KlEstimator { Closed, MonteCarlo };

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 0.01;
  int warmup_steps = 100;
  int batch_size = 8;
  int max_steps = 1000;
  std::uint64_t seed = 0;
  Paradigm paradigm = Paradigm::Latent;
  Modeling modeling = Modeling::Probabilistic;
  PriorKind prior = PriorKind::Vision;
  LossMask mask;
  double beta = 1.0;
  ReasoningMode reasoning_mode = ReasoningMode::SumAll;
  KlEstimator kl_estimator = KlEstimator::MonteCarlo;
  bool exact_kl = false;
  bool detach_chain = false;
  bool freeze_backbone = false;
  double grad_clip = 1.0;
  int checkpoint_every = 0;  // 0: final checkpoint only

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  AdamWConfig optimizer() const;
};

const char* to_string(Paradigm p);
const char* to_string(Modeling m);
const char* to_string(PriorKind p);
const char* to_string(ReasoningMode m);
const char* to_string(KlEstimator k);

/// Graph handles of one sample's latent objective.
struct SampleLoss {
  Var answer, reasoning, kl, total;
  std::size_t K = 0;
};

/// Builds one sample's objective: sequential posterior sampling over the K
/// teacher-forced segments, reasoning decoding from each z_k, the prior
/// regularizer, termination supervision, and answer CE over [SEP_REASON, A].
SampleLoss build_latent_loss(Graph& g, Model& model, const Sample& sample, const SegmentPolicy& policy,
                             const VisualCache* cache, const TrainConfig& cfg, Rng& rng);

/// Mean loss over the batch followed by one optimizer step.
LossBreakdown train_step(Model& model, AdamW& opt, const std::vector<const Sample*>& batch,
                         const SegmentPolicy& policy, const VisualCache* cache, const TrainConfig& cfg, Rng& rng,
                         StepStats* stats = nullptr);

struct TrainLogRecord {
  long step = 0;
  LossBreakdown loss;
  double lr = 0.0;
  double grad_norm = 0.0;
  nlohmann::json to_json() const;
};

struct TrainRequest {
  const Dataset* data = nullptr;
  const Vocabulary* vocab = nullptr;
  SegmentPolicy policy = SegmentPolicy::sentence();
  const VisualCache* cache = nullptr;
  std::optional<PrecomputeSpec> cache_spec;  // checked before step 1 when set
  std::string run_dir;                       // empty: no files written
  std::string resume_from;                   // checkpoint path
  nlohmann::json config_echo;                // full configuration, stored in checkpoints
};

struct TrainResult {
  std::vector<TrainLogRecord> log;
  std::string final_checkpoint;
  std::size_t max_train_K = 0;
};

/// Runs cfg.max_steps steps over seeded per-epoch shuffles. Writes
/// <run_dir>/train_log.jsonl and <run_dir>/ckpt-<step> when run_dir is set.
TrainResult train(Model& model, const TrainConfig& cfg, const TrainRequest& req);

/// Largest segment count over the dataset under `policy`.
std::size_t max_segments(const Dataset& data, const SegmentPolicy& policy);

}  // namespace vlr
