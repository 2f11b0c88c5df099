#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlr/autograd.hpp"
#include "vlr/corpus.hpp"
#include "vlr/rng.hpp"

namespace vlr {

using RowVec = Eigen::RowVectorXd;

struct ModelConfig {
  int d_h = 64;
  int layers = 2;
  int heads = 4;
  int context = 256;
  int vocab_size = 0;
  int d_v = 128;
  double logsigma_min = -5.0;
  double logsigma_max = 2.0;
  bool tie_embeddings = false;
  int mlp_ratio = 4;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct PosteriorParams {
  RowVec mu;
  RowVec log_sigma;
};

struct LatentState {
  RowVec z;
  std::size_t k = 0;
};

struct PriorAnchor {
  RowVec z_hat;
  std::string sample_id;
  std::size_t k = 0;
};

/// Which composed-sequence positions feed which head.
struct PositionMap {
  std::vector<int> latent_feed;  // K positions: last question position, then z_1..z_{K-1}
  int sep_target = -1;           // position whose next-token target is SEP_REASON (last Q or z_K)
  std::vector<std::pair<int, TokenId>> answer_targets;  // (position, target token)
};

struct ComposedSequence {
  Mat embeddings;  // (L_q + K + 1 + L_a) x d_h, before positional codes
  PositionMap map;
};

/// Parameter groups: "backbone", "latent_head", "adapter", "language_head".
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  static std::string group_of(const std::string& param_name);

  /// Freeze the backbone (embeddings, blocks, final norm).
  void set_backbone_frozen(bool frozen);

  struct KVCache {
    std::vector<Var> k, v;
    int length = 0;
  };
  struct Posterior {
    Var mu, log_sigma;
  };

  Var embed_tokens(Graph& g, std::span<const TokenId> ids);
  /// Runs n new input rows (embeddings without positions) through the
  /// decoder, extending `cache`. Returns final-norm hidden states (n x d_h).
  Var forward_chunk(Graph& g, Var input, KVCache& cache);
  Posterior latent_head(Graph& g, Var hidden);
  Var sample_latent(Graph& g, const Posterior& post, const Mat& eps);
  Var language_head(Graph& g, Var x);
  Var adapter(Graph& g, Var v);

  // Plain evaluation wrappers over a non-recording graph.
  Mat forward_hidden(const Mat& embeddings);
  PosteriorParams latent_head(const RowVec& hidden);
  RowVec language_head(const RowVec& x);
  PriorAnchor adapter(const std::vector<float>& v, const std::string& sample_id = {}, std::size_t k = 0);

 private:
  Var p(Graph& g, const std::string& name) { return g.param(params_.get(name)); }

  ModelConfig cfg_;
  ParamStore params_;
};

/// z = mu + exp(log_sigma) * eps.
LatentState sample_latent(const PosteriorParams& params, const RowVec& eps, std::size_t k = 0);
RowVec standard_normal(int d, Rng& rng);

/// [embed(Q)] ++ [z_1..z_K] ++ [embed(SEP_REASON)] ++ [embed(A)] with the
/// matching position map.
ComposedSequence compose_training_sequence(const Model& model, const Sample& sample,
                                           const std::vector<LatentState>& latents);

}  // namespace vlr
