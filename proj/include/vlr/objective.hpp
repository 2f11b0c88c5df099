#pragma once

#include <span>
#include <vector>

#include "vlr/autograd.hpp"
#include "vlr/corpus.hpp"
#include "vlr/model.hpp"
#include "vlr/rng.hpp"

namespace vlr {

struct LossMask {
  bool use_kl = true;
  bool use_reasoning = true;
  bool operator==(const LossMask&) const = default;
};

struct LossBreakdown {
  double answer_ce = 0.0;
  double reasoning_ce = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double beta = 1.0;
  LossMask mask;
};

/// total = answer + use_reasoning * reasoning + use_kl * beta * kl.
LossBreakdown combine(double answer_ce, double reasoning_ce, double kl, const LossMask& mask, double beta);

enum class ReasoningMode { SumAll, SampleOne };

/// KL as printed: (|mu - z_hat|^2 + |sigma|^2) / 2 - sum(log sigma).
double kl_closed(const PosteriorParams& post, const PriorAnchor& anchor);
/// Exact KL(N(mu, diag sigma^2) || N(z_hat, I)) = kl_closed - d/2.
double kl_exact(const PosteriorParams& post, const PriorAnchor& anchor);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};
/// (1/2) E|mu + sigma*eps - z_hat|^2 - sum(log sigma), averaged over m draws.
McEstimate kl_mc(const PosteriorParams& post, const PriorAnchor& anchor, int m, Rng& rng);
/// Single-draw estimate reusing an already sampled z.
double kl_mc_at(const PosteriorParams& post, const PriorAnchor& anchor, const RowVec& z);

/// (1/2)|mu - z_hat|^2, used when z = mu.
double deterministic_regularizer(const RowVec& mu, const RowVec& z_hat);

/// Mean of -log softmax(logits[i])[targets[i]].
double latent_answer_loss(const Mat& logits, std::span<const TokenId> targets);

/// step_logits row k decodes segment k. SumAll: every token of every segment,
/// normalized by the total token count. SampleOne: one uniformly drawn token
/// per segment, averaged over segments.
double latent_reasoning_loss(const Mat& step_logits, const std::vector<TokenSeq>& segments, ReasoningMode mode,
                             Rng* rng = nullptr);

/// Explicit chain-of-thought likelihood over [Q, R, SEP_REASON, A]:
/// mean CE over reasoning targets (R then SEP_REASON) plus mean CE over
/// answer targets (A then EOS).
double cot_mle_loss(Model& model, const Sample& sample);

namespace graph {

Var kl_closed(Graph& g, const Model::Posterior& post, Var z_hat);
Var kl_mc_at(Graph& g, const Model::Posterior& post, Var z, Var z_hat);
Var deterministic_regularizer(Graph& g, Var mu, Var z_hat);
Var cot_mle_loss(Graph& g, Model& model, const Sample& sample);

}  // namespace graph

}  // namespace vlr
