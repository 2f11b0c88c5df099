#include "vlr/objective.hpp"

#include <cmath>

#include "vlr/error.hpp"

namespace vlr {

LossBreakdown combine(double answer_ce, double reasoning_ce, double kl, const LossMask& mask, double beta) {
  LossBreakdown b;
  b.answer_ce = answer_ce;
  b.reasoning_ce = reasoning_ce;
  b.kl = kl;
  b.beta = beta;
  b.mask = mask;
  b.total = answer_ce;
  if (mask.use_reasoning) b.total += reasoning_ce;
  if (mask.use_kl) b.total += beta * kl;
  return b;
}

namespace {

void check_dims(const PosteriorParams& post, const RowVec& z_hat) {
  if (post.mu.size() != z_hat.size() || post.log_sigma.size() != z_hat.size())
    throw numerical_error("kl: dimension mismatch");
}

}  // namespace

double kl_closed(const PosteriorParams& post, const PriorAnchor& anchor) {
  check_dims(post, anchor.z_hat);
  const double quad = (post.mu - anchor.z_hat).squaredNorm();
  const double var = (2.0 * post.log_sigma.array()).exp().sum();
  return 0.5 * (quad + var) - post.log_sigma.sum();
}

double kl_exact(const PosteriorParams& post, const PriorAnchor& anchor) {
  return kl_closed(post, anchor) - 0.5 * static_cast<double>(post.mu.size());
}

McEstimate kl_mc(const PosteriorParams& post, const PriorAnchor& anchor, int m, Rng& rng) {
  check_dims(post, anchor.z_hat);
  if (m < 1) throw config_error("kl_mc: m must be >= 1");
  const Eigen::Index d = post.mu.size();
  const RowVec sigma = post.log_sigma.array().exp();
  const RowVec diff = post.mu - anchor.z_hat;
  const double logdet = post.log_sigma.sum();
  // Welford over the per-draw estimates.
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < m; ++i) {
    double sq = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double e = diff(j) + sigma(j) * rng.normal();
      sq += e * e;
    }
    const double x = 0.5 * sq - logdet;
    const double delta = x - mean;
    mean += delta / (i + 1);
    m2 += delta * (x - mean);
  }
  McEstimate out;
  out.value = mean;
  out.std_error = m > 1 ? std::sqrt(m2 / (m - 1) / m) : 0.0;
  return out;
}

double kl_mc_at(const PosteriorParams& post, const PriorAnchor& anchor, const RowVec& z) {
  check_dims(post, anchor.z_hat);
  return 0.5 * (z - anchor.z_hat).squaredNorm() - post.log_sigma.sum();
}

double deterministic_regularizer(const RowVec& mu, const RowVec& z_hat) {
  if (mu.size() != z_hat.size()) throw numerical_error("regularizer: dimension mismatch");
  return 0.5 * (mu - z_hat).squaredNorm();
}

namespace {

double row_nll(const Mat& logits, Eigen::Index row, TokenId target) {
  if (target < 0 || target >= logits.cols()) throw data_error("target token outside the vocabulary");
  const double mx = logits.row(row).maxCoeff();
  const double lse = mx + std::log((logits.row(row).array() - mx).exp().sum());
  return lse - logits(row, target);
}

}  // namespace

double latent_answer_loss(const Mat& logits, std::span<const TokenId> targets) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size() || targets.empty())
    throw numerical_error("answer loss: logits/targets mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) s += row_nll(logits, static_cast<Eigen::Index>(i), targets[i]);
  return s / static_cast<double>(targets.size());
}

double latent_reasoning_loss(const Mat& step_logits, const std::vector<TokenSeq>& segments, ReasoningMode mode,
                             Rng* rng) {
  if (static_cast<std::size_t>(step_logits.rows()) != segments.size())
    throw numerical_error("reasoning loss: one logit row per segment required");
  if (segments.empty()) return 0.0;
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& seg = segments[k];
    if (seg.empty()) throw config_error("reasoning loss: empty segment");
    const auto row = static_cast<Eigen::Index>(k);
    if (mode == ReasoningMode::SumAll) {
      for (TokenId t : seg) s += row_nll(step_logits, row, t);
      count += seg.size();
    } else {
      if (!rng) throw config_error("reasoning loss: sample_one needs an rng");
      const auto j = static_cast<std::size_t>(rng->uniform_int(0, static_cast<std::int64_t>(seg.size()) - 1));
      s += row_nll(step_logits, row, seg[j]);
      ++count;
    }
  }
  return s / static_cast<double>(count);
}

double cot_mle_loss(Model& model, const Sample& sample) {
  Graph g(false);
  return g.scalar(graph::cot_mle_loss(g, model, sample));
}

namespace graph {

Var kl_closed(Graph& g, const Model::Posterior& post, Var z_hat) {
  Var quad = g.sum_sq(g.sub(post.mu, z_hat));
  Var var = g.sum(g.exp(g.scale(post.log_sigma, 2.0)));
  return g.sub(g.scale(g.add(quad, var), 0.5), g.sum(post.log_sigma));
}

Var kl_mc_at(Graph& g, const Model::Posterior& post, Var z, Var z_hat) {
  return g.sub(g.scale(g.sum_sq(g.sub(z, z_hat)), 0.5), g.sum(post.log_sigma));
}

Var deterministic_regularizer(Graph& g, Var mu, Var z_hat) { return g.scale(g.sum_sq(g.sub(mu, z_hat)), 0.5); }

Var cot_mle_loss(Graph& g, Model& model, const Sample& sample) {
  TokenSeq seq = sample.question;
  seq.insert(seq.end(), sample.reasoning.begin(), sample.reasoning.end());
  seq.push_back(Vocabulary::kSepReason);
  seq.insert(seq.end(), sample.answer.begin(), sample.answer.end());
  const int lq = static_cast<int>(sample.question.size());
  const int lr = static_cast<int>(sample.reasoning.size());
  const int la = static_cast<int>(sample.answer.size());
  if (lq < 1) throw data_error("cot loss: empty question");

  Model::KVCache cache;
  Var hidden = model.forward_chunk(g, model.embed_tokens(g, seq), cache);
  // Targets for positions lq-1 .. lq+lr-1: reasoning tokens then SEP_REASON.
  std::vector<int> rt(sample.reasoning.begin(), sample.reasoning.end());
  rt.push_back(Vocabulary::kSepReason);
  std::vector<int> at(sample.answer.begin(), sample.answer.end());
  at.push_back(Vocabulary::kEos);
  Var r_logits = model.language_head(g, g.slice_rows(hidden, lq - 1, lr + 1));
  Var a_logits = model.language_head(g, g.slice_rows(hidden, lq + lr, la + 1));
  Var r = g.scale(g.nll(r_logits, rt), 1.0 / static_cast<double>(rt.size()));
  Var a = g.scale(g.nll(a_logits, at), 1.0 / static_cast<double>(at.size()));
  return g.add(r, a);
}

}  // namespace graph

}  // namespace vlr
