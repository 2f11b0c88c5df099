#include "vlr/infer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vlr/error.hpp"

namespace vlr {

void InferConfig::validate() const {
  if (!(decode.top_p > 0.0 && decode.top_p <= 1.0)) throw config_error("infer.top_p must be in (0, 1]");
  if (!(decode.temperature > 0.0)) throw config_error("infer.temperature must be > 0");
  if (k_max < 0) throw config_error("infer.k_max must be >= 0");
  if (max_answer_len < 1) throw config_error("infer.max_answer_len must be >= 1");
  if (max_reasoning_tokens < 1) throw config_error("infer.max_reasoning_tokens must be >= 1");
}

nlohmann::json InferConfig::to_json() const {
  nlohmann::ordered_json j;
  j["decode"] = decode.kind == DecodePolicy::Kind::Sample ? "sample" : "greedy";
  j["top_p"] = decode.top_p;
  j["temperature"] = decode.temperature;
  j["k_max"] = k_max;
  j["max_answer_len"] = max_answer_len;
  j["max_reasoning_tokens"] = max_reasoning_tokens;
  j["seed"] = seed;
  return j;
}

InferConfig InferConfig::from_json(const nlohmann::json& j) {
  InferConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "decode") {
        const auto s = v.get<std::string>();
        if (s == "sample") c.decode.kind = DecodePolicy::Kind::Sample;
        else if (s == "greedy") c.decode.kind = DecodePolicy::Kind::Greedy;
        else throw config_error("infer.decode must be sample or greedy");
      } else if (k == "top_p") c.decode.top_p = v.get<double>();
      else if (k == "temperature") c.decode.temperature = v.get<double>();
      else if (k == "k_max") c.k_max = v.get<int>();
      else if (k == "max_answer_len") c.max_answer_len = v.get<int>();
      else if (k == "max_reasoning_tokens") c.max_reasoning_tokens = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else throw config_error("infer: unknown key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("infer: ") + e.what());
  }
  c.validate();
  return c;
}

TokenId decode_token(const RowVec& logits, const DecodePolicy& policy, Rng& rng) {
  const Eigen::Index n = logits.size();
  if (n == 0) throw numerical_error("decode: empty logits");
  if (!logits.allFinite()) throw numerical_error("decode: non-finite logits");
  if (policy.kind == DecodePolicy::Kind::Greedy) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (logits(i) > logits(best)) best = i;
    return static_cast<TokenId>(best);
  }
  const double mx = logits.maxCoeff();
  std::vector<double> p(static_cast<std::size_t>(n));
  double z = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp((logits(i) - mx) / policy.temperature);
    z += p[static_cast<std::size_t>(i)];
  }
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  // Smallest prefix whose mass reaches top_p.
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < idx.size()) {
    mass += p[idx[keep]] / z;
    ++keep;
    if (mass >= policy.top_p) break;
  }
  double kept = 0.0;
  for (std::size_t i = 0; i < keep; ++i) kept += p[idx[i]];
  double u = rng.uniform() * kept;
  for (std::size_t i = 0; i < keep; ++i) {
    u -= p[idx[i]];
    if (u < 0.0) return static_cast<TokenId>(idx[i]);
  }
  return static_cast<TokenId>(idx[keep - 1]);
}

namespace {

RowVec last_row(const Graph& g, Var v) {
  const Mat& m = g.value(v);
  return m.row(m.rows() - 1);
}

Var latent_step(Graph& g, Model& model, Var feed, Modeling modeling, Rng& rng) {
  const Model::Posterior post = model.latent_head(g, feed);
  if (modeling == Modeling::Deterministic) return post.mu;
  const int d = model.config().d_h;
  Mat eps(1, d);
  for (int i = 0; i < d; ++i) eps(0, i) = rng.normal();
  return model.sample_latent(g, post, eps);
}

TokenSeq generate_answer(Graph& g, Model& model, Model::KVCache& kv, const DecodePolicy& decode, Rng& rng,
                         int max_len) {
  TokenSeq out;
  TokenId next = Vocabulary::kSepReason;
  for (int i = 0; i < max_len; ++i) {
    if (kv.length + 1 > model.config().context) break;
    Var h = model.forward_chunk(g, model.embed_tokens(g, std::span<const TokenId>(&next, 1)), kv);
    const TokenId t = decode_token(g.value(model.language_head(g, h)).row(0), decode, rng);
    if (t == Vocabulary::kEos) break;
    out.push_back(t);
    next = t;
  }
  return out;
}

struct LatentRun {
  ReasonResult reason;
  Model::KVCache kv;
};

LatentRun run_latent(Graph& g, Model& model, const TokenSeq& question, int k_max, const DecodePolicy& decode,
                     Modeling modeling, Rng& rng) {
  if (question.empty()) throw data_error("infer: empty question");
  if (k_max < 1) throw config_error("infer: K_max must be >= 1");
  if (static_cast<int>(question.size()) + 1 > model.config().context)
    throw context_error("question does not fit the model context");
  LatentRun run;
  Var h = model.forward_chunk(g, model.embed_tokens(g, question), run.kv);
  RowVec feed = last_row(g, h);
  run.reason.truncated = true;
  for (int k = 1; k <= k_max; ++k) {
    Var z = latent_step(g, model, g.constant(feed), modeling, rng);
    const TokenId r = decode_token(g.value(model.language_head(g, z)).row(0), decode, rng);
    if (r == Vocabulary::kSepReason) {
      run.reason.truncated = false;
      break;
    }
    run.reason.history.push_back({g.value(z).row(0), static_cast<std::size_t>(k)});
    if (run.kv.length + 2 > model.config().context) break;  // keep room for SEP_REASON
    feed = last_row(g, model.forward_chunk(g, z, run.kv));
  }
  run.reason.steps_taken = static_cast<int>(run.reason.history.size());
  return run;
}

}  // namespace

ReasonResult reason(Model& model, const TokenSeq& question, int k_max, const DecodePolicy& decode, Modeling modeling,
                    Rng& rng) {
  Graph g(false);
  return run_latent(g, model, question, k_max, decode, modeling, rng).reason;
}

TokenSeq answer(Model& model, const TokenSeq& question, const std::vector<LatentState>& history,
                const DecodePolicy& decode, Rng& rng, int max_len) {
  Graph g(false);
  Model::KVCache kv;
  model.forward_chunk(g, model.embed_tokens(g, question), kv);
  for (const auto& z : history) model.forward_chunk(g, g.constant(Mat(z.z)), kv);
  return generate_answer(g, model, kv, decode, rng, max_len);
}

int resolve_k_max(const InferConfig& cfg, std::size_t max_train_K) {
  if (cfg.k_max > 0) return cfg.k_max;
  return std::max(1, static_cast<int>(2 * max_train_K));
}

InferResult reason_and_answer(Model& model, const Vocabulary& vocab, const TokenSeq& question, const InferConfig& cfg,
                              Modeling modeling, std::size_t max_train_K, Rng& rng) {
  Graph g(false);
  LatentRun run = run_latent(g, model, question, resolve_k_max(cfg, max_train_K), cfg.decode, modeling, rng);
  InferResult out;
  out.answer_tokens = generate_answer(g, model, run.kv, cfg.decode, rng, cfg.max_answer_len);
  out.answer = vocab.detokenize(out.answer_tokens);
  out.reasoning_length = run.reason.steps_taken;
  out.truncated = run.reason.truncated;
  return out;
}

InferResult cot_generate(Model& model, const Vocabulary& vocab, const TokenSeq& question, const InferConfig& cfg,
                         Rng& rng) {
  if (question.empty()) throw data_error("infer: empty question");
  Graph g(false);
  Model::KVCache kv;
  Var h = model.forward_chunk(g, model.embed_tokens(g, question), kv);
  RowVec logits = g.value(model.language_head(g, g.slice_rows(h, static_cast<int>(question.size()) - 1, 1))).row(0);
  InferResult out;
  TokenSeq chain;
  out.truncated = true;
  for (int i = 0; i < cfg.max_reasoning_tokens && kv.length + 2 <= model.config().context; ++i) {
    const TokenId t = decode_token(logits, cfg.decode, rng);
    if (t == Vocabulary::kSepReason) {
      out.truncated = false;
      break;
    }
    chain.push_back(t);
    if (t == Vocabulary::kStepDelim) ++out.reasoning_length;
    logits = g.value(model.language_head(g, model.forward_chunk(g, model.embed_tokens(g, std::span<const TokenId>(&t, 1)), kv))).row(0);
  }
  out.reasoning_text = vocab.detokenize(chain);
  out.answer_tokens = generate_answer(g, model, kv, cfg.decode, rng, cfg.max_answer_len);
  out.answer = vocab.detokenize(out.answer_tokens);
  return out;
}

}  // namespace vlr
