#include "vlr/model.hpp"

#include <cmath>

#include "vlr/error.hpp"

namespace vlr {

void ModelConfig::validate() const {
  if (d_h < 2 || heads < 1 || d_h % heads != 0) throw config_error("model: d_h must be divisible by heads");
  if (layers < 1) throw config_error("model: layers must be >= 1");
  if (context < 4) throw config_error("model: context too small");
  if (vocab_size <= Vocabulary::kNumSpecial) throw config_error("model: vocab_size too small");
  if (d_v < 1) throw config_error("model: d_v must be positive");
  if (!(logsigma_min < logsigma_max)) throw config_error("model: logsigma clamp is empty");
  if (mlp_ratio < 1) throw config_error("model: mlp_ratio must be >= 1");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d_h", d_h},
          {"layers", layers},
          {"heads", heads},
          {"context", context},
          {"vocab_size", vocab_size},
          {"d_v", d_v},
          {"logsigma_clamp", {logsigma_min, logsigma_max}},
          {"tie_embeddings", tie_embeddings},
          {"mlp_ratio", mlp_ratio}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  for (const auto& [key, val] : j.items()) {
    if (key == "d_h") c.d_h = val.get<int>();
    else if (key == "layers") c.layers = val.get<int>();
    else if (key == "heads") c.heads = val.get<int>();
    else if (key == "context") c.context = val.get<int>();
    else if (key == "vocab_size") c.vocab_size = val.get<int>();
    else if (key == "d_v") c.d_v = val.get<int>();
    else if (key == "logsigma_clamp") {
      c.logsigma_min = val.at(0).get<double>();
      c.logsigma_max = val.at(1).get<double>();
    } else if (key == "tie_embeddings") c.tie_embeddings = val.get<bool>();
    else if (key == "mlp_ratio") c.mlp_ratio = val.get<int>();
    else throw config_error("model: unknown key '" + key + "'");
  }
  return c;
}

namespace {

Mat randn(Eigen::Index r, Eigen::Index c, double std, Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std * rng.normal();
  return m;
}

std::string blk(int i, const char* leaf) { return "block" + std::to_string(i) + "." + leaf; }

}  // namespace

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = Rng::derive(seed, 0x6d6f646c);  // "modl"
  const int d = cfg_.d_h, V = cfg_.vocab_size, f = cfg_.mlp_ratio * d;
  const double wstd = 0.02;
  const double out_std = 0.02 / std::sqrt(2.0 * cfg_.layers);
  params_.add("tok_emb", randn(V, d, 0.1, rng), true);
  params_.add("pos_emb", randn(cfg_.context, d, 0.02, rng), true);
  for (int i = 0; i < cfg_.layers; ++i) {
    params_.add(blk(i, "ln1.g"), Mat::Ones(1, d), false);
    params_.add(blk(i, "ln1.b"), Mat::Zero(1, d), false);
    params_.add(blk(i, "qkv.w"), randn(3 * d, d, wstd, rng), true);
    params_.add(blk(i, "qkv.b"), Mat::Zero(1, 3 * d), false);
    params_.add(blk(i, "proj.w"), randn(d, d, out_std, rng), true);
    params_.add(blk(i, "proj.b"), Mat::Zero(1, d), false);
    params_.add(blk(i, "ln2.g"), Mat::Ones(1, d), false);
    params_.add(blk(i, "ln2.b"), Mat::Zero(1, d), false);
    params_.add(blk(i, "fc1.w"), randn(f, d, wstd, rng), true);
    params_.add(blk(i, "fc1.b"), Mat::Zero(1, f), false);
    params_.add(blk(i, "fc2.w"), randn(d, f, out_std, rng), true);
    params_.add(blk(i, "fc2.b"), Mat::Zero(1, d), false);
  }
  params_.add("final_ln.g", Mat::Ones(1, d), false);
  params_.add("final_ln.b", Mat::Zero(1, d), false);

  const double head_std = 1.0 / std::sqrt(static_cast<double>(d));
  params_.add("latent.w1", randn(d, d, head_std, rng), true);
  params_.add("latent.b1", Mat::Zero(1, d), false);
  params_.add("latent.w2", randn(2 * d, d, head_std, rng), true);
  params_.add("latent.b2", Mat::Zero(1, 2 * d), false);

  params_.add("adapter.w1", randn(d, cfg_.d_v, 1.0 / std::sqrt(static_cast<double>(cfg_.d_v)), rng), true);
  params_.add("adapter.b1", Mat::Zero(1, d), false);
  params_.add("adapter.w2", randn(d, d, head_std, rng), true);
  params_.add("adapter.b2", Mat::Zero(1, d), false);

  if (!cfg_.tie_embeddings) params_.add("lm.w", randn(V, d, wstd, rng), true);
  params_.add("lm.b", Mat::Zero(1, V), false);
}

std::string Model::group_of(const std::string& name) {
  if (name.starts_with("latent.")) return "latent_head";
  if (name.starts_with("adapter.")) return "adapter";
  if (name.starts_with("lm.")) return "language_head";
  return "backbone";
}

void Model::set_backbone_frozen(bool frozen) {
  for (auto* prm : params_.all())
    if (group_of(prm->name) == "backbone") prm->frozen = frozen;
}

Var Model::embed_tokens(Graph& g, std::span<const TokenId> ids) {
  for (TokenId t : ids)
    if (t < 0 || t >= cfg_.vocab_size) throw data_error("token id " + std::to_string(t) + " outside the model vocabulary");
  return g.gather(params_.get("tok_emb"), std::span<const int>(ids.data(), ids.size()));
}

Var Model::forward_chunk(Graph& g, Var input, KVCache& cache) {
  const int n = static_cast<int>(g.value(input).rows());
  if (g.value(input).cols() != cfg_.d_h) throw numerical_error("forward_chunk: input width != d_h");
  if (cache.length + n > cfg_.context)
    throw context_error("sequence length " + std::to_string(cache.length + n) + " exceeds context " +
                        std::to_string(cfg_.context));
  if (cache.k.empty()) {
    cache.k.resize(static_cast<std::size_t>(cfg_.layers));
    cache.v.resize(static_cast<std::size_t>(cfg_.layers));
  }
  std::vector<int> pos(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pos[static_cast<std::size_t>(i)] = cache.length + i;
  Var x = g.add(input, g.gather(params_.get("pos_emb"), pos));
  const int d = cfg_.d_h;
  for (int l = 0; l < cfg_.layers; ++l) {
    const auto L = static_cast<std::size_t>(l);
    Var h = g.layernorm(x, p(g, blk(l, "ln1.g")), p(g, blk(l, "ln1.b")));
    Var qkv = g.linear(h, p(g, blk(l, "qkv.w")), p(g, blk(l, "qkv.b")));
    Var q = g.slice_cols(qkv, 0, d);
    Var k = g.slice_cols(qkv, d, d);
    Var v = g.slice_cols(qkv, 2 * d, d);
    cache.k[L] = cache.k[L].valid() ? g.concat_rows(cache.k[L], k) : k;
    cache.v[L] = cache.v[L].valid() ? g.concat_rows(cache.v[L], v) : v;
    Var att = g.attention(q, cache.k[L], cache.v[L], cfg_.heads, cache.length);
    x = g.add(x, g.linear(att, p(g, blk(l, "proj.w")), p(g, blk(l, "proj.b"))));
    Var h2 = g.layernorm(x, p(g, blk(l, "ln2.g")), p(g, blk(l, "ln2.b")));
    Var m = g.gelu(g.linear(h2, p(g, blk(l, "fc1.w")), p(g, blk(l, "fc1.b"))));
    x = g.add(x, g.linear(m, p(g, blk(l, "fc2.w")), p(g, blk(l, "fc2.b"))));
  }
  cache.length += n;
  return g.layernorm(x, p(g, "final_ln.g"), p(g, "final_ln.b"));
}

Model::Posterior Model::latent_head(Graph& g, Var hidden) {
  if (!g.value(hidden).allFinite()) throw numerical_error("latent_head: non-finite input");
  Var h = g.gelu(g.linear(hidden, p(g, "latent.w1"), p(g, "latent.b1")));
  Var out = g.linear(h, p(g, "latent.w2"), p(g, "latent.b2"));
  const int d = cfg_.d_h;
  return {g.slice_cols(out, 0, d), g.clamp(g.slice_cols(out, d, d), cfg_.logsigma_min, cfg_.logsigma_max)};
}

Var Model::sample_latent(Graph& g, const Posterior& post, const Mat& eps) {
  return g.add(post.mu, g.mul(g.exp(post.log_sigma), g.constant(eps)));
}

Var Model::language_head(Graph& g, Var x) {
  Var w = cfg_.tie_embeddings ? p(g, "tok_emb") : p(g, "lm.w");
  return g.linear(x, w, p(g, "lm.b"));
}

Var Model::adapter(Graph& g, Var v) {
  if (g.value(v).cols() != cfg_.d_v)
    throw config_error("adapter: input dimension " + std::to_string(g.value(v).cols()) + " != d_v " +
                       std::to_string(cfg_.d_v));
  Var h = g.gelu(g.linear(v, p(g, "adapter.w1"), p(g, "adapter.b1")));
  return g.linear(h, p(g, "adapter.w2"), p(g, "adapter.b2"));
}

Mat Model::forward_hidden(const Mat& embeddings) {
  Graph g(false);
  KVCache cache;
  return g.value(forward_chunk(g, g.constant(embeddings), cache));
}

PosteriorParams Model::latent_head(const RowVec& hidden) {
  Graph g(false);
  const Posterior post = latent_head(g, g.constant(hidden));
  return {g.value(post.mu).row(0), g.value(post.log_sigma).row(0)};
}

RowVec Model::language_head(const RowVec& x) {
  Graph g(false);
  return g.value(language_head(g, g.constant(x))).row(0);
}

PriorAnchor Model::adapter(const std::vector<float>& v, const std::string& sample_id, std::size_t k) {
  Graph g(false);
  Mat in(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) in(0, static_cast<Eigen::Index>(i)) = v[i];
  return {g.value(adapter(g, g.constant(in))).row(0), sample_id, k};
}

LatentState sample_latent(const PosteriorParams& params, const RowVec& eps, std::size_t k) {
  return {params.mu + (params.log_sigma.array().exp() * eps.array()).matrix(), k};
}

RowVec standard_normal(int d, Rng& rng) {
  RowVec e(d);
  for (int i = 0; i < d; ++i) e(i) = rng.normal();
  return e;
}

ComposedSequence compose_training_sequence(const Model& model, const Sample& sample,
                                           const std::vector<LatentState>& latents) {
  const auto& emb = model.params().get("tok_emb").value;
  const int d = model.config().d_h;
  const int lq = static_cast<int>(sample.question.size());
  const int K = static_cast<int>(latents.size());
  const int la = static_cast<int>(sample.answer.size());
  const int total = lq + K + 1 + la;
  if (lq < 1) throw data_error("compose: empty question");
  if (total > model.config().context)
    throw context_error("composed sequence length " + std::to_string(total) + " exceeds context");
  ComposedSequence out;
  out.embeddings.resize(total, d);
  int row = 0;
  for (TokenId t : sample.question) out.embeddings.row(row++) = emb.row(t);
  for (const auto& z : latents) {
    if (z.z.size() != d) throw numerical_error("compose: latent width != d_h");
    out.embeddings.row(row++) = z.z;
  }
  out.embeddings.row(row++) = emb.row(Vocabulary::kSepReason);
  for (TokenId t : sample.answer) out.embeddings.row(row++) = emb.row(t);

  for (int k = 0; k < K; ++k) out.map.latent_feed.push_back(k == 0 ? lq - 1 : lq + k - 1);
  out.map.sep_target = lq + K - 1;
  const int sep_pos = lq + K;
  for (int i = 0; i < la; ++i) out.map.answer_targets.emplace_back(sep_pos + i, sample.answer[static_cast<std::size_t>(i)]);
  out.map.answer_targets.emplace_back(sep_pos + la, Vocabulary::kEos);
  return out;
}

}  // namespace vlr
