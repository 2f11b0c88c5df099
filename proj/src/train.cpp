#include "vlr/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vlr/checkpoint.hpp"
#include "vlr/error.hpp"

namespace vlr {

const char* to_string(Paradigm p) { return p == Paradigm::Latent ? "latent" : "cot"; }
const char* to_string(Modeling m) { return m == Modeling::Probabilistic ? "probabilistic" : "deterministic"; }
const char* to_string(PriorKind p) { return p == PriorKind::Vision ? "vision" : "text"; }
const char* to_string(ReasoningMode m) { return m == ReasoningMode::SumAll ? "sum_all" : "sample_one"; }
const char* to_string(KlEstimator k) { return k == KlEstimator::Closed ? "closed" : "mc"; }

namespace {

template <class E>
E parse_enum(const std::string& key, const std::string& s, std::initializer_list<std::pair<const char*, E>> opts) {
  for (const auto& [name, v] : opts)
    if (s == name) return v;
  std::string all;
  for (const auto& [name, v] : opts) all += std::string(all.empty() ? "" : ", ") + name;
  throw config_error("train." + key + ": '" + s + "' is not one of " + all);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw config_error("train.lr must be finite and >= 0");
  if (weight_decay < 0.0) throw config_error("train.weight_decay must be >= 0");
  if (warmup_steps < 0) throw config_error("train.warmup_steps must be >= 0");
  if (batch_size < 1) throw config_error("train.batch_size must be >= 1");
  if (max_steps < 0) throw config_error("train.max_steps must be >= 0");
  if (beta < 0.0) throw config_error("train.beta must be >= 0");
  if (checkpoint_every < 0) throw config_error("train.checkpoint_every must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["warmup_steps"] = warmup_steps;
  j["batch_size"] = batch_size;
  j["max_steps"] = max_steps;
  j["seed"] = seed;
  j["paradigm"] = to_string(paradigm);
  j["modeling"] = to_string(modeling);
  j["prior"] = to_string(prior);
  j["use_kl"] = mask.use_kl;
  j["use_reasoning"] = mask.use_reasoning;
  j["beta"] = beta;
  j["reasoning_mode"] = to_string(reasoning_mode);
  j["kl_estimator"] = to_string(kl_estimator);
  j["exact_kl"] = exact_kl;
  j["detach_chain"] = detach_chain;
  j["freeze_backbone"] = freeze_backbone;
  j["grad_clip"] = grad_clip;
  j["checkpoint_every"] = checkpoint_every;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "lr") c.lr = v.get<double>();
      else if (k == "weight_decay") c.weight_decay = v.get<double>();
      else if (k == "warmup_steps") c.warmup_steps = v.get<int>();
      else if (k == "batch_size") c.batch_size = v.get<int>();
      else if (k == "max_steps") c.max_steps = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "paradigm")
        c.paradigm = parse_enum<Paradigm>(k, v.get<std::string>(), {{"latent", Paradigm::Latent}, {"cot", Paradigm::ExplicitCot}});
      else if (k == "modeling")
        c.modeling = parse_enum<Modeling>(k, v.get<std::string>(),
                                          {{"probabilistic", Modeling::Probabilistic}, {"deterministic", Modeling::Deterministic}});
      else if (k == "prior")
        c.prior = parse_enum<PriorKind>(k, v.get<std::string>(), {{"vision", PriorKind::Vision}, {"text", PriorKind::Text}});
      else if (k == "use_kl") c.mask.use_kl = v.get<bool>();
      else if (k == "use_reasoning") c.mask.use_reasoning = v.get<bool>();
      else if (k == "beta") c.beta = v.get<double>();
      else if (k == "reasoning_mode")
        c.reasoning_mode = parse_enum<ReasoningMode>(
            k, v.get<std::string>(), {{"sum_all", ReasoningMode::SumAll}, {"sample_one", ReasoningMode::SampleOne}});
      else if (k == "kl_estimator")
        c.kl_estimator =
            parse_enum<KlEstimator>(k, v.get<std::string>(), {{"closed", KlEstimator::Closed}, {"mc", KlEstimator::MonteCarlo}});
      else if (k == "exact_kl") c.exact_kl = v.get<bool>();
      else if (k == "detach_chain") c.detach_chain = v.get<bool>();
      else if (k == "freeze_backbone") c.freeze_backbone = v.get<bool>();
      else if (k == "grad_clip") c.grad_clip = v.get<double>();
      else if (k == "checkpoint_every") c.checkpoint_every = v.get<int>();
      else throw config_error("train: unknown key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("train: ") + e.what());
  }
  c.validate();
  return c;
}

AdamWConfig TrainConfig::optimizer() const {
  AdamWConfig a;
  a.lr = lr;
  a.weight_decay = weight_decay;
  a.warmup_steps = warmup_steps;
  a.grad_clip = grad_clip;
  return a;
}

namespace {

Mat row_of(const std::vector<float>& v) {
  Mat m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

Var latent_from(Graph& g, Model& model, const Model::Posterior& post, const TrainConfig& cfg, Rng& rng) {
  if (cfg.modeling == Modeling::Deterministic) return post.mu;
  const int d = model.config().d_h;
  Mat eps(1, d);
  for (int i = 0; i < d; ++i) eps(0, i) = rng.normal();
  return model.sample_latent(g, post, eps);
}

}  // namespace

SampleLoss build_latent_loss(Graph& g, Model& model, const Sample& sample, const SegmentPolicy& policy,
                             const VisualCache* cache, const TrainConfig& cfg, Rng& rng) {
  const Segmentation seg = segment(sample, policy);
  const std::size_t K = seg.K();
  const int d = model.config().d_h;
  if (sample.question.empty()) throw data_error("sample " + sample.id + ": empty question");
  if (static_cast<int>(sample.question.size() + K + 1 + sample.answer.size()) > model.config().context)
    throw context_error("sample " + sample.id + " does not fit the model context");
  const bool need_prior = cfg.mask.use_kl;
  if (need_prior && cfg.prior == PriorKind::Vision && cache == nullptr && K > 0)
    throw config_error("vision prior requires a precomputed cache");

  Model::KVCache kv;
  Var hidden = model.forward_chunk(g, model.embed_tokens(g, sample.question), kv);
  Var feed = g.slice_rows(hidden, static_cast<int>(sample.question.size()) - 1, 1);

  Var reasoning_sum, kl_sum;
  std::size_t reasoning_count = 0;
  const auto& emb = model.params().get("tok_emb").value;
  for (std::size_t k = 0; k < K; ++k) {
    const Model::Posterior post = model.latent_head(g, feed);
    Var z = latent_from(g, model, post, cfg, rng);

    const TokenSeq seg_tokens = segment_tokens(sample, seg, k);
    if (seg_tokens.empty()) throw config_error("empty segment in sample " + sample.id);
    if (cfg.mask.use_reasoning) {
      Var logits = model.language_head(g, z);
      Var nll;
      if (cfg.reasoning_mode == ReasoningMode::SumAll) {
        nll = g.nll(logits, std::span<const int>(seg_tokens.data(), seg_tokens.size()));
        reasoning_count += seg_tokens.size();
      } else {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(seg_tokens.size()) - 1));
        const int t = seg_tokens[j];
        nll = g.nll(logits, std::span<const int>(&t, 1));
        reasoning_count += 1;
      }
      reasoning_sum = reasoning_sum.valid() ? g.add(reasoning_sum, nll) : nll;
    }

    if (need_prior) {
      Var z_hat;
      if (cfg.prior == PriorKind::Vision) {
        z_hat = model.adapter(g, g.constant(row_of(cache->lookup(sample.id, k + 1).vector)));
      } else {
        Mat mean = Mat::Zero(1, d);
        for (TokenId t : seg_tokens) mean += emb.row(t);
        z_hat = g.constant(mean / static_cast<double>(seg_tokens.size()));
      }
      Var reg;
      if (cfg.modeling == Modeling::Deterministic) reg = graph::deterministic_regularizer(g, post.mu, z_hat);
      else if (cfg.kl_estimator == KlEstimator::Closed) reg = graph::kl_closed(g, post, z_hat);
      else reg = graph::kl_mc_at(g, post, z, z_hat);
      if (cfg.exact_kl && cfg.modeling == Modeling::Probabilistic)
        reg = g.add(reg, g.constant(Mat::Constant(1, 1, -0.5 * d)));
      kl_sum = kl_sum.valid() ? g.add(kl_sum, reg) : reg;
    }

    Var next = cfg.detach_chain ? g.detach(z) : z;
    feed = model.forward_chunk(g, next, kv);
  }

  // Termination: the hidden state after z_K predicts SEP_REASON, and so does
  // the language head applied to the latent the head would emit next.
  const int sep = Vocabulary::kSepReason;
  Var answer_sum = g.nll(model.language_head(g, feed), std::span<const int>(&sep, 1));
  const Model::Posterior stop_post = model.latent_head(g, feed);
  Var stop_z = latent_from(g, model, stop_post, cfg, rng);
  answer_sum = g.add(answer_sum, g.nll(model.language_head(g, stop_z), std::span<const int>(&sep, 1)));

  TokenSeq tail{Vocabulary::kSepReason};
  tail.insert(tail.end(), sample.answer.begin(), sample.answer.end());
  std::vector<int> targets(sample.answer.begin(), sample.answer.end());
  targets.push_back(Vocabulary::kEos);
  Var ans_hidden = model.forward_chunk(g, model.embed_tokens(g, tail), kv);
  answer_sum = g.add(answer_sum, g.nll(model.language_head(g, ans_hidden), targets));

  SampleLoss out;
  out.K = K;
  out.answer = g.scale(answer_sum, 1.0 / static_cast<double>(targets.size() + 2));
  out.reasoning = reasoning_sum.valid() ? g.scale(reasoning_sum, 1.0 / static_cast<double>(
                                                                     cfg.reasoning_mode == ReasoningMode::SumAll ? reasoning_count : K))
                                        : g.constant(Mat::Zero(1, 1));
  out.kl = kl_sum.valid() ? g.scale(kl_sum, 1.0 / static_cast<double>(K)) : g.constant(Mat::Zero(1, 1));
  out.total = out.answer;
  if (cfg.mask.use_reasoning) out.total = g.add(out.total, out.reasoning);
  if (cfg.mask.use_kl) out.total = g.add(out.total, g.scale(out.kl, cfg.beta));
  return out;
}

namespace {

std::string param_norms(const Model& model) {
  std::ostringstream os;
  for (const auto* p : model.params().all()) os << ' ' << p->name << '=' << p->value.norm();
  return os.str();
}

}  // namespace

LossBreakdown train_step(Model& model, AdamW& opt, const std::vector<const Sample*>& batch,
                         const SegmentPolicy& policy, const VisualCache* cache, const TrainConfig& cfg, Rng& rng,
                         StepStats* stats) {
  if (batch.empty()) throw config_error("train_step: empty batch");
  model.params().zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double a = 0.0, r = 0.0, kl = 0.0;
  for (const Sample* s : batch) {
    Graph g;
    Var root;
    if (cfg.paradigm == Paradigm::ExplicitCot) {
      root = graph::cot_mle_loss(g, model, *s);
      a += g.scalar(root);
    } else {
      const SampleLoss loss = build_latent_loss(g, model, *s, policy, cache, cfg, rng);
      a += g.scalar(loss.answer);
      r += g.scalar(loss.reasoning);
      kl += g.scalar(loss.kl);
      root = loss.total;
    }
    if (!std::isfinite(g.scalar(root)))
      throw numerical_error("non-finite loss on sample " + s->id + "; parameter norms:" + param_norms(model));
    g.backward(g.scale(root, inv));
  }
  LossMask mask = cfg.mask;
  if (cfg.paradigm == Paradigm::ExplicitCot) mask = {false, false};
  LossBreakdown out = combine(a * inv, r * inv, kl * inv, mask, cfg.beta);
  const StepStats st = opt.step();
  if (stats) *stats = st;
  return out;
}

nlohmann::json TrainLogRecord::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["answer_ce"] = loss.answer_ce;
  j["reasoning_ce"] = loss.reasoning_ce;
  j["kl"] = loss.kl;
  j["total"] = loss.total;
  j["lr"] = lr;
  j["grad_norm"] = grad_norm;
  return j;
}

std::size_t max_segments(const Dataset& data, const SegmentPolicy& policy) {
  std::size_t m = 0;
  for (const auto& s : data) m = std::max(m, segment(s, policy).K());
  return m;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::derive(seed, 0x5348554600000000ULL + epoch);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

nlohmann::json cache_fingerprints(const VisualCache* cache) {
  if (!cache) return nullptr;
  const auto& m = cache->manifest();
  return {{"encoder_fingerprint", m.encoder_fingerprint},
          {"render_fingerprint", m.render_fingerprint},
          {"mode", m.mode},
          {"d_v", m.d_v},
          {"encoder_seed", m.encoder_seed},
          {"segment_policy", m.segment_policy}};
}

}  // namespace

TrainResult train(Model& model, const TrainConfig& cfg, const TrainRequest& req) {
  cfg.validate();
  if (!req.data || req.data->empty()) throw data_error("train: empty dataset");
  if (!req.vocab) throw config_error("train: vocabulary required");
  if (static_cast<int>(req.vocab->size()) > model.config().vocab_size)
    throw config_error("train: vocabulary larger than the model's vocab_size");
  const bool vision = cfg.paradigm == Paradigm::Latent && cfg.prior == PriorKind::Vision && cfg.mask.use_kl;
  if (vision) {
    if (!req.cache) throw config_error("train: vision prior requires a cache");
    if (req.cache->manifest().d_v != model.config().d_v)
      throw data_error("stale cache: d_v " + std::to_string(req.cache->manifest().d_v) + " != model d_v " +
                       std::to_string(model.config().d_v));
    if (req.cache->manifest().segment_policy != req.policy.str())
      throw data_error("stale cache: built for segment policy " + req.cache->manifest().segment_policy);
    if (req.cache_spec) req.cache->check_compatible(*req.cache_spec);
  }
  model.set_backbone_frozen(cfg.freeze_backbone);

  TrainResult result;
  result.max_train_K = max_segments(*req.data, req.policy);
  AdamW opt(model.params(), cfg.optimizer());
  Rng rng = Rng::derive(cfg.seed, 0x65707300);  // "eps"
  long start = 0;
  if (!req.resume_from.empty()) {
    Checkpoint ck = load_checkpoint(req.resume_from);
    if (!(ck.meta.model == model.config())) throw config_error("resume: model configuration differs from checkpoint");
    auto dst = model.params().all();
    auto src = ck.model->params().all();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
    if (!ck.has_optimizer) throw data_error("resume: checkpoint has no optimizer state");
    opt.restore(ck.optimizer_steps, std::move(ck.adam_m), std::move(ck.adam_v));
    rng.load(ck.meta.rng_state);
    start = ck.meta.step;
  }

  std::ofstream log;
  if (!req.run_dir.empty()) {
    std::filesystem::create_directories(req.run_dir);
    log.open(std::filesystem::path(req.run_dir) / "train_log.jsonl", start > 0 ? std::ios::app : std::ios::trunc);
  }

  auto save = [&](long step) {
    if (req.run_dir.empty()) return;
    CheckpointMeta meta;
    meta.model = model.config();
    meta.train = cfg.to_json();
    meta.vocab = *req.vocab;
    meta.cache = vision ? cache_fingerprints(req.cache) : nlohmann::json(nullptr);
    meta.step = step;
    meta.rng_state = rng.save();
    meta.max_train_K = result.max_train_K;
    meta.segment_policy = req.policy.str();
    meta.config_echo = req.config_echo;
    const std::string path = (std::filesystem::path(req.run_dir) / ("ckpt-" + std::to_string(step))).string();
    save_checkpoint(path, model, &opt, meta);
    result.final_checkpoint = path;
  };

  const std::size_t n = req.data->size();
  std::uint64_t cached_epoch = ~0ULL;
  std::vector<std::size_t> order;
  std::vector<const Sample*> batch;
  for (long step = start + 1; step <= cfg.max_steps; ++step) {
    batch.clear();
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::uint64_t idx = static_cast<std::uint64_t>(step - 1) * static_cast<std::uint64_t>(cfg.batch_size) +
                                static_cast<std::uint64_t>(b);
      const std::uint64_t epoch = idx / n;
      if (epoch != cached_epoch) {
        order = epoch_order(n, cfg.seed, epoch);
        cached_epoch = epoch;
      }
      batch.push_back(&(*req.data)[order[idx % n]]);
    }
    StepStats st;
    TrainLogRecord rec;
    rec.loss = train_step(model, opt, batch, req.policy, vision ? req.cache : nullptr, cfg, rng, &st);
    rec.step = step;
    rec.lr = st.lr;
    rec.grad_norm = st.grad_norm;
    if (log.is_open()) log << rec.to_json().dump() << '\n';
    result.log.push_back(rec);
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.max_steps) save(step);
  }
  save(std::max<long>(start, cfg.max_steps));
  return result;
}

}  // namespace vlr
