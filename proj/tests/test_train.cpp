#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "util.hpp"
#include "vlr/checkpoint.hpp"
#include "vlr/error.hpp"
#include "vlr/optim.hpp"
#include "vlr/train.hpp"

using namespace vlr;

namespace {

struct Fixture {
  Vocabulary vocab;
  Dataset data;
  PrecomputeSpec spec;
  std::string cache_dir;

  explicit Fixture(const std::string& name, std::size_t n = 12, int d_v = 16) {
    SyntheticConfig sc;
    sc.n = n;
    sc.steps_min = 1;
    sc.steps_max = 2;
    sc.result_max = 400;
    data = generate_synthetic(sc, vocab);
    spec.d_v = d_v;
    cache_dir = tu::tmp_dir(name);
    precompute(data, vocab, spec, cache_dir);
  }
  int V() const { return static_cast<int>(vocab.size()); }
};

TrainConfig quick(int steps) {
  TrainConfig c;
  c.lr = 1e-3;
  c.warmup_steps = 2;
  c.batch_size = 3;
  c.max_steps = steps;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(AdamW, WarmupSchedule) {
  ParamStore ps;
  ps.add("w", Mat::Ones(2, 2), true);
  AdamWConfig cfg;
  cfg.lr = 0.01;
  cfg.warmup_steps = 10;
  AdamW opt(ps, cfg);
  EXPECT_DOUBLE_EQ(opt.lr_at(1), 0.001);
  EXPECT_DOUBLE_EQ(opt.lr_at(5), 0.005);
  EXPECT_DOUBLE_EQ(opt.lr_at(10), 0.01);
  EXPECT_DOUBLE_EQ(opt.lr_at(1000), 0.01);
}

TEST(AdamW, DecoupledDecayOnlyOnMatrices) {
  ParamStore ps;
  ps.add("w", Mat::Ones(2, 2), true);
  ps.add("b", Mat::Ones(1, 2), false);
  ps.zero_grad();
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  cfg.warmup_steps = 0;
  AdamW opt(ps, cfg);
  opt.step();
  EXPECT_NEAR(ps.get("w").value(0, 0), 1.0 - 0.1 * 0.5, 1e-12);
  EXPECT_EQ(ps.get("b").value(0, 0), 1.0);
}

TEST(AdamW, ClipsGlobalNorm) {
  ParamStore ps;
  ps.add("w", Mat::Zero(1, 2), false);
  ps.get("w").grad = Mat::Constant(1, 2, 30.0);
  AdamWConfig cfg;
  cfg.warmup_steps = 0;
  AdamW opt(ps, cfg);
  const StepStats st = opt.step();
  EXPECT_NEAR(st.grad_norm, std::sqrt(1800.0), 1e-9);
}

TEST(AdamW, NonFiniteGradient) {
  ParamStore ps;
  ps.add("w", Mat::Zero(1, 2), false);
  ps.get("w").grad = Mat::Constant(1, 2, std::nan(""));
  AdamW opt(ps, AdamWConfig{});
  try {
    opt.step();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numerical);
  }
}

TEST(TrainStep, ZeroLrLeavesParametersUnchanged) {
  Fixture fx("train_lr0");
  const VisualCache cache = VisualCache::open(fx.cache_dir);
  Model m(tu::small_model(fx.V()), 1);
  std::vector<Mat> before;
  for (auto* p : m.params().all()) before.push_back(p->value);
  TrainConfig cfg = quick(1);
  cfg.lr = 0.0;
  AdamW opt(m.params(), cfg.optimizer());
  Rng rng(0);
  const LossBreakdown l =
      train_step(m, opt, {&fx.data[0], &fx.data[1]}, SegmentPolicy::sentence(), &cache, cfg, rng);
  EXPECT_GT(l.total, 0.0);
  EXPECT_NEAR(l.total, l.answer_ce + l.reasoning_ce + l.kl, 1e-9);
  auto params = m.params().all();
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_EQ(params[i]->value, before[i]) << params[i]->name;
}

TEST(TrainStep, FullObjectiveGradient) {
  Vocabulary vocab;
  Dataset d{tu::make_sample(vocab, "g", "3+4; then *2", "3+4=7. 7*2=14.", "14")};
  while (vocab.size() < 32) vocab.add("w" + std::to_string(vocab.size()));
  PrecomputeSpec spec;
  spec.d_v = 16;
  const std::string dir = tu::tmp_dir("train_grad");
  precompute(d, vocab, spec, dir);
  const VisualCache cache = VisualCache::open(dir);
  Model m(tu::small_model(32, 16, 16), 2);
  TrainConfig cfg;
  const Rng base(9);
  auto build = [&](Graph& g) {
    Rng rng = base;
    return build_latent_loss(g, m, d[0], SegmentPolicy::sentence(), &cache, cfg, rng);
  };
  ASSERT_EQ(segment(d[0], SegmentPolicy::sentence()).K(), 2u);
  const auto errs = tu::gradient_check(
      m.params(), [&] { Graph g(false); return g.scalar(build(g).total); },
      [&] { Graph g; g.backward(build(g).total); });
  for (const char* group : {"latent_head", "adapter", "language_head", "backbone"}) {
    ASSERT_TRUE(errs.count(group)) << group;
    EXPECT_LT(errs.at(group), 1e-4) << group;
  }
}

TEST(TrainStep, SingleSampleOverfit) {
  Vocabulary vocab;
  Dataset d{tu::make_sample(vocab, "o", "3+4; then *2", "3+4=7. 7*2=14.", "14")};
  PrecomputeSpec spec;
  const std::string dir = tu::tmp_dir("train_overfit");
  precompute(d, vocab, spec, dir);
  const VisualCache cache = VisualCache::open(dir);
  ModelConfig mc;
  mc.vocab_size = static_cast<int>(vocab.size());
  Model m(mc, 0);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.warmup_steps = 10;
  AdamW opt(m.params(), cfg.optimizer());
  Rng rng(0);
  LossBreakdown last;
  for (int i = 0; i < 200; ++i) last = train_step(m, opt, {&d[0]}, SegmentPolicy::sentence(), &cache, cfg, rng);
  EXPECT_LT(last.answer_ce, 0.05);
}

TEST(Train, DeterministicAndDistinctSeeds) {
  Fixture fx("train_det");
  const VisualCache cache = VisualCache::open(fx.cache_dir);
  auto run = [&](std::uint64_t seed, const std::string& dir) {
    Model m(tu::small_model(fx.V()), seed);
    TrainConfig cfg = quick(6);
    cfg.seed = seed;
    TrainRequest req;
    req.data = &fx.data;
    req.vocab = &fx.vocab;
    req.cache = &cache;
    req.cache_spec = fx.spec;
    req.run_dir = dir;
    return train(m, cfg, req);
  };
  const std::string a = tu::tmp_dir("train_det_a"), b = tu::tmp_dir("train_det_b");
  const TrainResult ra = run(0, a), rb = run(0, b);
  ASSERT_EQ(ra.log.size(), 6u);
  for (std::size_t i = 0; i < ra.log.size(); ++i) EXPECT_EQ(ra.log[i].loss.total, rb.log[i].loss.total);
  EXPECT_EQ(slurp(a + "/train_log.jsonl"), slurp(b + "/train_log.jsonl"));
  EXPECT_EQ(slurp(ra.final_checkpoint), slurp(rb.final_checkpoint));

  std::set<std::string> ckpts;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const TrainResult r = run(s, tu::tmp_dir("train_seed" + std::to_string(s)));
    ckpts.insert(slurp(r.final_checkpoint));
  }
  EXPECT_EQ(ckpts.size(), 5u);
}

TEST(Train, ResumeMatchesStraightRun) {
  Fixture fx("train_resume");
  const VisualCache cache = VisualCache::open(fx.cache_dir);
  TrainConfig cfg = quick(10);
  cfg.checkpoint_every = 5;
  TrainRequest req;
  req.data = &fx.data;
  req.vocab = &fx.vocab;
  req.cache = &cache;
  req.run_dir = tu::tmp_dir("train_resume_a");
  Model straight(tu::small_model(fx.V()), 0);
  const TrainResult full = train(straight, cfg, req);
  ASSERT_TRUE(std::filesystem::exists(req.run_dir + "/ckpt-5"));

  Model resumed(tu::small_model(fx.V()), 0);
  TrainRequest r2 = req;
  r2.resume_from = req.run_dir + "/ckpt-5";
  r2.run_dir = tu::tmp_dir("train_resume_b");
  const TrainResult tail = train(resumed, cfg, r2);
  ASSERT_EQ(tail.log.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(tail.log[i].step, full.log[i + 5].step);
    EXPECT_EQ(tail.log[i].loss.total, full.log[i + 5].loss.total);
  }
  auto a = straight.params().all();
  auto b = resumed.params().all();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value);
}

TEST(Train, StaleCacheRefused) {
  Fixture fx("train_stale");
  const VisualCache cache = VisualCache::open(fx.cache_dir);
  Model m(tu::small_model(fx.V()), 0);
  TrainRequest req;
  req.data = &fx.data;
  req.vocab = &fx.vocab;
  req.cache = &cache;
  PrecomputeSpec other = fx.spec;
  other.render.dpi = 96;
  req.cache_spec = other;
  try {
    train(m, quick(1), req);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
  }
}

TEST(Train, TextPriorAndCotRunWithoutCache) {
  Fixture fx("train_nocache");
  for (Paradigm p : {Paradigm::Latent, Paradigm::ExplicitCot}) {
    Model m(tu::small_model(fx.V()), 0);
    TrainConfig cfg = quick(3);
    cfg.paradigm = p;
    cfg.prior = PriorKind::Text;
    TrainRequest req;
    req.data = &fx.data;
    req.vocab = &fx.vocab;
    const TrainResult r = train(m, cfg, req);
    ASSERT_EQ(r.log.size(), 3u);
    for (const auto& rec : r.log) EXPECT_TRUE(std::isfinite(rec.loss.total));
  }
}

TEST(Train, VisionPriorNeedsCache) {
  Fixture fx("train_needcache");
  Model m(tu::small_model(fx.V()), 0);
  TrainRequest req;
  req.data = &fx.data;
  req.vocab = &fx.vocab;
  EXPECT_THROW(train(m, quick(1), req), Error);
}

TEST(Checkpoint, RoundTrip) {
  Fixture fx("ckpt_rt");
  Model m(tu::small_model(fx.V()), 3);
  AdamW opt(m.params(), AdamWConfig{});
  CheckpointMeta meta;
  meta.model = m.config();
  meta.vocab = fx.vocab;
  meta.step = 42;
  meta.max_train_K = 2;
  meta.rng_state = Rng(5).save();
  const std::string path = tu::tmp_dir("ckpt_rt_out") + "/c";
  save_checkpoint(path, m, &opt, meta);
  const Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.meta.step, 42);
  EXPECT_EQ(ck.meta.max_train_K, 2u);
  EXPECT_TRUE(ck.meta.vocab == fx.vocab);
  EXPECT_TRUE(ck.has_optimizer);
  auto a = m.params().all();
  auto b = ck.model->params().all();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value);
  std::ofstream(path, std::ios::binary) << "garbage";
  EXPECT_THROW(load_checkpoint(path), Error);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c;
  c.beta = 0.25;
  c.prior = PriorKind::Text;
  c.reasoning_mode = ReasoningMode::SampleOne;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
}
