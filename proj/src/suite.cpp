#include "vlr/suite.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "vlr/error.hpp"

namespace vlr {

namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

DataBundle prepare_data(ExperimentConfig& cfg) {
  DataBundle b;
  if (!cfg.corpus.train_path.empty()) {
    b.train = load_jsonl(cfg.corpus.train_path, b.vocab);
    if (cfg.corpus.test_path.empty()) throw config_error("corpus.test_path is required with corpus.train_path");
    b.test = load_jsonl(cfg.corpus.test_path, b.vocab);
    b.id = "files:" + cfg.corpus.train_path + "|" + cfg.corpus.test_path;
  } else {
    b.train = generate_synthetic(cfg.corpus.train, b.vocab);
    SyntheticConfig t = cfg.corpus.train;
    t.n = cfg.corpus.test_n;
    t.seed = cfg.corpus.test_seed;
    if (t.seed == cfg.corpus.train.seed) throw config_error("corpus.test_seed must differ from corpus.seed");
    b.test = generate_synthetic(t, b.vocab);
    b.id = "synthetic:" + nlohmann::json(cfg.to_json()["corpus"]).dump();
  }
  b.id = b.id + "#" + hex64(fnv1a64(b.id));
  cfg.model.vocab_size = static_cast<int>(b.vocab.size());
  cfg.model.d_v = cfg.vision.d_v;
  return b;
}

VisualCache ensure_cache(const ExperimentConfig& cfg, const DataBundle& data) {
  const PrecomputeSpec spec = cfg.precompute_spec();
  const std::string key = data.id + "|" + spec.policy.str() + "|" + canonical_string(spec.render) + "|" + spec.mode.name +
                          "|" + std::to_string(spec.d_v) + "|" + std::to_string(spec.encoder_seed);
  const fs::path dir = fs::path(cfg.run_root()) / "cache" / hex64(fnv1a64(key));
  if (fs::exists(dir / "manifest.json")) {
    VisualCache c = VisualCache::open(dir.string());
    c.check_compatible(spec);
    return c;
  }
  precompute(data.train, data.vocab, spec, dir.string());
  return VisualCache::open(dir.string());
}

std::vector<std::string> suite_names() {
  return {"main", "paradigms", "modeling", "regularization", "compression_sweep", "extreme"};
}

std::vector<VariantSpec> suite_variants(const std::string& suite, const ExperimentConfig& base) {
  const std::string latent = "latent steps";
  std::vector<VariantSpec> out;
  auto add = [&](std::string name, std::string label, auto&& edit, std::string conv) {
    VariantSpec v{std::move(name), std::move(label), std::move(conv), base};
    edit(v.cfg);
    out.push_back(std::move(v));
  };
  if (suite == "main") {
    add("cot", "explicit chain of thought", [](ExperimentConfig& c) { c.train.paradigm = Paradigm::ExplicitCot; },
        "STEP_DELIM count");
    add("latent_no_prior", "latent, KL off", [](ExperimentConfig& c) { c.train.mask = {false, true}; }, latent);
    add("latent_full", "latent, KL on", [](ExperimentConfig& c) { c.train.mask = {true, true}; }, latent);
  } else if (suite == "paradigms") {
    for (const bool kl : {false, true})
      for (const bool rs : {false, true}) {
        const std::string name = std::string(kl ? "kl" : "nokl") + "_" + (rs ? "reason" : "noreason");
        const std::string label = std::string("KL ") + (kl ? "on" : "off") + ", reasoning " + (rs ? "on" : "off");
        add(name, label, [kl, rs](ExperimentConfig& c) { c.train.mask = {kl, rs}; }, latent);
      }
  } else if (suite == "modeling") {
    add("deterministic", "deterministic (z = mu)", [](ExperimentConfig& c) { c.train.modeling = Modeling::Deterministic; },
        latent);
    add("probabilistic", "probabilistic", [](ExperimentConfig& c) { c.train.modeling = Modeling::Probabilistic; }, latent);
  } else if (suite == "regularization") {
    add("text_prior", "text-embedding prior", [](ExperimentConfig& c) { c.train.prior = PriorKind::Text; }, latent);
    add("vision_prior", "rendered-image prior", [](ExperimentConfig& c) { c.train.prior = PriorKind::Vision; }, latent);
  } else if (suite == "compression_sweep") {
    for (int rate : base.eval.compression_rates) {
      if (rate < 1) throw config_error("compression rate must be >= 1");
      add("rate_" + std::to_string(rate), "compression rate " + std::to_string(rate),
          [rate](ExperimentConfig& c) { c.vision.segment_policy = SegmentPolicy::fixed_rate(rate).str(); }, latent);
    }
  } else if (suite == "extreme") {
    add("whole_chain", "entire chain in one image (K = 1)",
        [](ExperimentConfig& c) { c.vision.segment_policy = SegmentPolicy::whole().str(); }, latent);
  } else {
    throw config_error("unknown suite '" + suite + "'");
  }
  return out;
}

nlohmann::json SeedResult::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["accuracy"] = accuracy;
  j["mean_reasoning_length"] = mean_length;
  j["mean_reasoning_length_untruncated"] = mean_length_untruncated;
  j["truncated"] = truncated;
  j["final_loss"] = final_loss;
  return j;
}

nlohmann::json VariantReport::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = spec.name;
  j["label"] = spec.label;
  j["length_convention"] = spec.length_convention;
  j["config"] = spec.cfg.to_json();
  auto seeds_j = nlohmann::ordered_json::array();
  for (const auto& s : seeds) seeds_j.push_back(nlohmann::ordered_json(s.to_json()));
  j["seeds"] = seeds_j;
  j["accuracy"] = {{"mean", accuracy.mean}, {"ci95", accuracy.half_width}};
  j["reasoning_length"] = {{"mean", length.mean}, {"ci95", length.half_width}};
  if (!error.empty()) j["error"] = error;
  return j;
}

nlohmann::json SuiteReport::to_json() const {
  nlohmann::ordered_json j;
  j["suite"] = suite;
  j["timestamp"] = timestamp;
  j["dataset_id"] = dataset_id;
  j["majority_baseline"] = {{"answer", majority_answer}, {"accuracy", majority_accuracy}};
  j["config"] = config;
  auto rows_j = nlohmann::ordered_json::array();
  for (const auto& r : rows) rows_j.push_back(nlohmann::ordered_json(r.to_json()));
  j["rows"] = rows_j;
  return j;
}

std::string SuiteReport::markdown() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "# " << suite << "\n\n";
  os << "Dataset: `" << dataset_id << "`\n\n";
  os << "| Variant | Setting | Accuracy (%) | #L | #L convention | Seeds |\n";
  os << "|---|---|---|---|---|---|\n";
  os << "| majority | most frequent training answer `" << majority_answer << "` | " << 100.0 * majority_accuracy
     << " | - | - | - |\n";
  for (const auto& r : rows) {
    os << "| " << r.spec.name << " | " << r.spec.label << " | ";
    if (!r.error.empty() && r.seeds.empty()) {
      os << "failed | - | " << r.spec.length_convention << " | 0 |\n";
      continue;
    }
    os << 100.0 * r.accuracy.mean << " ± " << 100.0 * r.accuracy.half_width << " | " << r.length.mean << " ± "
       << r.length.half_width << " | " << r.spec.length_convention << " | " << r.seeds.size() << " |\n";
  }
  os << "\nIntervals are 95% Student-t over seeds.\n";
  return os.str();
}

const VariantReport& SuiteReport::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.spec.name == name) return r;
  throw config_error("report has no row '" + name + "'");
}

SeedResult run_variant_seed(const VariantSpec& variant, const DataBundle& data, std::uint64_t seed,
                            const VisualCache* cache, const std::string& run_dir) {
  ExperimentConfig cfg = variant.cfg;
  cfg.train.seed = seed;
  cfg.model.vocab_size = static_cast<int>(data.vocab.size());
  cfg.model.d_v = cfg.vision.d_v;
  Model model(cfg.model, seed);
  TrainRequest req;
  req.data = &data.train;
  req.vocab = &data.vocab;
  req.policy = cfg.segment_policy();
  req.cache = cache;
  if (cache) req.cache_spec = cfg.precompute_spec();
  req.run_dir = run_dir;
  req.config_echo = cfg.to_json();
  const TrainResult tr = train(model, cfg.train, req);

  InferConfig icfg = cfg.infer;
  icfg.seed = cfg.infer.seed + 7919 * seed;
  const EvalResult ev = evaluate(model, data.vocab, data.test, icfg, cfg.train.paradigm, cfg.train.modeling, tr.max_train_K);
  if (!run_dir.empty()) {
    std::ofstream rec(fs::path(run_dir) / "predictions.jsonl");
    for (const auto& r : ev.records) rec << r.to_json().dump() << '\n';
  }
  SeedResult s;
  s.seed = seed;
  s.accuracy = ev.accuracy;
  s.mean_length = ev.mean_reasoning_length;
  s.mean_length_untruncated = ev.mean_length_untruncated;
  s.truncated = ev.truncated;
  s.final_loss = tr.log.empty() ? 0.0 : tr.log.back().loss.total;
  for (const auto& r : tr.log) s.loss_trace.push_back(r.loss.total);
  return s;
}

void finalize_row(VariantReport& row) {
  std::vector<double> acc, len;
  for (const auto& s : row.seeds) {
    acc.push_back(s.accuracy);
    len.push_back(s.mean_length);
  }
  if (acc.size() >= 2) {
    row.accuracy = confidence_interval(acc);
    row.length = confidence_interval(len);
  } else if (acc.size() == 1) {
    row.accuracy = {acc[0], 0.0};
    row.length = {len[0], 0.0};
  }
}

SuiteReport run_suite(const std::string& suite, const ExperimentConfig& base, const SuiteOptions& opts) {
  ExperimentConfig cfg = base;
  const std::vector<VariantSpec> variants = suite_variants(suite, cfg);
  DataBundle data = prepare_data(cfg);
  SuiteReport rep;
  rep.suite = suite;
  rep.timestamp = utc_timestamp();
  rep.dataset_id = data.id;
  rep.majority_answer = majority_answer(data.train, data.vocab);
  rep.majority_accuracy = majority_accuracy(data.train, data.test, data.vocab);
  rep.config = cfg.to_json();

  std::map<std::string, std::unique_ptr<VisualCache>> caches;
  for (const VariantSpec& v0 : variants) {
    VariantSpec v = v0;
    v.cfg.model.vocab_size = cfg.model.vocab_size;
    VariantReport row;
    row.spec = v;
    try {
      const VisualCache* cache = nullptr;
      const auto& t = v.cfg.train;
      if (t.paradigm == Paradigm::Latent && t.prior == PriorKind::Vision && t.mask.use_kl) {
        const std::string key = v.cfg.vision.segment_policy;
        if (!caches.contains(key)) {
          if (opts.progress) opts.progress("precompute " + key);
          caches[key] = std::make_unique<VisualCache>(ensure_cache(v.cfg, data));
        }
        cache = caches[key].get();
      }
      for (std::uint64_t seed : v.cfg.eval.seeds) {
        const std::string dir = opts.write_files ? (fs::path(cfg.run_root()) / cfg.eval.name / suite / v.name /
                                                     ("seed" + std::to_string(seed)))
                                                       .string()
                                                 : std::string();
        row.seeds.push_back(run_variant_seed(v, data, seed, cache, dir));
        if (opts.progress) {
          std::ostringstream os;
          os << suite << '/' << v.name << " seed " << seed << ": accuracy " << row.seeds.back().accuracy << ", #L "
             << row.seeds.back().mean_length;
          opts.progress(os.str());
        }
      }
    } catch (const Error& e) {
      row.error = e.what();
      if (opts.progress) opts.progress(suite + "/" + v.name + " failed: " + e.what());
    }
    finalize_row(row);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

std::string write_report(const SuiteReport& report, const std::string& reports_dir) {
  fs::path dir = fs::path(reports_dir) / report.suite / report.timestamp;
  for (int i = 1; fs::exists(dir); ++i)
    dir = fs::path(reports_dir) / report.suite / (report.timestamp + "-" + std::to_string(i));
  fs::create_directories(dir);
  {
    std::ofstream j(dir / "report.json");
    j << nlohmann::ordered_json(report.to_json()).dump(2) << '\n';
  }
  {
    std::ofstream md(dir / "report.md");
    md << report.markdown();
  }
  return dir.string();
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

}  // namespace vlr
