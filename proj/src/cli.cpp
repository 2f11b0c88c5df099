#include "vlr/cli.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "vlr/checkpoint.hpp"
#include "vlr/config.hpp"
#include "vlr/error.hpp"
#include "vlr/eval.hpp"
#include "vlr/infer.hpp"
#include "vlr/render.hpp"
#include "vlr/suite.hpp"
#include "vlr/train.hpp"
#include "vlr/vision.hpp"

extern char** environ;

namespace vlr {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON configuration file (sections corpus, render, vision, model, train, infer, eval)");
    app->add_option("--set", overrides, "Override a config value: section.key=value (repeatable, applied in order)");
  }

  ExperimentConfig load() const {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig() : ExperimentConfig::load(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    return cfg;
  }
};

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out << nlohmann::ordered_json(j).dump(2) << '\n';
}

std::string self_exe() { return fs::read_symlink("/proc/self/exe").string(); }

int spawn_and_wait(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  pid_t pid = 0;
  if (posix_spawn(&pid, argv[0], nullptr, nullptr, argv.data(), environ) != 0)
    throw data_error("failed to spawn " + args[0]);
  int status = 0;
  if (waitpid(pid, &status, 0) < 0) throw data_error("waitpid failed");
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
}

ExperimentConfig config_from_checkpoint(const Checkpoint& ck) {
  ExperimentConfig cfg = ck.meta.config_echo.is_object() ? ExperimentConfig::from_json(ck.meta.config_echo) : ExperimentConfig();
  cfg.model = ck.meta.model;
  cfg.train = TrainConfig::from_json(ck.meta.train);
  return cfg;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& common, const std::optional<std::size_t>& n, const std::optional<std::uint64_t>& seed,
                 const std::string& out, const std::optional<int>& steps_min, const std::optional<int>& steps_max,
                 const std::optional<std::int64_t>& operand_max, const std::optional<std::int64_t>& result_max,
                 const std::optional<std::string>& ops) {
  ExperimentConfig cfg = common.load();
  SyntheticConfig sc = cfg.corpus.train;
  if (n) sc.n = *n;
  if (seed) sc.seed = *seed;
  if (steps_min) sc.steps_min = *steps_min;
  if (steps_max) sc.steps_max = *steps_max;
  if (operand_max) sc.operand_max = *operand_max;
  if (result_max) sc.result_max = *result_max;
  if (ops) sc.ops = *ops;
  Vocabulary vocab;
  const Dataset data = generate_synthetic(sc, vocab);
  const fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_jsonl(out, data, vocab);
  std::cerr << "wrote " << data.size() << " samples to " << out << '\n';
  return 0;
}

int cmd_render_preview(const Common& common, const std::string& text, const std::string& data_path, std::size_t index,
                       int segment_k, const std::string& out) {
  const ExperimentConfig cfg = common.load();
  RenderedImage img;
  if (!text.empty()) {
    img = render(text, cfg.render);
  } else {
    if (data_path.empty()) throw Error(ErrorKind::Usage, "render-preview needs --text or --data");
    Vocabulary vocab;
    const Dataset data = load_jsonl(data_path, vocab);
    if (index >= data.size()) throw data_error("--index out of range");
    const Sample& s = data[index];
    if (segment_k > 0) {
      const Segmentation seg = segment(s, cfg.segment_policy());
      if (static_cast<std::size_t>(segment_k) > seg.K()) throw data_error("--segment out of range");
      img = render(segment_tokens(s, seg, static_cast<std::size_t>(segment_k - 1)), vocab, cfg.render);
    } else {
      img = render(s.reasoning, vocab, cfg.render);
    }
  }
  const fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  if (p.extension() == ".pgm") write_pgm(out, img);
  else write_png(out, img);
  std::cerr << "wrote " << img.width << "x" << img.height << " image to " << out << '\n';
  return 0;
}

int cmd_precompute(const Common& common, const std::string& data_path, const std::string& out) {
  const ExperimentConfig cfg = common.load();
  Vocabulary vocab;
  const Dataset data = load_jsonl(data_path, vocab);
  const CacheManifest m = precompute(data, vocab, cfg.precompute_spec(), out);
  std::cerr << "cached " << m.count() << " segment vectors in " << out << '\n';
  return 0;
}

int cmd_train(const Common& common, const std::string& data_path, const std::string& test_path,
              const std::string& cache_dir, const std::optional<std::uint64_t>& seed, std::string name,
              const std::string& resume) {
  ExperimentConfig cfg = common.load();
  if (seed) cfg.train.seed = *seed;
  if (!data_path.empty()) {
    cfg.corpus.train_path = data_path;
    cfg.corpus.test_path = test_path.empty() ? data_path : test_path;
  }
  if (name.empty()) name = cfg.eval.name;
  DataBundle data = prepare_data(cfg);
  std::optional<VisualCache> cache;
  const bool vision = cfg.train.paradigm == Paradigm::Latent && cfg.train.prior == PriorKind::Vision && cfg.train.mask.use_kl;
  if (vision) {
    if (!cache_dir.empty()) {
      cache = VisualCache::open(cache_dir);
      cache->check_compatible(cfg.precompute_spec());
    } else {
      cache = ensure_cache(cfg, data);
    }
  }
  Model model(cfg.model, cfg.train.seed);
  TrainRequest req;
  req.data = &data.train;
  req.vocab = &data.vocab;
  req.policy = cfg.segment_policy();
  req.cache = cache ? &*cache : nullptr;
  if (cache) req.cache_spec = cfg.precompute_spec();
  req.run_dir = (fs::path(cfg.run_root()) / name / ("seed" + std::to_string(cfg.train.seed))).string();
  req.resume_from = resume;
  req.config_echo = cfg.to_json();
  const TrainResult r = train(model, cfg.train, req);
  std::cout << r.final_checkpoint << '\n';
  if (!r.log.empty()) std::cerr << "final loss " << r.log.back().loss.total << " after " << r.log.back().step << " steps\n";
  return 0;
}

void apply_infer_flags(InferConfig& ic, const std::string& decode, const std::optional<std::uint64_t>& seed,
                       const std::optional<int>& k_max, const std::optional<int>& max_answer_len) {
  if (decode == "greedy") ic.decode.kind = DecodePolicy::Kind::Greedy;
  else if (decode == "sample") ic.decode.kind = DecodePolicy::Kind::Sample;
  else if (!decode.empty()) throw config_error("--decode must be sample or greedy");
  if (seed) ic.seed = *seed;
  if (k_max) ic.k_max = *k_max;
  if (max_answer_len) ic.max_answer_len = *max_answer_len;
  ic.validate();
}

int cmd_infer(const std::string& ckpt_path, const std::string& question, const std::string& data_path,
              const std::string& decode, const std::optional<std::uint64_t>& seed, const std::optional<int>& k_max,
              const std::optional<int>& max_answer_len, const std::string& out_path) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  const ExperimentConfig cfg = config_from_checkpoint(ck);
  InferConfig ic = cfg.infer;
  apply_infer_flags(ic, decode, seed, k_max, max_answer_len);
  Vocabulary vocab = ck.meta.vocab;
  std::vector<std::pair<std::string, TokenSeq>> items;
  if (!question.empty()) {
    items.emplace_back("cli:1", vocab.tokenize(question));
  } else {
    if (data_path.empty()) throw Error(ErrorKind::Usage, "infer needs --question or --data");
    for (auto& s : load_jsonl(data_path, vocab, UnknownTokens::Reject)) items.emplace_back(s.id, s.question);
  }
  std::ofstream file;
  if (!out_path.empty()) file.open(out_path);
  std::ostream& out = out_path.empty() ? std::cout : file;
  for (std::size_t i = 0; i < items.size(); ++i) {
    Rng rng = Rng::derive(ic.seed, 0x6576616c00000000ULL + i);
    const InferResult r = cfg.train.paradigm == Paradigm::ExplicitCot
                              ? cot_generate(*ck.model, vocab, items[i].second, ic, rng)
                              : reason_and_answer(*ck.model, vocab, items[i].second, ic, cfg.train.modeling,
                                                  ck.meta.max_train_K, rng);
    nlohmann::ordered_json j;
    j["id"] = items[i].first;
    j["answer"] = r.answer;
    j["reasoning_length"] = r.reasoning_length;
    j["truncated"] = r.truncated;
    out << j.dump() << '\n';
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path, const std::string& decode,
             const std::optional<std::uint64_t>& seed, const std::string& reports_dir, const std::string& result_json,
             const std::string& label) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  ExperimentConfig cfg = config_from_checkpoint(ck);
  InferConfig ic = cfg.infer;
  apply_infer_flags(ic, decode, seed, std::nullopt, std::nullopt);
  Vocabulary vocab = ck.meta.vocab;
  Dataset test;
  std::string dataset_id;
  if (!data_path.empty()) {
    test = load_jsonl(data_path, vocab);
    dataset_id = "file:" + data_path;
  } else {
    ExperimentConfig c2 = cfg;
    DataBundle b = prepare_data(c2);
    if (!(b.vocab == ck.meta.vocab)) throw data_error("regenerated data vocabulary differs from the checkpoint's");
    test = std::move(b.test);
    dataset_id = b.id;
  }
  for (const auto& s : test)
    for (TokenId t : s.question)
      if (t >= ck.meta.model.vocab_size) throw data_error("sample " + s.id + " uses tokens unknown to the model");
  const EvalResult ev = evaluate(*ck.model, vocab, test, ic, cfg.train.paradigm, cfg.train.modeling, ck.meta.max_train_K);

  SeedResult sr;
  sr.seed = cfg.train.seed;
  sr.accuracy = ev.accuracy;
  sr.mean_length = ev.mean_reasoning_length;
  sr.mean_length_untruncated = ev.mean_length_untruncated;
  sr.truncated = ev.truncated;
  if (!result_json.empty()) write_json_file(result_json, sr.to_json());

  SuiteReport rep;
  rep.suite = "eval";
  rep.timestamp = utc_timestamp();
  rep.dataset_id = dataset_id;
  rep.config = cfg.to_json();
  VariantReport row;
  row.spec.name = label.empty() ? fs::path(ckpt_path).filename().string() : label;
  row.spec.label = std::string(to_string(cfg.train.paradigm)) + " checkpoint " + ckpt_path;
  row.spec.length_convention = cfg.train.paradigm == Paradigm::ExplicitCot ? "STEP_DELIM count" : "latent steps";
  row.spec.cfg = cfg;
  row.seeds.push_back(sr);
  finalize_row(row);
  rep.rows.push_back(row);
  if (!reports_dir.empty()) {
    const std::string dir = write_report(rep, reports_dir);
    std::ofstream rec(fs::path(dir) / "predictions.jsonl");
    for (const auto& r : ev.records) rec << r.to_json().dump() << '\n';
    std::cout << dir << '\n';
  }
  std::cerr << "accuracy " << ev.accuracy << ", mean reasoning length " << ev.mean_reasoning_length << '\n';
  return 0;
}

int cmd_ablate(const Common& common, const std::string& suite, const std::string& seeds_csv) {
  ExperimentConfig base = common.load();
  if (!seeds_csv.empty()) base.apply_override("eval.seeds=[" + seeds_csv + "]");
  const std::vector<VariantSpec> variants = suite_variants(suite, base);
  DataBundle data = prepare_data(base);
  const fs::path root = fs::path(base.run_root()) / base.eval.name / suite;
  fs::create_directories(root);
  const std::string train_file = (root / "train.jsonl").string();
  const std::string test_file = (root / "test.jsonl").string();
  write_jsonl(train_file, data.train, data.vocab);
  write_jsonl(test_file, data.test, data.vocab);

  SuiteReport rep;
  rep.suite = suite;
  rep.timestamp = utc_timestamp();
  rep.dataset_id = data.id;
  rep.majority_answer = majority_answer(data.train, data.vocab);
  rep.majority_accuracy = majority_accuracy(data.train, data.test, data.vocab);
  rep.config = base.to_json();
  const std::string exe = self_exe();
  for (const auto& v : variants) {
    VariantReport row;
    row.spec = v;
    const fs::path vdir = root / v.name;
    ExperimentConfig vc = v.cfg;
    vc.corpus.train_path = train_file;
    vc.corpus.test_path = test_file;
    vc.eval.run_root = base.run_root();
    const std::string cfg_file = (vdir / "config.json").string();
    write_json_file(cfg_file, vc.to_json());
    for (std::uint64_t seed : vc.eval.seeds) {
      const std::string name = (fs::path(base.eval.name) / suite / v.name).string();
      const std::string ckpt =
          (fs::path(base.run_root()) / name / ("seed" + std::to_string(seed)) / ("ckpt-" + std::to_string(vc.train.max_steps))).string();
      const std::string result = (vdir / ("seed" + std::to_string(seed)) / "result.json").string();
      int rc = spawn_and_wait({exe, "train", "--config", cfg_file, "--seed", std::to_string(seed), "--name", name});
      if (rc == 0)
        rc = spawn_and_wait({exe, "eval", "--checkpoint", ckpt, "--data", test_file, "--seed",
                             std::to_string(vc.infer.seed + 7919 * seed), "--result-json", result, "--reports-dir", ""});
      if (rc != 0) {
        row.error += "seed " + std::to_string(seed) + " exited with " + std::to_string(rc) + "; ";
        continue;
      }
      std::ifstream in(result);
      const auto j = nlohmann::json::parse(in);
      SeedResult s;
      s.seed = seed;
      s.accuracy = j.at("accuracy").get<double>();
      s.mean_length = j.at("mean_reasoning_length").get<double>();
      s.mean_length_untruncated = j.at("mean_reasoning_length_untruncated").get<double>();
      s.truncated = j.at("truncated").get<std::size_t>();
      row.seeds.push_back(s);
      std::cerr << suite << '/' << v.name << " seed " << seed << ": accuracy " << s.accuracy << '\n';
    }
    finalize_row(row);
    rep.rows.push_back(std::move(row));
  }
  const std::string dir = write_report(rep, base.eval.reports_dir);
  std::cout << dir << '\n';
  for (const auto& r : rep.rows)
    if (!r.error.empty()) return 4;
  return 0;
}

int cmd_sweep(const Common& common, const std::string& rates_csv, const std::string& plot) {
  ExperimentConfig base = common.load();
  if (!rates_csv.empty()) base.apply_override("eval.compression_rates=[" + rates_csv + "]");
  SuiteOptions opts;
  opts.progress = [](const std::string& s) { std::cerr << s << '\n'; };
  const SuiteReport rep = run_suite("compression_sweep", base, opts);
  const std::string dir = write_report(rep, base.eval.reports_dir);
  if (!plot.empty()) {
    // Accuracy versus compression rate as a static bar chart.
    std::ostringstream svg;
    const int w = 80 * static_cast<int>(rep.rows.size()) + 60, h = 260;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<line x1=\"40\" y1=\"220\" x2=\"" << w - 10 << "\" y2=\"220\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
      const auto& r = rep.rows[i];
      const double bh = 200.0 * r.accuracy.mean;
      const int x = 50 + 80 * static_cast<int>(i);
      svg << "<rect x=\"" << x << "\" y=\"" << 220 - bh << "\" width=\"50\" height=\"" << bh << "\" fill=\"#4a7\"/>\n"
          << "<text x=\"" << x << "\" y=\"240\" font-size=\"12\">" << r.spec.name << "</text>\n"
          << "<text x=\"" << x << "\" y=\"" << 215 - bh << "\" font-size=\"11\">" << 100.0 * r.accuracy.mean << "%</text>\n";
    }
    svg << "</svg>\n";
    std::ofstream(plot) << svg.str();
  }
  std::cout << dir << '\n';
  return 0;
}

}  // namespace

int dispatch(int argc, char** argv) {
  CLI::App app{"Variational latent reasoning with rendered-reasoning priors"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic arithmetic dataset (JSON Lines)");
  std::optional<std::size_t> gn;
  std::optional<std::uint64_t> gseed;
  std::optional<int> smin, smax;
  std::optional<std::int64_t> omax, rmax;
  std::optional<std::string> gops;
  std::string gout;
  common.attach(gen);
  gen->add_option("--n", gn, "Number of samples");
  gen->add_option("--seed", gseed, "Generator seed");
  gen->add_option("--steps-min", smin);
  gen->add_option("--steps-max", smax);
  gen->add_option("--operand-max", omax);
  gen->add_option("--result-max", rmax);
  gen->add_option("--ops", gops, "Subset of +-*");
  gen->add_option("--out", gout, "Output path")->required();

  auto* prev = app.add_subcommand("render-preview", "Render text or a reasoning segment to PNG/PGM");
  std::string ptext, pdata, pout;
  std::size_t pindex = 0;
  int pseg = 0;
  Common pcommon;
  pcommon.attach(prev);
  prev->add_option("--text", ptext);
  prev->add_option("--data", pdata, "JSONL dataset");
  prev->add_option("--index", pindex, "Sample index in --data");
  prev->add_option("--segment", pseg, "1-based segment (0: whole chain)");
  prev->add_option("--out", pout)->required();

  auto* pre = app.add_subcommand("precompute", "Render and encode every reasoning segment into a cache");
  std::string predata, preout;
  Common precommon;
  precommon.attach(pre);
  pre->add_option("--data", predata)->required();
  pre->add_option("--out", preout, "Cache directory")->required();

  auto* tr = app.add_subcommand("train", "Train one model");
  std::string tdata, ttest, tcache, tname, tresume;
  std::optional<std::uint64_t> tseed;
  Common tcommon;
  tcommon.attach(tr);
  tr->add_option("--data", tdata, "Training JSONL (default: generate from the corpus section)");
  tr->add_option("--test", ttest, "Test JSONL (joins the vocabulary)");
  tr->add_option("--cache", tcache, "Precomputed cache directory");
  tr->add_option("--seed", tseed);
  tr->add_option("--name", tname, "Run name under the run root");
  tr->add_option("--resume", tresume, "Checkpoint to resume from");

  auto* inf = app.add_subcommand("infer", "Answer questions with a trained checkpoint (JSON Lines output)");
  std::string ickpt, iq, idata, idecode, iout;
  std::optional<std::uint64_t> iseed;
  std::optional<int> ikmax, ialen;
  inf->add_option("--checkpoint", ickpt)->required();
  inf->add_option("--question", iq);
  inf->add_option("--data", idata);
  inf->add_option("--decode", idecode, "sample or greedy");
  inf->add_option("--seed", iseed);
  inf->add_option("--k-max", ikmax);
  inf->add_option("--max-answer-len", ialen);
  inf->add_option("--out", iout);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint and write a report");
  std::string eckpt, edata, edecode, ereports = "reports", eresult, elabel;
  std::optional<std::uint64_t> eseed;
  ev->add_option("--checkpoint", eckpt)->required();
  ev->add_option("--data", edata, "Test JSONL (default: regenerate from the checkpoint's config)");
  ev->add_option("--decode", edecode);
  ev->add_option("--seed", eseed);
  ev->add_option("--reports-dir", ereports, "Report root (empty: no report)");
  ev->add_option("--result-json", eresult, "Also write the per-seed metrics here");
  ev->add_option("--label", elabel);

  auto* ab = app.add_subcommand("ablate", "Run an ablation suite, one child process per run");
  std::string asuite, aseeds;
  Common acommon;
  acommon.attach(ab);
  ab->add_option("--suite", asuite, "main, paradigms, modeling, regularization, compression_sweep, extreme")->required();
  ab->add_option("--seeds", aseeds, "Comma-separated seeds");

  auto* sw = app.add_subcommand("sweep-compression", "Train and evaluate across compression rates");
  std::string srates, splot;
  Common scommon;
  scommon.attach(sw);
  sw->add_option("--rates", srates, "Comma-separated rates (default 2,5,10)");
  sw->add_option("--plot", splot, "Write an SVG bar chart of accuracy per rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, gn, gseed, gout, smin, smax, omax, rmax, gops);
    if (prev->parsed()) return cmd_render_preview(pcommon, ptext, pdata, pindex, pseg, pout);
    if (pre->parsed()) return cmd_precompute(precommon, predata, preout);
    if (tr->parsed()) return cmd_train(tcommon, tdata, ttest, tcache, tseed, tname, tresume);
    if (inf->parsed()) return cmd_infer(ickpt, iq, idata, idecode, iseed, ikmax, ialen, iout);
    if (ev->parsed()) return cmd_eval(eckpt, edata, edecode, eseed, ereports, eresult, elabel);
    if (ab->parsed()) return cmd_ablate(acommon, asuite, aseeds);
    if (sw->parsed()) return cmd_sweep(scommon, srates, splot);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    if (e.kind() == ErrorKind::Usage) std::cerr << app.help();
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error [data]: " << e.what() << '\n';
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error [data]: " << e.what() << '\n';
    return 4;
  }
  std::cerr << app.help();
  return 2;
}

}  // namespace vlr
