#include "vlr/config.hpp"

#include <cstdlib>
#include <fstream>

#include "vlr/error.hpp"

namespace vlr {

ExperimentConfig::ExperimentConfig() { corpus.train.n = 5000; }

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json c;
  c["n"] = corpus.train.n;
  c["steps_min"] = corpus.train.steps_min;
  c["steps_max"] = corpus.train.steps_max;
  c["operand_max"] = corpus.train.operand_max;
  c["result_max"] = corpus.train.result_max;
  c["ops"] = corpus.train.ops;
  c["seed"] = corpus.train.seed;
  c["test_n"] = corpus.test_n;
  c["test_seed"] = corpus.test_seed;
  c["train_path"] = corpus.train_path;
  c["test_path"] = corpus.test_path;
  j["corpus"] = c;
  j["render"] = render.to_json();
  j["vision"] = {{"mode", vision.mode},
                 {"d_v", vision.d_v},
                 {"encoder_seed", vision.encoder_seed},
                 {"segment_policy", vision.segment_policy}};
  nlohmann::json m = model.to_json();
  m.erase("vocab_size");
  m.erase("d_v");
  j["model"] = m;
  j["train"] = train.to_json();
  j["infer"] = infer.to_json();
  j["eval"] = {{"seeds", eval.seeds},
               {"compression_rates", eval.compression_rates},
               {"reports_dir", eval.reports_dir},
               {"run_root", eval.run_root},
               {"name", eval.name}};
  return j;
}

namespace {

template <class F>
void for_keys(const nlohmann::json& j, const char* section, F&& f) {
  if (!j.is_object()) throw config_error(std::string(section) + ": section must be an object");
  for (const auto& [k, v] : j.items()) f(k, v);
}

[[noreturn]] void unknown(const char* section, const std::string& key) {
  throw config_error(std::string(section) + ": unknown key '" + key + "'");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (!j.is_object()) throw config_error("config: top level must be an object");
  try {
    for (const auto& [section, body] : j.items()) {
      if (section == "corpus") {
        for_keys(body, "corpus", [&](const std::string& k, const nlohmann::json& v) {
          if (k == "n") c.corpus.train.n = v.get<std::size_t>();
          else if (k == "steps_min") c.corpus.train.steps_min = v.get<int>();
          else if (k == "steps_max") c.corpus.train.steps_max = v.get<int>();
          else if (k == "operand_max") c.corpus.train.operand_max = v.get<std::int64_t>();
          else if (k == "result_max") c.corpus.train.result_max = v.get<std::int64_t>();
          else if (k == "ops") c.corpus.train.ops = v.get<std::string>();
          else if (k == "seed") c.corpus.train.seed = v.get<std::uint64_t>();
          else if (k == "test_n") c.corpus.test_n = v.get<std::size_t>();
          else if (k == "test_seed") c.corpus.test_seed = v.get<std::uint64_t>();
          else if (k == "train_path") c.corpus.train_path = v.get<std::string>();
          else if (k == "test_path") c.corpus.test_path = v.get<std::string>();
          else unknown("corpus", k);
        });
      } else if (section == "render") {
        c.render = RenderConfig::from_json(body);
      } else if (section == "vision") {
        for_keys(body, "vision", [&](const std::string& k, const nlohmann::json& v) {
          if (k == "mode") c.vision.mode = v.get<std::string>();
          else if (k == "d_v") c.vision.d_v = v.get<int>();
          else if (k == "encoder_seed") c.vision.encoder_seed = v.get<std::uint64_t>();
          else if (k == "segment_policy") c.vision.segment_policy = v.get<std::string>();
          else unknown("vision", k);
        });
        EncoderMode::from_name(c.vision.mode);
        SegmentPolicy::parse(c.vision.segment_policy);
        if (c.vision.d_v < 8) throw config_error("vision.d_v must be >= 8");
      } else if (section == "model") {
        nlohmann::json m = body;
        if (m.contains("vocab_size") || m.contains("d_v"))
          throw config_error("model: vocab_size and d_v are derived from the data and vision sections");
        const ModelConfig parsed = ModelConfig::from_json(m);
        const int vs = c.model.vocab_size, dv = c.model.d_v;
        c.model = parsed;
        c.model.vocab_size = vs;
        c.model.d_v = dv;
      } else if (section == "train") {
        c.train = TrainConfig::from_json(body);
      } else if (section == "infer") {
        c.infer = InferConfig::from_json(body);
      } else if (section == "eval") {
        for_keys(body, "eval", [&](const std::string& k, const nlohmann::json& v) {
          if (k == "seeds") c.eval.seeds = v.get<std::vector<std::uint64_t>>();
          else if (k == "compression_rates") c.eval.compression_rates = v.get<std::vector<int>>();
          else if (k == "reports_dir") c.eval.reports_dir = v.get<std::string>();
          else if (k == "run_root") c.eval.run_root = v.get<std::string>();
          else if (k == "name") c.eval.name = v.get<std::string>();
          else unknown("eval", k);
        });
        if (c.eval.seeds.empty()) throw config_error("eval.seeds must not be empty");
      } else {
        throw config_error("config: unknown section '" + section + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  c.model.d_v = c.vision.d_v;
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

void ExperimentConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw config_error("override must look like section.key=value: " + assignment);
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  nlohmann::json j = to_json();
  if (!j.contains(section)) throw config_error("override: unknown section '" + section + "'");
  j[section][key] = value;
  const int vs = model.vocab_size;
  *this = from_json(j);
  model.vocab_size = vs;
}

PrecomputeSpec ExperimentConfig::precompute_spec() const {
  PrecomputeSpec s;
  s.policy = segment_policy();
  s.render = render;
  s.mode = EncoderMode::from_name(vision.mode);
  s.d_v = vision.d_v;
  s.encoder_seed = vision.encoder_seed;
  return s;
}

std::string ExperimentConfig::run_root() const {
  if (const char* env = std::getenv("VLR_RUN_ROOT"); env && *env) return env;
  return eval.run_root;
}

}  // namespace vlr
