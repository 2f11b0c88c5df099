#include "vlr/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "vlr/error.hpp"

namespace vlr {

namespace {

constexpr char kMagic[8] = {'V', 'L', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void write_mat(std::ostream& out, const Mat& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Mat read_mat(std::istream& in, Eigen::Index r, Eigen::Index c, const std::string& path) {
  Mat m(r, c);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw data_error("truncated checkpoint " + path);
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const AdamW* opt, const CheckpointMeta& meta) {
  nlohmann::ordered_json h;
  h["model"] = model.config().to_json();
  h["train"] = meta.train;
  h["vocab"] = meta.vocab.to_json();
  h["cache"] = meta.cache;
  h["step"] = meta.step;
  h["rng_state"] = meta.rng_state;
  h["max_train_K"] = meta.max_train_K;
  h["segment_policy"] = meta.segment_policy;
  h["config"] = meta.config_echo;
  auto shapes = nlohmann::ordered_json::array();
  for (const auto* p : model.params().all()) shapes.push_back({p->name, p->value.rows(), p->value.cols()});
  h["params"] = std::move(shapes);
  h["optimizer"] = opt ? nlohmann::json{{"steps", opt->steps_taken()}} : nlohmann::json(nullptr);
  const std::string header = h.dump();

  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw data_error("cannot write checkpoint " + tmp);
    out.write(kMagic, sizeof kMagic);
    const std::uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto* p : model.params().all()) write_mat(out, p->value);
    if (opt) {
      for (const auto& m : opt->first_moments()) write_mat(out, m);
      for (const auto& v : opt->second_moments()) write_mat(out, v);
    }
    if (!out) throw data_error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw data_error("not a checkpoint: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kVersion) throw data_error("unsupported checkpoint version " + std::to_string(version));
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw data_error("truncated checkpoint " + path);

  Checkpoint ck;
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
    ck.meta.model = ModelConfig::from_json(h.at("model"));
    ck.meta.train = h.at("train");
    ck.meta.vocab = Vocabulary::from_json(h.at("vocab"));
    ck.meta.cache = h.at("cache");
    ck.meta.step = h.at("step").get<long>();
    ck.meta.rng_state = h.at("rng_state").get<std::string>();
    ck.meta.max_train_K = h.at("max_train_K").get<std::size_t>();
    ck.meta.segment_policy = h.at("segment_policy").get<std::string>();
    ck.meta.config_echo = h.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw data_error("corrupt checkpoint header in " + path + ": " + e.what());
  }
  ck.model = std::make_unique<Model>(ck.meta.model, 0);
  auto params = ck.model->params().all();
  const auto& shapes = h.at("params");
  if (shapes.size() != params.size()) throw data_error("checkpoint parameter count mismatch in " + path);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& s = shapes[i];
    if (s.at(0).get<std::string>() != params[i]->name || s.at(1).get<Eigen::Index>() != params[i]->value.rows() ||
        s.at(2).get<Eigen::Index>() != params[i]->value.cols())
      throw data_error("checkpoint parameter layout mismatch at " + params[i]->name);
    params[i]->value = read_mat(in, params[i]->value.rows(), params[i]->value.cols(), path);
  }
  if (!h.at("optimizer").is_null()) {
    ck.has_optimizer = true;
    ck.optimizer_steps = h.at("optimizer").at("steps").get<long>();
    for (const auto* p : params) ck.adam_m.push_back(read_mat(in, p->value.rows(), p->value.cols(), path));
    for (const auto* p : params) ck.adam_v.push_back(read_mat(in, p->value.rows(), p->value.cols(), path));
  }
  return ck;
}

}  // namespace vlr
