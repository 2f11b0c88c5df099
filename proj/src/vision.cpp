#include "vlr/vision.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "vlr/error.hpp"
#include "vlr/rng.hpp"

namespace vlr {

static_assert(std::endian::native == std::endian::little, "cache format assumes a little-endian host");

namespace fs = std::filesystem;

EncoderMode EncoderMode::from_name(const std::string& name) {
  for (const auto& m : all())
    if (m.name == name) return m;
  throw config_error("unknown encoder mode: " + name + " (expected Tiny, Small, Base, Large)");
}

PatchEncoder::PatchEncoder(int d_v, std::uint64_t seed) : d_v_(d_v), seed_(seed) {
  if (d_v < 8) throw config_error("vision: d_v must be >= 8");
  constexpr int in = kPatchSize * kPatchSize;
  Rng rng = Rng::derive(seed, 0x7669736e);  // "visn"
  // Gain 2 keeps typical text patches (10-30% ink) in tanh's responsive range.
  const double std = 2.0 / std::sqrt(static_cast<double>(in));
  weight_.resize(d_v, in);
  for (int i = 0; i < d_v; ++i)
    for (int j = 0; j < in; ++j) weight_(i, j) = static_cast<float>(std * rng.normal());
  bias_.resize(d_v);
  for (int i = 0; i < d_v; ++i) bias_(i) = static_cast<float>(0.1 * rng.normal());
}

std::uint64_t PatchEncoder::fingerprint(const EncoderMode& mode) const {
  const std::string s = "patch-encoder-v1|d_v=" + std::to_string(d_v_) + "|seed=" + std::to_string(seed_) +
                        "|mode=" + mode.name + "|res=" + std::to_string(mode.resolution);
  return fnv1a64(s);
}

float PatchEncoder::positional(int patch, int j) const {
  const double rate = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / static_cast<double>(d_v_));
  const double a = static_cast<double>(patch) * rate;
  return static_cast<float>(0.5 * ((j % 2 == 0) ? std::sin(a) : std::cos(a)));
}

namespace {

MatrixXfR ink_of(const RenderedImage& img) {
  MatrixXfR m(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) m(y, x) = 1.0f - static_cast<float>(img.at(x, y)) / 255.0f;
  return m;
}

MatrixXfR resize_bilinear(const MatrixXfR& src, int out_h, int out_w) {
  MatrixXfR dst(out_h, out_w);
  const int in_h = static_cast<int>(src.rows()), in_w = static_cast<int>(src.cols());
  const float sy = static_cast<float>(in_h) / static_cast<float>(out_h);
  const float sx = static_cast<float>(in_w) / static_cast<float>(out_w);
  std::vector<int> x0(static_cast<std::size_t>(out_w)), x1(static_cast<std::size_t>(out_w));
  std::vector<float> fx(static_cast<std::size_t>(out_w));
  for (int x = 0; x < out_w; ++x) {
    float c = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
    c = std::clamp(c, 0.0f, static_cast<float>(in_w - 1));
    const auto ux = static_cast<std::size_t>(x);
    x0[ux] = static_cast<int>(std::floor(c));
    x1[ux] = std::min(x0[ux] + 1, in_w - 1);
    fx[ux] = c - static_cast<float>(x0[ux]);
  }
  for (int y = 0; y < out_h; ++y) {
    float c = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
    c = std::clamp(c, 0.0f, static_cast<float>(in_h - 1));
    const int y0 = static_cast<int>(std::floor(c));
    const int y1 = std::min(y0 + 1, in_h - 1);
    const float fy = c - static_cast<float>(y0);
    for (int x = 0; x < out_w; ++x) {
      const auto ux = static_cast<std::size_t>(x);
      const float top = src(y0, x0[ux]) * (1.0f - fx[ux]) + src(y0, x1[ux]) * fx[ux];
      const float bot = src(y1, x0[ux]) * (1.0f - fx[ux]) + src(y1, x1[ux]) * fx[ux];
      dst(y, x) = top * (1.0f - fy) + bot * fy;
    }
  }
  return dst;
}

}  // namespace

MatrixXfR PatchEncoder::preprocess(const RenderedImage& image, const EncoderMode& mode) const {
  if (image.width < 1 || image.height < 1 || image.pixels.size() != static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height))
    throw data_error("vision: invalid image");
  const int res = mode.resolution;
  const MatrixXfR ink = ink_of(image);
  if (mode.preprocess == EncoderMode::Preprocess::Resize) return resize_bilinear(ink, res, res);

  MatrixXfR out = MatrixXfR::Zero(res, res);
  if (image.width <= res && image.height <= res) {
    out.topLeftCorner(image.height, image.width) = ink;
    return out;
  }
  warn("vision: " + std::to_string(image.width) + "x" + std::to_string(image.height) + " image exceeds " +
       mode.name + " resolution, scaling to fit before padding");
  const double scale = static_cast<double>(res) / static_cast<double>(std::max(image.width, image.height));
  const int h = std::max(1, std::min(res, static_cast<int>(std::lround(image.height * scale))));
  const int w = std::max(1, std::min(res, static_cast<int>(std::lround(image.width * scale))));
  out.topLeftCorner(h, w) = resize_bilinear(ink, h, w);
  return out;
}

namespace {
std::atomic<std::uint64_t> g_encode_calls{0};
}

std::uint64_t encode_call_count() noexcept { return g_encode_calls.load(); }

MatrixXfR PatchEncoder::token_vectors(const RenderedImage& image, const EncoderMode& mode) const {
  g_encode_calls.fetch_add(1);
  if (mode.token_count != (mode.resolution / kPatchSize) * (mode.resolution / kPatchSize))
    throw config_error("vision: inconsistent encoder mode " + mode.name);
  const MatrixXfR square = preprocess(image, mode);
  const int grid = mode.resolution / kPatchSize;
  MatrixXfR patches(mode.token_count, kPatchSize * kPatchSize);
  for (int py = 0; py < grid; ++py) {
    for (int px = 0; px < grid; ++px) {
      const int t = py * grid + px;
      for (int r = 0; r < kPatchSize; ++r)
        patches.row(t).segment(r * kPatchSize, kPatchSize) = square.row(py * kPatchSize + r).segment(px * kPatchSize, kPatchSize);
    }
  }
  MatrixXfR tokens = patches * weight_.transpose();
  for (int t = 0; t < mode.token_count; ++t)
    for (int j = 0; j < d_v_; ++j) tokens(t, j) = std::tanh(tokens(t, j) + bias_(j) + positional(t, j));
  return tokens;
}

VisualRepresentation PatchEncoder::encode(const RenderedImage& image, const EncoderMode& mode) const {
  const MatrixXfR tokens = token_vectors(image, mode);
  VisualRepresentation rep;
  rep.vector.resize(static_cast<std::size_t>(d_v_));
  for (int j = 0; j < d_v_; ++j) {
    double acc = 0.0;
    for (int t = 0; t < mode.token_count; ++t) acc += tokens(t, j);
    rep.vector[static_cast<std::size_t>(j)] = static_cast<float>(acc / mode.token_count);
  }
  rep.encoder_fingerprint = fingerprint(mode);
  rep.render_fingerprint = image.config_fingerprint;
  return rep;
}

nlohmann::json CacheManifest::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = version;
  j["d_v"] = d_v;
  j["mode"] = mode;
  j["encoder_seed"] = encoder_seed;
  j["encoder_fingerprint"] = encoder_fingerprint;
  j["render_fingerprint"] = render_fingerprint;
  j["segment_policy"] = segment_policy;
  j["render"] = render_config;
  j["count"] = entries.size();
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : entries) arr.push_back({{"sample_id", e.sample_id}, {"k", e.k}, {"offset", e.offset}});
  j["entries"] = std::move(arr);
  return j;
}

CacheManifest CacheManifest::from_json(const nlohmann::json& j) {
  CacheManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw data_error("unsupported cache version " + std::to_string(m.version));
    m.d_v = j.at("d_v").get<int>();
    m.mode = j.at("mode").get<std::string>();
    m.encoder_seed = j.at("encoder_seed").get<std::uint64_t>();
    m.encoder_fingerprint = j.at("encoder_fingerprint").get<std::uint64_t>();
    m.render_fingerprint = j.at("render_fingerprint").get<std::uint64_t>();
    m.segment_policy = j.at("segment_policy").get<std::string>();
    m.render_config = j.at("render");
    for (const auto& e : j.at("entries"))
      m.entries.push_back({e.at("sample_id").get<std::string>(), e.at("k").get<std::size_t>(), e.at("offset").get<std::uint64_t>()});
    if (j.at("count").get<std::size_t>() != m.entries.size()) throw data_error("cache manifest count mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("corrupt cache manifest: ") + e.what());
  }
  return m;
}

namespace {

void check_fingerprints(const CacheManifest& m, const PrecomputeSpec& spec, const std::string& where) {
  const bool ok = m.d_v == spec.d_v && m.mode == spec.mode.name && m.encoder_seed == spec.encoder_seed &&
                  m.render_fingerprint == config_fingerprint(spec.render) && m.segment_policy == spec.policy.str();
  if (!ok) throw data_error("stale cache at " + where + ": fingerprints do not match the requested configuration");
}

}  // namespace

CacheManifest precompute(const Dataset& data, const Vocabulary& vocab, const PrecomputeSpec& spec,
                         const std::string& out_dir) {
  spec.render.validate();
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  if (fs::exists(dir / "manifest.json")) {
    std::ifstream in(dir / "manifest.json");
    const auto existing = CacheManifest::from_json(nlohmann::json::parse(in));
    check_fingerprints(existing, spec, out_dir);
  }

  const PatchEncoder encoder(spec.d_v, spec.encoder_seed);
  CacheManifest m;
  m.d_v = spec.d_v;
  m.mode = spec.mode.name;
  m.encoder_seed = spec.encoder_seed;
  m.encoder_fingerprint = encoder.fingerprint(spec.mode);
  m.render_fingerprint = config_fingerprint(spec.render);
  m.segment_policy = spec.policy.str();
  m.render_config = spec.render.to_json();

  const fs::path tmp_vec = dir / "vectors.bin.tmp";
  std::ofstream vec(tmp_vec, std::ios::binary);
  if (!vec) throw data_error("cannot write " + tmp_vec.string());
  // Identical segment text renders and encodes identically; encode it once.
  std::unordered_map<std::string, std::vector<float>> memo;
  std::uint64_t offset = 0;
  for (const auto& s : data) {
    const Segmentation seg = segment(s, spec.policy);
    for (std::size_t k = 0; k < seg.K(); ++k) {
      const TokenSeq toks = segment_tokens(s, seg, k);
      const std::string text = vocab.detokenize(toks);
      auto it = memo.find(text);
      if (it == memo.end()) {
        const RenderedImage img = render(text, spec.render);
        it = memo.emplace(text, encoder.encode(img, spec.mode).vector).first;
      }
      vec.write(reinterpret_cast<const char*>(it->second.data()), static_cast<std::streamsize>(it->second.size() * sizeof(float)));
      m.entries.push_back({s.id, k + 1, offset});
      offset += it->second.size() * sizeof(float);
    }
  }
  vec.close();
  if (!vec) throw data_error("failed writing " + tmp_vec.string());
  const fs::path tmp_manifest = dir / "manifest.json.tmp";
  {
    std::ofstream man(tmp_manifest, std::ios::binary);
    man << nlohmann::ordered_json(m.to_json()).dump(1) << '\n';
    if (!man) throw data_error("failed writing " + tmp_manifest.string());
  }
  fs::rename(tmp_vec, dir / "vectors.bin");
  fs::rename(tmp_manifest, dir / "manifest.json");
  return m;
}

VisualCache VisualCache::open(const std::string& dir) {
  const fs::path d(dir);
  std::ifstream man(d / "manifest.json");
  if (!man) throw data_error("no cache manifest in " + dir);
  VisualCache c;
  try {
    c.manifest_ = CacheManifest::from_json(nlohmann::json::parse(man));
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error("corrupt cache manifest in " + dir + ": " + e.what());
  }
  std::ifstream vec(d / "vectors.bin", std::ios::binary | std::ios::ate);
  if (!vec) throw data_error("no vectors.bin in " + dir);
  const auto bytes = static_cast<std::size_t>(vec.tellg());
  vec.seekg(0);
  const std::size_t expect = c.manifest_.count() * static_cast<std::size_t>(c.manifest_.d_v) * sizeof(float);
  if (bytes != expect) throw data_error("cache store size mismatch in " + dir);
  c.data_.resize(bytes / sizeof(float));
  vec.read(reinterpret_cast<char*>(c.data_.data()), static_cast<std::streamsize>(bytes));
  for (const auto& e : c.manifest_.entries) c.index_[{e.sample_id, e.k}] = e.offset;
  return c;
}

bool VisualCache::contains(const std::string& sample_id, std::size_t k) const { return index_.contains({sample_id, k}); }

VisualRepresentation VisualCache::lookup(const std::string& sample_id, std::size_t k) const {
  const auto it = index_.find({sample_id, k});
  if (it == index_.end()) throw data_error("cache miss: sample '" + sample_id + "' segment " + std::to_string(k));
  VisualRepresentation rep;
  const auto start = static_cast<std::ptrdiff_t>(it->second / sizeof(float));
  rep.vector.assign(data_.begin() + start, data_.begin() + start + manifest_.d_v);
  rep.sample_id = sample_id;
  rep.k = k;
  rep.encoder_fingerprint = manifest_.encoder_fingerprint;
  rep.render_fingerprint = manifest_.render_fingerprint;
  return rep;
}

void VisualCache::check_compatible(const PrecomputeSpec& spec) const { check_fingerprints(manifest_, spec, "cache"); }

}  // namespace vlr
