#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vlr/corpus.hpp"
#include "vlr/render.hpp"

namespace vlr {

inline constexpr int kPatchSize = 64;

struct EncoderMode {
  enum class Preprocess { Resize, Pad };

  std::string name;
  int resolution = 512;
  int token_count = 64;
  Preprocess preprocess = Preprocess::Resize;

  static EncoderMode tiny() { return {"Tiny", 512, 64, Preprocess::Resize}; }
  static EncoderMode small() { return {"Small", 640, 100, Preprocess::Resize}; }
  static EncoderMode base() { return {"Base", 1024, 256, Preprocess::Pad}; }
  static EncoderMode large() { return {"Large", 1280, 400, Preprocess::Pad}; }
  static EncoderMode from_name(const std::string& name);
  static std::vector<EncoderMode> all() { return {tiny(), small(), base(), large()}; }

  bool operator==(const EncoderMode&) const = default;
};

struct VisualRepresentation {
  std::vector<float> vector;
  std::string sample_id;
  std::size_t k = 0;  // 1-based segment index
  std::uint64_t encoder_fingerprint = 0;
  std::uint64_t render_fingerprint = 0;
};

using MatrixXfR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Frozen patch-projection encoder. Every 64x64 patch of the preprocessed
/// square image is flattened (ink = 1 - pixel/255), mapped through a seeded
/// affine projection, offset by a sinusoidal code of its patch index, and
/// squashed with tanh; the token vectors are mean pooled. The weights are
/// drawn once at construction and never change.
class PatchEncoder {
 public:
  PatchEncoder(int d_v, std::uint64_t seed);

  int dim() const noexcept { return d_v_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t fingerprint(const EncoderMode& mode) const;

  /// Square image of side mode.resolution with values in [0, 1] (ink fraction).
  /// Resize modes stretch bilinearly; pad modes place the image top-left on a
  /// blank canvas, scaling to fit first (with a warning) when it is too large.
  MatrixXfR preprocess(const RenderedImage& image, const EncoderMode& mode) const;

  /// token_count x d_v matrix of per-patch token vectors.
  MatrixXfR token_vectors(const RenderedImage& image, const EncoderMode& mode) const;

  VisualRepresentation encode(const RenderedImage& image, const EncoderMode& mode) const;

  const MatrixXfR& projection() const noexcept { return weight_; }  // d_v x 4096
  const Eigen::VectorXf& bias() const noexcept { return bias_; }
  float positional(int patch, int j) const;

 private:
  int d_v_;
  std::uint64_t seed_;
  MatrixXfR weight_;
  Eigen::VectorXf bias_;
};

/// Number of token_vectors()/encode() evaluations in this process.
std::uint64_t encode_call_count() noexcept;

struct CacheEntry {
  std::string sample_id;
  std::size_t k = 0;  // 1-based
  std::uint64_t offset = 0;  // byte offset into vectors.bin
};

struct CacheManifest {
  int version = 1;
  int d_v = 0;
  std::string mode;
  std::uint64_t encoder_seed = 0;
  std::uint64_t encoder_fingerprint = 0;
  std::uint64_t render_fingerprint = 0;
  std::string segment_policy;
  nlohmann::json render_config;
  std::vector<CacheEntry> entries;

  std::size_t count() const noexcept { return entries.size(); }
  nlohmann::json to_json() const;
  static CacheManifest from_json(const nlohmann::json& j);
};

struct PrecomputeSpec {
  SegmentPolicy policy = SegmentPolicy::sentence();
  RenderConfig render;
  EncoderMode mode = EncoderMode::tiny();
  int d_v = 128;
  std::uint64_t encoder_seed = 1337;
};

/// Render and encode every segment of every sample into `out_dir`
/// ({manifest.json, vectors.bin}). The manifest is written last. An existing
/// cache built with different fingerprints is refused.
CacheManifest precompute(const Dataset& data, const Vocabulary& vocab, const PrecomputeSpec& spec,
                         const std::string& out_dir);

/// Read-only view over a published cache.
class VisualCache {
 public:
  static VisualCache open(const std::string& dir);

  const CacheManifest& manifest() const noexcept { return manifest_; }
  bool contains(const std::string& sample_id, std::size_t k) const;
  /// k is 1-based. Throws a data error naming the key on a miss.
  VisualRepresentation lookup(const std::string& sample_id, std::size_t k) const;

  /// Throws a stale-cache data error unless the cache was built for `spec`.
  void check_compatible(const PrecomputeSpec& spec) const;

 private:
  CacheManifest manifest_;
  std::vector<float> data_;
  std::map<std::pair<std::string, std::size_t>, std::uint64_t> index_;
};

}  // namespace vlr
