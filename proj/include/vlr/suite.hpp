#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlr/config.hpp"
#include "vlr/eval.hpp"
#include "vlr/vision.hpp"

namespace vlr {

struct DataBundle {
  Vocabulary vocab;
  Dataset train;
  Dataset test;
  std::string id;  // fingerprint of the corpus section (or input files)
};

/// Generates (or loads) train/test with one shared vocabulary and sets the
/// model vocab_size accordingly.
DataBundle prepare_data(ExperimentConfig& cfg);

/// Opens the cache for cfg's precompute spec under <run_root>/cache, building it if absent.
VisualCache ensure_cache(const ExperimentConfig& cfg, const DataBundle& data);

struct VariantSpec {
  std::string name;
  std::string label;
  std::string length_convention;  // "latent steps" or "STEP_DELIM count"
  ExperimentConfig cfg;
};

std::vector<std::string> suite_names();
/// Variants of a suite in table row order.
std::vector<VariantSpec> suite_variants(const std::string& suite, const ExperimentConfig& base);

struct SeedResult {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double mean_length = 0.0;
  double mean_length_untruncated = 0.0;
  std::size_t truncated = 0;
  double final_loss = 0.0;
  std::vector<double> loss_trace;  // total loss per step
  nlohmann::json to_json() const;
};

struct VariantReport {
  VariantSpec spec;
  std::vector<SeedResult> seeds;
  ConfidenceInterval accuracy;
  ConfidenceInterval length;
  std::string error;  // non-empty when a run failed (partial salvage)
  nlohmann::json to_json() const;
};

struct SuiteReport {
  std::string suite;
  std::string timestamp;
  std::string dataset_id;
  std::string majority_answer;
  double majority_accuracy = 0.0;
  nlohmann::json config;
  std::vector<VariantReport> rows;

  nlohmann::json to_json() const;
  std::string markdown() const;
  const VariantReport& row(const std::string& name) const;
};

/// Trains one variant for one seed and evaluates it on the test split.
SeedResult run_variant_seed(const VariantSpec& variant, const DataBundle& data, std::uint64_t seed,
                            const VisualCache* cache, const std::string& run_dir);

/// Fills CI fields from the per-seed results.
void finalize_row(VariantReport& row);

struct SuiteOptions {
  bool write_files = true;
  std::function<void(const std::string&)> progress;
};

SuiteReport run_suite(const std::string& suite, const ExperimentConfig& base, const SuiteOptions& opts = {});

/// Writes <reports_dir>/<suite>/<timestamp>/{report.json, report.md}; returns the directory.
std::string write_report(const SuiteReport& report, const std::string& reports_dir);

std::string utc_timestamp();

}  // namespace vlr
