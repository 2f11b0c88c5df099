#pragma once

#include <iosfwd>
#include <vector>

#include "vlr/autograd.hpp"

namespace vlr {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  int warmup_steps = 100;
  double grad_clip = 1.0;  // global norm; <= 0 disables
};

struct StepStats {
  double lr = 0.0;
  double grad_norm = 0.0;  // before clipping
};

/// Decoupled weight decay Adam with linear warmup then a constant rate.
/// Frozen parameters are skipped entirely.
class AdamW {
 public:
  AdamW(ParamStore& params, const AdamWConfig& cfg);

  /// Learning rate applied at 1-based step t.
  double lr_at(long t) const;
  StepStats step();
  long steps_taken() const noexcept { return t_; }

  const AdamWConfig& config() const noexcept { return cfg_; }
  const std::vector<Mat>& first_moments() const noexcept { return m_; }
  const std::vector<Mat>& second_moments() const noexcept { return v_; }
  void restore(long t, std::vector<Mat> m, std::vector<Mat> v);

 private:
  ParamStore& params_;
  AdamWConfig cfg_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace vlr
