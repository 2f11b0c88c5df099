#include "vlr/optim.hpp"

#include <cmath>

#include "vlr/error.hpp"

namespace vlr {

AdamW::AdamW(ParamStore& params, const AdamWConfig& cfg) : params_(params), cfg_(cfg) {
  if (cfg_.lr < 0.0) throw config_error("optimizer: lr must be >= 0");
  if (cfg_.warmup_steps < 0) throw config_error("optimizer: warmup_steps must be >= 0");
  for (const auto* p : params_.all()) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

double AdamW::lr_at(long t) const {
  if (cfg_.warmup_steps <= 0 || t >= cfg_.warmup_steps) return cfg_.lr;
  return cfg_.lr * static_cast<double>(t) / static_cast<double>(cfg_.warmup_steps);
}

StepStats AdamW::step() {
  auto ps = params_.all();
  double sq = 0.0;
  for (const auto* p : ps)
    if (!p->frozen) sq += p->grad.squaredNorm();
  StepStats st;
  st.grad_norm = std::sqrt(sq);
  if (!std::isfinite(st.grad_norm)) throw numerical_error("optimizer: non-finite gradient norm");
  const double clip = (cfg_.grad_clip > 0.0 && st.grad_norm > cfg_.grad_clip) ? cfg_.grad_clip / st.grad_norm : 1.0;

  ++t_;
  st.lr = lr_at(t_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Parameter& p = *ps[i];
    if (p.frozen) continue;
    Mat& m = m_[i];
    Mat& v = v_[i];
    const auto g = p.grad.array() * clip;
    m.array() = cfg_.beta1 * m.array() + (1.0 - cfg_.beta1) * g;
    v.array() = cfg_.beta2 * v.array() + (1.0 - cfg_.beta2) * g.square();
    if (p.decay) p.value.array() -= st.lr * cfg_.weight_decay * p.value.array();
    p.value.array() -= st.lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps));
  }
  return st;
}

void AdamW::restore(long t, std::vector<Mat> m, std::vector<Mat> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw data_error("optimizer state does not match parameters");
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i].rows() != m_[i].rows() || m[i].cols() != m_[i].cols() || v[i].rows() != v_[i].rows() ||
        v[i].cols() != v_[i].cols())
      throw data_error("optimizer state shape mismatch");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace vlr
