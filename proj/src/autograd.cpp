#include "vlr/autograd.hpp"

#include <cmath>
#include <limits>

#include "vlr/error.hpp"

namespace vlr {

Parameter& ParamStore::add(const std::string& name, Mat init, bool decay) {
  for (const auto& p : params_)
    if (p->name == name) throw config_error("duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(init);
  p->decay = decay;
  p->zero_grad();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  throw config_error("no parameter " + name);
}

const Parameter& ParamStore::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return *p;
  throw config_error("no parameter " + name);
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

// ---------------------------------------------------------------------------

Var Graph::push(Mat value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Mat& Graph::value(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  return n.param ? n.param->value : n.value;
}

Mat& Graph::grad_of(Var v) {
  Node& n = node(v);
  if (n.param) {
    if (n.param->grad.rows() != n.param->value.rows() || n.param->grad.cols() != n.param->value.cols()) n.param->zero_grad();
    return n.param->grad;
  }
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::param(Parameter& p) {
  Node n;
  n.param = &p;
  n.needs_grad = record_ && !p.frozen;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Mat m) { return push(std::move(m), false); }

Var Graph::gather(Parameter& table, std::span<const int> rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), table.value.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= table.value.rows()) throw data_error("gather index out of range in " + table.name);
    out.row(static_cast<Eigen::Index>(i)) = table.value.row(rows[i]);
  }
  const bool g = !table.frozen;
  Var r = push(std::move(out), g);
  if (needs(r)) {
    std::vector<int> idx(rows.begin(), rows.end());
    Parameter* tp = &table;
    node(r).back = [this, r, tp, idx = std::move(idx)] {
      const Mat& gr = node(r).grad;
      if (tp->grad.rows() != tp->value.rows()) tp->zero_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) tp->grad.row(idx[i]) += gr.row(static_cast<Eigen::Index>(i));
    };
  }
  return r;
}

Var Graph::linear(Var x, Var w, Var b) {
  Mat out = value(x) * value(w).transpose();
  out.rowwise() += value(b).row(0);
  Var r = push(std::move(out), needs(x) || needs(w) || needs(b));
  if (needs(r)) {
    node(r).back = [this, r, x, w, b] {
      const Mat& g = node(r).grad;
      if (needs(x)) grad_of(x).noalias() += g * value(w);
      if (needs(w)) grad_of(w).noalias() += g.transpose() * value(x);
      if (needs(b)) grad_of(b).row(0) += g.colwise().sum();
    };
  }
  return r;
}

Var Graph::matmul_t(Var x, Var w) {
  Var r = push(value(x) * value(w).transpose(), needs(x) || needs(w));
  if (needs(r)) {
    node(r).back = [this, r, x, w] {
      const Mat& g = node(r).grad;
      if (needs(x)) grad_of(x).noalias() += g * value(w);
      if (needs(w)) grad_of(w).noalias() += g.transpose() * value(x);
    };
  }
  return r;
}

Var Graph::add(Var a, Var b) {
  Var r = push(value(a) + value(b), needs(a) || needs(b));
  if (needs(r)) {
    node(r).back = [this, r, a, b] {
      if (needs(a)) grad_of(a) += node(r).grad;
      if (needs(b)) grad_of(b) += node(r).grad;
    };
  }
  return r;
}

Var Graph::sub(Var a, Var b) {
  Var r = push(value(a) - value(b), needs(a) || needs(b));
  if (needs(r)) {
    node(r).back = [this, r, a, b] {
      if (needs(a)) grad_of(a) += node(r).grad;
      if (needs(b)) grad_of(b) -= node(r).grad;
    };
  }
  return r;
}

Var Graph::mul(Var a, Var b) {
  Var r = push(value(a).cwiseProduct(value(b)), needs(a) || needs(b));
  if (needs(r)) {
    node(r).back = [this, r, a, b] {
      if (needs(a)) grad_of(a) += node(r).grad.cwiseProduct(value(b));
      if (needs(b)) grad_of(b) += node(r).grad.cwiseProduct(value(a));
    };
  }
  return r;
}

Var Graph::scale(Var a, double s) {
  Var r = push(value(a) * s, needs(a));
  if (needs(r)) node(r).back = [this, r, a, s] { grad_of(a) += node(r).grad * s; };
  return r;
}

Var Graph::exp(Var a) {
  Var r = push(value(a).array().exp().matrix(), needs(a));
  if (needs(r)) node(r).back = [this, r, a] { grad_of(a) += node(r).grad.cwiseProduct(node(r).value); };
  return r;
}

Var Graph::tanh(Var a) {
  Var r = push(value(a).array().tanh().matrix(), needs(a));
  if (needs(r)) {
    node(r).back = [this, r, a] {
      const Mat& y = node(r).value;
      grad_of(a).array() += node(r).grad.array() * (1.0 - y.array().square());
    };
  }
  return r;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var Graph::gelu(Var a) {
  const Mat& x = value(a);
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  Var r = push(std::move(out), needs(a));
  if (needs(r)) {
    node(r).back = [this, r, a] {
      const Mat& xv = value(a);
      const Mat& g = node(r).grad;
      Mat& ga = grad_of(a);
      for (Eigen::Index i = 0; i < xv.size(); ++i) {
        const double v = xv.data()[i];
        const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        ga.data()[i] += g.data()[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
      }
    };
  }
  return r;
}

Var Graph::clamp(Var a, double lo, double hi) {
  Var r = push(value(a).cwiseMax(lo).cwiseMin(hi), needs(a));
  if (needs(r)) {
    node(r).back = [this, r, a, lo, hi] {
      const Mat& x = value(a);
      const Mat& g = node(r).grad;
      Mat& ga = grad_of(a);
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x.data()[i] >= lo && x.data()[i] <= hi) ga.data()[i] += g.data()[i];
    };
  }
  return r;
}

Var Graph::layernorm(Var x, Var gamma, Var beta, double eps) {
  const Mat& xv = value(x);
  const Eigen::Index n = xv.rows(), d = xv.cols();
  Mat xhat(n, d);
  Eigen::VectorXd rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = xv.row(i).mean();
    const double var = (xv.row(i).array() - mean).square().mean();
    rstd(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mean) * rstd(i);
  }
  Mat out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = xhat.row(i).cwiseProduct(value(gamma).row(0)) + value(beta).row(0);
  Var r = push(std::move(out), needs(x) || needs(gamma) || needs(beta));
  if (needs(r)) {
    node(r).back = [this, r, x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd)] {
      const Mat& go = node(r).grad;
      const Eigen::Index rows = xhat.rows();
      if (needs(gamma)) grad_of(gamma).row(0) += go.cwiseProduct(xhat).colwise().sum();
      if (needs(beta)) grad_of(beta).row(0) += go.colwise().sum();
      if (needs(x)) {
        const Mat& gm = value(gamma);
        Mat& gx = grad_of(x);
        for (Eigen::Index i = 0; i < rows; ++i) {
          const Eigen::RowVectorXd dxhat = go.row(i).cwiseProduct(gm.row(0));
          const double m1 = dxhat.mean();
          const double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
          gx.row(i) += (rstd(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2)).matrix();
        }
      }
    };
  }
  return r;
}

Var Graph::attention(Var q, Var k, Var v, int heads, int offset) {
  const Mat& qv = value(q);
  const Mat& kv = value(k);
  const Mat& vv = value(v);
  const Eigen::Index n = qv.rows(), T = kv.rows(), d = qv.cols();
  if (T != offset + n || vv.rows() != T || kv.cols() != d || d % heads != 0)
    throw numerical_error("attention shape mismatch");
  const Eigen::Index dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Mat> probs(static_cast<std::size_t>(heads));
  Mat out(n, d);
  for (int h = 0; h < heads; ++h) {
    Mat s = (qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose()) * inv;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index visible = offset + i + 1;
      if (visible < T) s.row(i).tail(T - visible).setConstant(-std::numeric_limits<double>::infinity());
      const double mx = s.row(i).head(visible).maxCoeff();
      s.row(i) = (s.row(i).array() - mx).exp();
      s.row(i) /= s.row(i).sum();
    }
    out.middleCols(h * dh, dh).noalias() = s * vv.middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  Var r = push(std::move(out), needs(q) || needs(k) || needs(v));
  if (needs(r)) {
    node(r).back = [this, r, q, k, v, heads, dh, inv, probs = std::move(probs)] {
      const Mat& go = node(r).grad;
      for (int h = 0; h < heads; ++h) {
        const Mat& p = probs[static_cast<std::size_t>(h)];
        const Mat gh = go.middleCols(h * dh, dh);
        if (needs(v)) grad_of(v).middleCols(h * dh, dh).noalias() += p.transpose() * gh;
        Mat dp = gh * value(v).middleCols(h * dh, dh).transpose();
        const Eigen::VectorXd rs = dp.cwiseProduct(p).rowwise().sum();
        Mat ds = p.cwiseProduct(dp.colwise() - rs) * inv;
        if (needs(q)) grad_of(q).middleCols(h * dh, dh).noalias() += ds * value(k).middleCols(h * dh, dh);
        if (needs(k)) grad_of(k).middleCols(h * dh, dh).noalias() += ds.transpose() * value(q).middleCols(h * dh, dh);
      }
    };
  }
  return r;
}

Var Graph::concat_rows(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.cols() != bv.cols()) throw numerical_error("concat_rows column mismatch");
  Mat out(av.rows() + bv.rows(), av.cols());
  out.topRows(av.rows()) = av;
  out.bottomRows(bv.rows()) = bv;
  const Eigen::Index na = av.rows(), nb = bv.rows();
  Var r = push(std::move(out), needs(a) || needs(b));
  if (needs(r)) {
    node(r).back = [this, r, a, b, na, nb] {
      if (needs(a)) grad_of(a) += node(r).grad.topRows(na);
      if (needs(b)) grad_of(b) += node(r).grad.bottomRows(nb);
    };
  }
  return r;
}

Var Graph::slice_rows(Var a, int begin, int n) {
  Var r = push(value(a).middleRows(begin, n), needs(a));
  if (needs(r)) node(r).back = [this, r, a, begin, n] { grad_of(a).middleRows(begin, n) += node(r).grad; };
  return r;
}

Var Graph::slice_cols(Var a, int begin, int n) {
  Var r = push(value(a).middleCols(begin, n), needs(a));
  if (needs(r)) node(r).back = [this, r, a, begin, n] { grad_of(a).middleCols(begin, n) += node(r).grad; };
  return r;
}

Var Graph::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  Var r = push(std::move(out), needs(a));
  if (needs(r)) node(r).back = [this, r, a] { grad_of(a).array() += node(r).grad(0, 0); };
  return r;
}

Var Graph::sum_sq(Var a) {
  Mat out(1, 1);
  out(0, 0) = value(a).squaredNorm();
  Var r = push(std::move(out), needs(a));
  if (needs(r)) node(r).back = [this, r, a] { grad_of(a) += (2.0 * node(r).grad(0, 0)) * value(a); };
  return r;
}

Var Graph::nll(Var logits, std::span<const int> targets) {
  const Mat& lv = value(logits);
  const bool broadcast = lv.rows() == 1 && targets.size() > 1;
  if (!broadcast && static_cast<std::size_t>(lv.rows()) != targets.size()) throw numerical_error("nll target count mismatch");
  Mat prob(lv.rows(), lv.cols());
  Eigen::VectorXd lse(lv.rows());
  for (Eigen::Index i = 0; i < lv.rows(); ++i) {
    const double mx = lv.row(i).maxCoeff();
    prob.row(i) = (lv.row(i).array() - mx).exp();
    const double z = prob.row(i).sum();
    prob.row(i) /= z;
    lse(i) = mx + std::log(z);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Eigen::Index row = broadcast ? 0 : static_cast<Eigen::Index>(i);
    const int t = targets[i];
    if (t < 0 || t >= lv.cols()) throw data_error("nll target out of range");
    total += lse(row) - lv(row, t);
  }
  Mat out(1, 1);
  out(0, 0) = total;
  Var r = push(std::move(out), needs(logits));
  if (needs(r)) {
    std::vector<int> tg(targets.begin(), targets.end());
    node(r).back = [this, r, logits, broadcast, prob = std::move(prob), tg = std::move(tg)] {
      const double g = node(r).grad(0, 0);
      Mat& gl = grad_of(logits);
      gl += (broadcast ? g * static_cast<double>(tg.size()) : g) * prob;
      for (std::size_t i = 0; i < tg.size(); ++i) gl(broadcast ? 0 : static_cast<Eigen::Index>(i), tg[i]) -= g;
    };
  }
  return r;
}

Var Graph::detach(Var a) { return push(value(a), false); }

void Graph::backward(Var root) {
  if (!record_) throw numerical_error("backward on a non-recording graph");
  if (value(root).size() != 1) throw numerical_error("backward root must be a scalar");
  if (!needs(root)) return;
  grad_of(root)(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back && n.grad.size() != 0) n.back();
  }
}

}  // namespace vlr
