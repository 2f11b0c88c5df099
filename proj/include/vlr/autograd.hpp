#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vlr {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  bool decay = true;  // matrices decay, vectors (biases, norms) do not
  bool frozen = false;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns parameters in registration order; the order is the checkpoint order.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Mat init, bool decay);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t numel() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

/// Reverse-mode tape. Each op appends a node; backward() walks the tape in
/// reverse. With recording off (inference) no backward closures are kept.
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var param(Parameter& p);
  Var constant(Mat m);
  /// Rows of `table` selected by `rows`; gradients scatter back into the table.
  Var gather(Parameter& table, std::span<const int> rows);

  Var linear(Var x, Var w, Var b);  // x * w^T + b (b broadcast over rows)
  Var matmul_t(Var x, Var w);       // x * w^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // element-wise
  Var scale(Var a, double s);
  Var exp(Var a);
  Var tanh(Var a);
  Var gelu(Var a);
  Var clamp(Var a, double lo, double hi);
  Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-5);
  /// Causal multi-head attention of n query rows (absolute positions
  /// offset..offset+n-1) over T = offset+n key/value rows.
  Var attention(Var q, Var k, Var v, int heads, int offset);
  Var concat_rows(Var a, Var b);
  Var slice_rows(Var a, int begin, int n);
  Var slice_cols(Var a, int begin, int n);
  Var sum(Var a);     // 1x1
  Var sum_sq(Var a);  // 1x1
  /// Sum over rows of -log softmax(logits[i])[targets[i]]; 1x1. A single
  /// logits row is shared by every target.
  Var nll(Var logits, std::span<const int> targets);
  Var detach(Var a);

  const Mat& value(Var v) const;
  double scalar(Var v) const { return value(v)(0, 0); }

  /// Seeds d(root)/d(root) = 1 and propagates to every parameter leaf.
  void backward(Var root);

 private:
  struct Node {
    Mat value;
    Mat grad;
    Parameter* param = nullptr;
    bool needs_grad = false;
    std::function<void()> back;
  };

  Var push(Mat value, bool needs_grad);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  Mat& grad_of(Var v);
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace vlr
