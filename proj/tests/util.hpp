#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vlr/autograd.hpp"
#include "vlr/corpus.hpp"
#include "vlr/model.hpp"

namespace vlr::tu {

inline std::string tmp_dir(const std::string& name) {
  const std::filesystem::path p = std::filesystem::path(VLR_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline Sample make_sample(Vocabulary& vocab, const std::string& id, const std::string& q, const std::string& r,
                          const std::string& a) {
  return Sample{id, vocab.tokenize(q, true), vocab.tokenize(r, true), vocab.tokenize(a, true)};
}

inline ModelConfig small_model(int vocab, int d_h = 16, int d_v = 16) {
  ModelConfig c;
  c.d_h = d_h;
  c.layers = 2;
  c.heads = 2;
  c.context = 48;
  c.vocab_size = vocab;
  c.d_v = d_v;
  return c;
}

/// Per-group ||analytic - numeric|| / max(||analytic||, ||numeric||) by central differences.
inline std::map<std::string, double> gradient_check(ParamStore& params, const std::function<double()>& loss,
                                                    const std::function<void()>& analytic, double h = 1e-5) {
  params.zero_grad();
  analytic();
  std::map<std::string, double> diff2, a2, n2;
  for (Parameter* p : params.all()) {
    if (p->frozen) continue;
    const std::string group = Model::group_of(p->name);
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& w = p->value.data()[i];
      const double orig = w;
      w = orig + h;
      const double up = loss();
      w = orig - h;
      const double down = loss();
      w = orig;
      const double num = (up - down) / (2 * h);
      const double ana = p->grad.data()[i];
      diff2[group] += (ana - num) * (ana - num);
      a2[group] += ana * ana;
      n2[group] += num * num;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [g, d] : diff2) out[g] = std::sqrt(d) / std::max({std::sqrt(a2[g]), std::sqrt(n2[g]), 1e-12});
  return out;
}

}  // namespace vlr::tu
