#include "vlr/eval.hpp"

#include <cctype>
#include <cmath>
#include <map>

#include <boost/math/distributions/students_t.hpp>

#include "vlr/error.hpp"

namespace vlr {

std::string normalize_answer(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string t(s.substr(b, e - b));
  if (t.empty()) return t;
  std::size_t i = 0;
  bool neg = false;
  if (t[0] == '+' || t[0] == '-') {
    neg = t[0] == '-';
    i = 1;
  }
  if (i == t.size()) return t;
  for (std::size_t j = i; j < t.size(); ++j)
    if (!std::isdigit(static_cast<unsigned char>(t[j]))) return t;
  while (i + 1 < t.size() && t[i] == '0') ++i;
  std::string digits = t.substr(i);
  if (digits == "0") neg = false;
  return neg ? "-" + digits : digits;
}

double accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& golds) {
  if (predictions.size() != golds.size()) throw config_error("accuracy: prediction/gold length mismatch");
  if (predictions.empty()) throw data_error("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (normalize_answer(predictions[i]) == normalize_answer(golds[i])) ++hit;
  return static_cast<double>(hit) / static_cast<double>(predictions.size());
}

double mean_reasoning_length(const std::vector<double>& lengths) {
  if (lengths.empty()) throw data_error("mean_reasoning_length: empty input");
  double s = 0.0;
  for (double x : lengths) s += x;
  return s / static_cast<double>(lengths.size());
}

ConfidenceInterval confidence_interval(const std::vector<double>& values, double level) {
  const std::size_t n = values.size();
  if (n < 2) throw config_error("confidence_interval: need at least 2 values");
  if (!(level > 0.0 && level < 1.0)) throw config_error("confidence_interval: level must be in (0, 1)");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double s = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  const double t = boost::math::quantile(dist, 0.5 + level / 2.0);
  return {mean, t * s / std::sqrt(static_cast<double>(n))};
}

nlohmann::json PredictionRecord::to_json() const {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["prediction"] = prediction;
  j["gold"] = gold;
  j["reasoning_length"] = reasoning_length;
  j["truncated"] = truncated;
  j["correct"] = correct;
  return j;
}

EvalResult summarize(std::vector<PredictionRecord> records) {
  EvalResult r;
  if (records.empty()) throw data_error("evaluate: empty test set");
  std::size_t hit = 0, untrunc = 0;
  double len = 0.0, len_ok = 0.0;
  for (const auto& rec : records) {
    hit += rec.correct ? 1 : 0;
    len += rec.reasoning_length;
    if (rec.truncated) ++r.truncated;
    else {
      ++untrunc;
      len_ok += rec.reasoning_length;
    }
  }
  const double n = static_cast<double>(records.size());
  r.accuracy = static_cast<double>(hit) / n;
  r.mean_reasoning_length = len / n;
  r.mean_length_untruncated = untrunc ? len_ok / static_cast<double>(untrunc) : 0.0;
  r.records = std::move(records);
  return r;
}

EvalResult evaluate(Model& model, const Vocabulary& vocab, const Dataset& test, const InferConfig& cfg,
                    Paradigm paradigm, Modeling modeling, std::size_t max_train_K) {
  cfg.validate();
  std::vector<PredictionRecord> records;
  records.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Sample& s = test[i];
    Rng rng = Rng::derive(cfg.seed, 0x6576616c00000000ULL + i);  // "eval"
    const InferResult res = paradigm == Paradigm::ExplicitCot
                                ? cot_generate(model, vocab, s.question, cfg, rng)
                                : reason_and_answer(model, vocab, s.question, cfg, modeling, max_train_K, rng);
    PredictionRecord rec;
    rec.id = s.id;
    rec.prediction = res.answer;
    rec.gold = vocab.detokenize(s.answer);
    rec.reasoning_length = res.reasoning_length;
    rec.truncated = res.truncated;
    rec.correct = normalize_answer(rec.prediction) == normalize_answer(rec.gold);
    records.push_back(std::move(rec));
  }
  return summarize(std::move(records));
}

std::string majority_answer(const Dataset& train, const Vocabulary& vocab) {
  if (train.empty()) throw data_error("majority: empty training set");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : train) ++counts[normalize_answer(vocab.detokenize(s.answer))];
  std::string best;
  std::size_t best_n = 0;
  for (const auto& [a, n] : counts)
    if (n > best_n) {
      best = a;
      best_n = n;
    }
  return best;
}

double majority_accuracy(const Dataset& train, const Dataset& test, const Vocabulary& vocab) {
  const std::string m = majority_answer(train, vocab);
  std::vector<std::string> preds(test.size(), m), golds;
  for (const auto& s : test) golds.push_back(vocab.detokenize(s.answer));
  return accuracy(preds, golds);
}

}  // namespace vlr
