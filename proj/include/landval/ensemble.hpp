#pragma once

#include <json.hpp>

#include <array>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "landval/metrics.hpp"

namespace landval {

inline constexpr std::array<std::string_view, 5> kEnsembleMembers = {"dl_small", "dl_large", "extra_trees",
                                                                     "random_forest", "rf_on_latent"};
inline constexpr std::size_t kNumMembers = kEnsembleMembers.size();

struct EnsembleSpec {
  std::array<double, kNumMembers> weights{0.2, 0.2, 0.2, 0.2, 0.2};

  static EnsembleSpec uniform() { return {}; }

  void validate() const {
    double s = 0;
    for (double w : weights) {
      if (!(w >= 0)) throw ConfigError("ensemble weights must be >= 0");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("ensemble weights must sum to 1");
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json w = nlohmann::json::object();
    for (std::size_t m = 0; m < kNumMembers; ++m) w[std::string(kEnsembleMembers[m])] = weights[m];
    return {{"weights", w}};
  }

  static EnsembleSpec from_json(const nlohmann::json& j) {
    EnsembleSpec s;
    const auto& w = j.at("weights");
    if (w.size() != kNumMembers) throw DataError("ensemble spec must name exactly five members");
    for (std::size_t m = 0; m < kNumMembers; ++m) s.weights[m] = w.at(std::string(kEnsembleMembers[m])).get<double>();
    s.validate();
    return s;
  }
};

inline double combine(const EnsembleSpec& spec, std::span<const double> scores) {
  if (scores.size() != kNumMembers) throw ShapeError("combine: expected one score per ensemble member");
  double out = 0;
  for (std::size_t m = 0; m < kNumMembers; ++m) {
    if (!(scores[m] >= 0.0 && scores[m] <= 1.0)) throw DataError("combine: member score outside [0,1]");
    out += spec.weights[m] * scores[m];
  }
  return std::min(1.0, out);
}

/// Weighted scores for every pair; `member_scores[m][i]` is member m's score on pair i.
inline std::vector<double> combine_all(const EnsembleSpec& spec,
                                       const std::array<std::vector<double>, kNumMembers>& member_scores) {
  const std::size_t n = member_scores[0].size();
  for (const auto& s : member_scores)
    if (s.size() != n) throw ShapeError("combine_all: members scored different numbers of pairs");
  std::vector<double> out(n);
  std::array<double, kNumMembers> row{};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < kNumMembers; ++m) row[m] = member_scores[m][i];
    out[i] = combine(spec, row);
  }
  return out;
}

struct TuneResult {
  EnsembleSpec spec;
  double val_auc = 0.0;
  std::array<double, kNumMembers> member_val_auc{};
};

/// Random search over the weight simplex. Candidates are the five one-hot
/// vectors, the uniform vector, then `n_trials` flat-Dirichlet draws; the
/// first candidate reaching the highest validation AUC wins.
inline TuneResult tune_weights(const std::array<std::vector<double>, kNumMembers>& val_scores,
                               std::span<const int> val_labels, int n_trials, std::uint64_t seed) {
  check_both_classes(val_labels);
  if (n_trials < 0) throw ConfigError("n_trials must be >= 0");
  TuneResult res;
  for (std::size_t m = 0; m < kNumMembers; ++m) res.member_val_auc[m] = auc(val_scores[m], val_labels);
  if (n_trials == 0) {
    res.spec = EnsembleSpec::uniform();
    res.val_auc = auc(combine_all(res.spec, val_scores), val_labels);
    return res;
  }
  std::vector<EnsembleSpec> candidates;
  for (std::size_t m = 0; m < kNumMembers; ++m) {
    EnsembleSpec s;
    s.weights.fill(0.0);
    s.weights[m] = 1.0;
    candidates.push_back(s);
  }
  candidates.push_back(EnsembleSpec::uniform());
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  for (int t = 0; t < n_trials; ++t) {
    EnsembleSpec s;
    double sum = 0;
    for (auto& w : s.weights) sum += (w = expo(rng));
    for (auto& w : s.weights) w /= sum;
    candidates.push_back(s);
  }
  bool first = true;
  for (const auto& c : candidates) {
    const double a = auc(combine_all(c, val_scores), val_labels);
    if (first || a > res.val_auc) {
      res.spec = c;
      res.val_auc = a;
      first = false;
    }
  }
  return res;
}

}  // namespace landval
