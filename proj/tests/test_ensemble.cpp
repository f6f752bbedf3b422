#include <gtest/gtest.h>

#include <random>

#include "landval/ensemble.hpp"

namespace landval {
namespace {

using Scores = std::array<std::vector<double>, kNumMembers>;

TEST(Combine, UniformWeightsGiveMean) {
  std::array<double, 5> s = {0.2, 0.4, 0.6, 0.8, 1.0};
  EXPECT_NEAR(combine(EnsembleSpec::uniform(), s), 0.6, 1e-15);
}

TEST(Combine, OneHotSelectsMember) {
  std::array<double, 5> s = {0.11, 0.37, 0.52, 0.9, 0.03};
  for (std::size_t k = 0; k < kNumMembers; ++k) {
    EnsembleSpec spec;
    spec.weights.fill(0.0);
    spec.weights[k] = 1.0;
    EXPECT_EQ(combine(spec, s), s[k]);
  }
}

TEST(Combine, BoundedByMembersAndMonotone) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::exponential_distribution<double> e(1.0);
  for (int t = 0; t < 1000; ++t) {
    EnsembleSpec spec;
    double sum = 0;
    for (auto& w : spec.weights) sum += (w = e(rng));
    for (auto& w : spec.weights) w /= sum;
    std::array<double, 5> s;
    for (auto& v : s) v = u(rng);
    const double c = combine(spec, s);
    EXPECT_GE(c, *std::min_element(s.begin(), s.end()) - 1e-12);
    EXPECT_LE(c, *std::max_element(s.begin(), s.end()) + 1e-12);
    const auto k = std::size_t(rng() % 5);
    auto bumped = s;
    bumped[k] = std::min(1.0, s[k] + u(rng) * (1 - s[k]));
    EXPECT_GE(combine(spec, bumped), c);
  }
}

TEST(Combine, RejectsBadInput) {
  std::array<double, 5> s = {0.1, 0.2, 1.5, 0.1, 0.1};
  EXPECT_THROW((void)combine(EnsembleSpec::uniform(), s), DataError);
  std::array<double, 4> short_s = {0.1, 0.2, 0.3, 0.4};
  EXPECT_THROW((void)combine(EnsembleSpec::uniform(), short_s), ShapeError);
  EnsembleSpec bad;
  bad.weights = {0.5, 0.5, 0.5, 0, 0};
  EXPECT_THROW(bad.validate(), ConfigError);
}

Scores noisy_members(const std::vector<int>& y, std::uint64_t seed, std::array<double, 5> noise) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Scores s;
  for (std::size_t m = 0; m < kNumMembers; ++m)
    for (int label : y) s[m].push_back(1.0 / (1.0 + std::exp(-(label - 0.5 + noise[m] * n01(rng)))));
  return s;
}

std::vector<int> labels(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> y(n);
  for (auto& v : y) v = int(rng() % 2);
  y[0] = 0;
  y[1] = 1;
  return y;
}

TEST(TuneWeights, PerfectMemberWins) {
  auto y = labels(300, 2);
  auto s = noisy_members(y, 3, {1, 1, 1, 1, 1});
  for (std::size_t i = 0; i < y.size(); ++i) s[3][i] = y[i];
  auto r = tune_weights(s, y, 50, 4);
  EXPECT_EQ(r.val_auc, 1.0);
  EXPECT_EQ(std::max_element(r.spec.weights.begin(), r.spec.weights.end()) - r.spec.weights.begin(), 3);
}

TEST(TuneWeights, ZeroTrialsIsUniform) {
  auto y = labels(100, 5);
  auto r = tune_weights(noisy_members(y, 6, {1, 2, 3, 4, 5}), y, 0, 7);
  EXPECT_EQ(r.spec.weights, EnsembleSpec::uniform().weights);
}

TEST(TuneWeights, TunedAucAtLeastEveryMember) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto y = labels(200, 10 + seed);
    auto s = noisy_members(y, 20 + seed, {0.5, 1.0, 2.0, 0.8, 3.0});
    auto r = tune_weights(s, y, 30, seed);
    r.spec.validate();
    for (std::size_t m = 0; m < kNumMembers; ++m) {
      EXPECT_DOUBLE_EQ(r.member_val_auc[m], auc(s[m], y));
      EXPECT_GE(r.val_auc, r.member_val_auc[m]);
    }
    EXPECT_DOUBLE_EQ(r.val_auc, auc(combine_all(r.spec, s), y));
  }
}

TEST(TuneWeights, SameSeedSameSpec) {
  auto y = labels(200, 30);
  auto s = noisy_members(y, 31, {1, 1, 1, 1, 1});
  EXPECT_EQ(tune_weights(s, y, 100, 9).spec.weights, tune_weights(s, y, 100, 9).spec.weights);
}

TEST(TuneWeights, RejectsSingleClass) {
  std::vector<int> y(10, 1);
  Scores s;
  for (auto& v : s) v.assign(10, 0.5);
  EXPECT_THROW((void)tune_weights(s, y, 5, 0), DataError);
}

TEST(EnsembleSpec, JsonRoundTrip) {
  EnsembleSpec spec;
  spec.weights = {0.1, 0.2, 0.3, 0.15, 0.25};
  EXPECT_EQ(EnsembleSpec::from_json(spec.to_json()).weights, spec.weights);
}

}  // namespace
}  // namespace landval
