#include <gtest/gtest.h>

#include <random>

#include "landval/metrics.hpp"
#include "test_util.hpp"

namespace landval {
namespace {

using testing::make_parcel;

// Direct O(n+ * n-) count of ordered positive/negative pairs.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / den;
}

TEST(Auc, Examples) {
  std::vector<double> s = {0.9, 0.8, 0.4, 0.3};
  EXPECT_EQ(auc(s, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(auc(s, std::vector<int>{1, 0, 1, 0}), 0.75);
  EXPECT_EQ(auc(std::vector<double>(6, 0.4), std::vector<int>{1, 0, 1, 0, 0, 1}), 0.5);
  EXPECT_EQ(roc_curve(s, std::vector<int>{1, 0, 1, 0}).auc, 0.75);
}

TEST(Auc, RejectsSingleClassAndLengthMismatch) {
  std::vector<double> s = {0.1, 0.2};
  EXPECT_THROW((void)auc(s, std::vector<int>{1, 1}), DataError);
  EXPECT_THROW((void)auc(s, std::vector<int>{1, 0, 1}), ShapeError);
}

TEST(Auc, TrapezoidMatchesMannWhitneyWithTies) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 3 + rng() % 198;
    const int levels = 2 + int(rng() % 20);  // coarse scores force ties
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = double(rng() % std::uint64_t(levels)) / levels;
      y[i] = int(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    const double mw = auc(s, y);
    EXPECT_NEAR(roc_curve(s, y).auc, mw, 1e-9);
    EXPECT_NEAR(pairwise_auc(s, y), mw, 1e-12);
  }
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> s(50), cubed(50);
    std::vector<int> y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      y[i] = int(rng() % 2);
      s[i] = n01(rng) + y[i];
      cubed[i] = s[i] * s[i] * s[i];
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_EQ(auc(s, y), auc(cubed, y));
  }
}

TEST(Roc, EndpointsAndMonotone) {
  std::vector<double> s = {0.1, 0.4, 0.35, 0.8, 0.8};
  std::vector<int> y = {0, 0, 1, 1, 0};
  auto c = roc_curve(s, y);
  EXPECT_EQ(c.points.front().fpr, 0.0);
  EXPECT_EQ(c.points.front().tpr, 0.0);
  EXPECT_EQ(c.points.back().fpr, 1.0);
  EXPECT_EQ(c.points.back().tpr, 1.0);
  for (std::size_t k = 1; k < c.points.size(); ++k) {
    EXPECT_GE(c.points[k].fpr, c.points[k - 1].fpr);
    EXPECT_GE(c.points[k].tpr, c.points[k - 1].tpr);
  }
}

ValuationResult result(double pred, double actual, bool covered = true) {
  ValuationResult r;
  r.parcel_id = "x";
  r.covered = covered;
  if (covered) r.predicted_price = pred;
  r.actual_price = actual;
  r.n_candidates = 1;
  return r;
}

TEST(Mape, Examples) {
  EXPECT_NEAR(mape(std::vector{result(110, 100)}), 10.0, 1e-12);
  EXPECT_EQ(mape(std::vector{result(100, 100), result(37, 37)}), 0.0);
  EXPECT_NEAR(mape(std::vector{result(90, 100), result(120, 100)}), 15.0, 1e-12);
  EXPECT_NEAR(mape(std::vector{result(90, 100), result(0, 100, false)}), 10.0, 1e-12);
  EXPECT_THROW((void)mape(std::vector{result(0, 100, false)}), DataError);
}

TEST(Mape, ScaleInvariant) {
  std::mt19937_64 rng(3);
  std::lognormal_distribution<double> p(5, 1);
  std::vector<ValuationResult> rs, scaled;
  for (int i = 0; i < 200; ++i) {
    const double a = p(rng), b = p(rng);
    rs.push_back(result(a, b));
    scaled.push_back(result(a * 3.7, b * 3.7));
  }
  EXPECT_NEAR(mape(rs), mape(scaled), 1e-9);
}

TEST(Coverage, Examples) {
  std::vector<ValuationResult> all(5, result(1, 1));
  EXPECT_EQ(coverage_pct(all), 100.0);
  std::vector<ValuationResult> none(5, result(1, 1, false));
  EXPECT_EQ(coverage_pct(none), 0.0);
  std::vector<ValuationResult> some(8, result(1, 1, false));
  some[2] = some[5] = result(1, 1);
  EXPECT_EQ(coverage_pct(some), 25.0);
  some[0].n_candidates = 0;
  EXPECT_NEAR(coverage_pct(some, CoverageBasis::with_candidates), 200.0 / 7.0, 1e-12);
}

struct Scenario {
  Dataset ds;
  SplitAssignment split;
  std::vector<PairRecord> pairs;
  std::vector<double> oracle_scores, noisy_scores;
};

// Held-out parcels with several train neighbors each; labels follow the
// relative-price rule with tau = 0.2.
Scenario scenario(std::uint64_t seed, int n_provinces) {
  std::mt19937_64 rng(seed);
  std::lognormal_distribution<double> price(8, 0.3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<LandParcel> ps;
  std::vector<Split> sp;
  for (int i = 0; i < 300; ++i) {
    ps.push_back(make_parcel("p" + std::to_string(1000 + i), 0, 0, price(rng), {},
                             "prov" + std::to_string(i % n_provinces)));
    sp.push_back(i % 4 == 0 ? Split::test : Split::train);
  }
  Scenario s{Dataset(ps, {}, {}), SplitAssignment(sp), {}, {}, {}};
  for (std::size_t p = 0; p < s.ds.size(); ++p) {
    if (sp[p] == Split::train) continue;
    for (int k = 0; k < 8; ++k) {
      std::size_t q;
      do q = rng() % s.ds.size();
      while (sp[q] != Split::train);
      PairRecord r;
      r.primary = p;
      r.neighbor = q;
      r.split = sp[p];
      r.label = label_pair(s.ds[p], s.ds[q], 0.2);
      s.pairs.push_back(r);
      s.oracle_scores.push_back(r.label);
      s.noisy_scores.push_back(std::clamp(0.6 * r.label + 0.5 * u(rng), 0.0, 1.0));
    }
  }
  return s;
}

TEST(CoverageMape, SinglePointGrid) {
  auto s = scenario(4, 1);
  auto in = group_scored_pairs(s.ds, s.split, s.pairs, s.noisy_scores, kHeldOutSplits);
  std::vector<double> grid = {0.0};
  auto c = coverage_mape_curve(s.ds, in, grid);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_EQ(c.points[0].coverage_pct, 100.0);
}

TEST(CoverageMape, OracleScoresStayWithinTau) {
  auto s = scenario(5, 1);
  auto in = group_scored_pairs(s.ds, s.split, s.pairs, s.oracle_scores, kHeldOutSplits);
  auto results = value_all(s.ds, in, 0.5);
  for (const auto& r : results)
    if (r.covered) EXPECT_LE(std::abs(*r.predicted_price - r.actual_price) / r.actual_price, 0.2 + 1e-12);
  EXPECT_LE(mape(results), 20.0);
}

TEST(CoverageMape, CoverageNonIncreasingOverGrid) {
  auto s = scenario(6, 3);
  auto in = group_scored_pairs(s.ds, s.split, s.pairs, s.noisy_scores, kHeldOutSplits);
  const auto grid = theta_grid();
  ASSERT_EQ(grid.size(), 101u);
  auto c = coverage_mape_curve(s.ds, in, grid);
  ASSERT_EQ(c.points.size(), 101u);
  for (std::size_t k = 1; k < c.points.size(); ++k) EXPECT_LE(c.points[k].coverage_pct, c.points[k - 1].coverage_pct);
}

TEST(CoverageMape, RejectsBadGrid) {
  auto s = scenario(7, 1);
  auto in = group_scored_pairs(s.ds, s.split, s.pairs, s.noisy_scores, kHeldOutSplits);
  std::vector<double> unsorted = {0.5, 0.2}, outside = {0.0, 1.5};
  EXPECT_THROW((void)coverage_mape_curve(s.ds, in, unsorted), ConfigError);
  EXPECT_THROW((void)coverage_mape_curve(s.ds, in, outside), ConfigError);
}

TEST(CoverageMape, OperatingPointAndCoverageAtMape) {
  CoverageMapeCurve c;
  c.points = {{0.0, 90, 30.0}, {0.5, 60, 19.0}, {0.6, 49, 12.0}, {0.9, 10, 5.0}, {1.0, 0, std::nullopt}};
  EXPECT_EQ(c.coverage_at_mape(20.0), 60.0);
  auto op = c.operating_point(50.0);
  ASSERT_TRUE(op);
  EXPECT_EQ(op->theta, 0.5);
  EXPECT_FALSE(c.operating_point(95.0));
}

TEST(PerProvince, SingleProvinceEqualsGlobal) {
  auto s = scenario(8, 1);
  auto in = group_scored_pairs(s.ds, s.split, s.pairs, s.noisy_scores, kHeldOutSplits);
  const auto grid = theta_grid(21);
  auto global = coverage_mape_curve(s.ds, in, grid);
  auto report = per_province_report(s.ds, in, grid);
  ASSERT_EQ(report.size(), 1u);
  ASSERT_EQ(report[0].curve.points.size(), global.points.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    EXPECT_EQ(report[0].curve.points[k].coverage_pct, global.points[k].coverage_pct);
    EXPECT_EQ(report[0].curve.points[k].mape_pct, global.points[k].mape_pct);
  }
}

TEST(PerProvince, OneRowSetPerProvinceAndEmptyMarked) {
  auto s = scenario(9, 3);
  // A province with only train parcels has nothing to evaluate.
  std::vector<LandParcel> ps = s.ds.parcels();
  std::vector<Split> sp = s.split.labels();
  for (int i = 0; i < 12; ++i) {
    ps.push_back(make_parcel("z" + std::to_string(i), 0, 0, 100, {}, "zzz"));
    sp.push_back(Split::train);
  }
  Dataset ds(ps, {}, {});
  SplitAssignment split(sp);
  auto in = group_scored_pairs(ds, split, s.pairs, s.noisy_scores, kHeldOutSplits);
  const auto grid = theta_grid(11);
  auto report = per_province_report(ds, in, grid);
  ASSERT_EQ(report.size(), 4u);
  std::size_t total = 0;
  for (const auto& pc : report) {
    total += pc.n_evaluated;
    if (pc.province == "zzz") {
      EXPECT_EQ(pc.n_evaluated, 0u);
      EXPECT_TRUE(pc.curve.points.empty());
    } else {
      EXPECT_EQ(pc.curve.points.size(), 11u);
    }
  }
  EXPECT_EQ(total, in.parcels.size());
  auto csv = per_province_csv(report);
  EXPECT_NE(csv.find("zzz,,,\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 11 + 1);
}

}  // namespace
}  // namespace landval
