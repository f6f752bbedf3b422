#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "landval/valuation.hpp"

namespace landval {

// ---------------------------------------------------------------------------
// Ranking metrics
// ---------------------------------------------------------------------------

inline void check_both_classes(std::span<const int> labels) {
  bool pos = false, neg = false;
  for (int y : labels) (y ? pos : neg) = true;
  if (!pos || !neg) throw DataError("AUC needs both classes among the labels");
}

/// Mann-Whitney AUC: (concordant + 0.5 * tied) positive/negative pairs over n+ * n-.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  check_both_classes(labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double concordant = 0, ties = 0, neg_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double gp = 0, gn = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? gp : gn) += 1;
      ++j;
    }
    concordant += gp * neg_below;
    ties += gp * gn;
    neg_below += gn;
    n_pos += gp;
    n_neg += gn;
    i = j;
  }
  return (concordant + 0.5 * ties) / (n_pos * n_neg);
}

struct RocPoint {
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// One point per distinct score threshold, swept from high to low.
inline RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_curve: scores and labels differ in length");
  check_both_classes(labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double n_pos = 0, n_neg = 0;
  for (int y : labels) (y ? n_pos : n_neg) += 1;
  RocCurve c;
  c.points.push_back({0.0, 0.0});
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? tp : fp) += 1;
      ++j;
    }
    c.points.push_back({fp / n_neg, tp / n_pos});
    i = j;
  }
  c.auc = 0;
  for (std::size_t k = 1; k < c.points.size(); ++k)
    c.auc += (c.points[k].fpr - c.points[k - 1].fpr) * 0.5 * (c.points[k].tpr + c.points[k - 1].tpr);
  return c;
}

inline std::string roc_csv(const RocCurve& c) {
  std::string out = "fpr,tpr\n";
  for (const auto& p : c.points) out += format_fixed(p.fpr, 6) + ',' + format_fixed(p.tpr, 6) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Valuation metrics
// ---------------------------------------------------------------------------

/// Mean absolute percentage error over covered results.
inline double mape(std::span<const ValuationResult> results) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& r : results) {
    if (!r.covered) continue;
    if (!(r.actual_price > 0)) throw DataError("actual price must be > 0 for '" + r.parcel_id + "'");
    s += std::abs(*r.predicted_price - r.actual_price) / r.actual_price;
    ++n;
  }
  if (n == 0) throw DataError("MAPE is undefined without covered parcels");
  return 100.0 * s / double(n);
}

enum class CoverageBasis : std::uint8_t {
  evaluated,        // covered / all evaluated parcels
  with_candidates,  // covered / parcels that have at least one scored neighbor
};

inline std::string_view to_string(CoverageBasis b) {
  return b == CoverageBasis::evaluated ? "evaluated" : "with_candidates";
}

inline CoverageBasis parse_coverage_basis(std::string_view s) {
  if (s == "evaluated") return CoverageBasis::evaluated;
  if (s == "with_candidates") return CoverageBasis::with_candidates;
  throw ConfigError("unknown coverage basis '" + std::string(s) + "'");
}

inline double coverage_pct(std::span<const ValuationResult> results,
                           CoverageBasis basis = CoverageBasis::evaluated) {
  std::size_t covered = 0, denom = 0;
  for (const auto& r : results) {
    if (basis == CoverageBasis::with_candidates && r.n_candidates == 0) continue;
    ++denom;
    if (r.covered) ++covered;
  }
  if (denom == 0) return 0.0;
  return 100.0 * double(covered) / double(denom);
}

// ---------------------------------------------------------------------------
// Coverage-MAPE curves
// ---------------------------------------------------------------------------

struct CurvePoint {
  double theta;
  double coverage_pct;
  std::optional<double> mape_pct;  // absent when nothing is covered
};

struct CoverageMapeCurve {
  std::vector<CurvePoint> points;

  /// Largest coverage among grid points whose MAPE is at most `max_mape`.
  [[nodiscard]] std::optional<double> coverage_at_mape(double max_mape = 20.0) const {
    std::optional<double> best;
    for (const auto& p : points)
      if (p.mape_pct && *p.mape_pct <= max_mape && (!best || p.coverage_pct > *best)) best = p.coverage_pct;
    return best;
  }

  /// The point with the largest theta whose coverage is still at least `min_coverage`.
  [[nodiscard]] std::optional<CurvePoint> operating_point(double min_coverage) const {
    std::optional<CurvePoint> best;
    for (const auto& p : points)
      if (p.coverage_pct >= min_coverage && p.mape_pct && (!best || p.theta > best->theta)) best = p;
    return best;
  }
};

inline std::vector<double> theta_grid(std::size_t n = 101) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = n == 1 ? 0.0 : double(i) / double(n - 1);
  return g;
}

inline void check_theta_grid(std::span<const double> grid) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    check_theta(grid[i]);
    if (i > 0 && grid[i] < grid[i - 1]) throw ConfigError("theta grid must be sorted ascending");
  }
}

inline CurvePoint curve_point(std::span<const ValuationResult> results, double theta, CoverageBasis basis) {
  CurvePoint p{theta, coverage_pct(results, basis), std::nullopt};
  if (std::any_of(results.begin(), results.end(), [](const auto& r) { return r.covered; })) p.mape_pct = mape(results);
  return p;
}

inline CoverageMapeCurve coverage_mape_curve(const Dataset& ds, const ValuationInputs& in,
                                             std::span<const double> grid,
                                             CoverageBasis basis = CoverageBasis::evaluated) {
  check_theta_grid(grid);
  CoverageMapeCurve c;
  for (double theta : grid) {
    const auto results = value_all(ds, in, theta);
    c.points.push_back(curve_point(results, theta, basis));
  }
  return c;
}

inline std::string curve_csv(const CoverageMapeCurve& c) {
  std::string out = "theta,coverage_pct,mape_pct\n";
  for (const auto& p : c.points)
    out += format_fixed(p.theta, 2) + ',' + format_fixed(p.coverage_pct, 4) + ',' +
           (p.mape_pct ? format_fixed(*p.mape_pct, 4) : std::string()) + '\n';
  return out;
}

struct ProvinceCurve {
  std::string province;
  std::size_t n_evaluated = 0;
  CoverageMapeCurve curve;  // empty when the province has no evaluated parcels
};

/// Coverage-MAPE curve restricted to each province, in the dataset's province order.
inline std::vector<ProvinceCurve> per_province_report(const Dataset& ds, const ValuationInputs& in,
                                                      std::span<const double> grid,
                                                      CoverageBasis basis = CoverageBasis::evaluated) {
  check_theta_grid(grid);
  const auto& provinces = ds.schema().provinces;
  std::map<std::string, ValuationInputs> by_province;
  for (std::size_t k = 0; k < in.parcels.size(); ++k) {
    auto& sub = by_province[ds[in.parcels[k]].province];
    sub.parcels.push_back(in.parcels[k]);
    sub.scored.push_back(in.scored[k]);
  }
  std::vector<ProvinceCurve> out;
  for (const auto& name : provinces) {
    ProvinceCurve pc{name, 0, {}};
    if (auto it = by_province.find(name); it != by_province.end()) {
      pc.n_evaluated = it->second.parcels.size();
      pc.curve = coverage_mape_curve(ds, it->second, grid, basis);
    }
    out.push_back(std::move(pc));
  }
  return out;
}

inline std::string per_province_csv(const std::vector<ProvinceCurve>& report) {
  std::string out = "province,theta,coverage_pct,mape_pct\n";
  for (const auto& pc : report) {
    if (pc.curve.points.empty()) {
      out += pc.province + ",,,\n";
      continue;
    }
    for (const auto& p : pc.curve.points)
      out += pc.province + ',' + format_fixed(p.theta, 2) + ',' + format_fixed(p.coverage_pct, 4) + ',' +
             (p.mape_pct ? format_fixed(*p.mape_pct, 4) : std::string()) + '\n';
  }
  return out;
}

}  // namespace landval
