#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "landval/core_data.hpp"
#include "landval/pairgen.hpp"

namespace landval {

struct ScoredNeighbor {
  std::string id;
  double score = 0.0;
  double price = 0.0;
};

struct ValuationResult {
  std::string parcel_id;
  bool covered = false;
  std::optional<double> predicted_price;
  double actual_price = 0.0;
  std::vector<ScoredNeighbor> contributors;
  double theta = 0.0;
  std::size_t n_candidates = 0;  // scored neighbors before thresholding
};

inline void check_theta(double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in [0,1], got " + format_double(theta));
}

/// Similarity-weighted mean of the prices of neighbors scoring at least theta.
inline ValuationResult value_parcel(const LandParcel& p, std::span<const ScoredNeighbor> neighbors, double theta) {
  check_theta(theta);
  ValuationResult r;
  r.parcel_id = p.id;
  r.actual_price = p.price;
  r.theta = theta;
  r.n_candidates = neighbors.size();
  double num = 0, den = 0;
  for (const auto& n : neighbors) {
    if (!(n.score >= 0.0 && n.score <= 1.0)) throw DataError("similarity score outside [0,1] for '" + n.id + "'");
    if (!(n.price > 0)) throw DataError("neighbor price must be > 0 for '" + n.id + "'");
    if (n.score < theta) continue;
    r.contributors.push_back(n);
    num += n.score * n.price;
    den += n.score;
  }
  r.covered = !r.contributors.empty();
  if (r.covered) {
    if (den > 0) {
      r.predicted_price = num / den;
    } else {
      // theta == 0 admits zero-score neighbors; fall back to their plain mean
      double s = 0;
      for (const auto& c : r.contributors) s += c.price;
      r.predicted_price = s / double(r.contributors.size());
    }
  }
  return r;
}

/// Scored neighbors grouped by primary parcel, ready for repeated valuation
/// at different thresholds.
struct ValuationInputs {
  std::vector<std::size_t> parcels;                 // dataset indices, sorted by id
  std::vector<std::vector<ScoredNeighbor>> scored;  // aligned with `parcels`
};

inline ValuationInputs group_scored_pairs(const Dataset& ds, const SplitAssignment& split,
                                          const std::vector<PairRecord>& pairs, std::span<const double> scores,
                                          std::span<const Split> targets) {
  if (scores.size() != pairs.size()) throw ShapeError("group_scored_pairs: one score per pair required");
  if (split.size() != ds.size()) throw ShapeError("group_scored_pairs: split does not cover the dataset");
  auto wanted = [&](Split s) { return std::find(targets.begin(), targets.end(), s) != targets.end(); };
  std::vector<long> slot(ds.size(), -1);
  ValuationInputs in;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (wanted(split[i])) in.parcels.push_back(i);
  std::sort(in.parcels.begin(), in.parcels.end(), [&](auto a, auto b) { return ds[a].id < ds[b].id; });
  for (std::size_t k = 0; k < in.parcels.size(); ++k) slot[in.parcels[k]] = long(k);
  in.scored.resize(in.parcels.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& pr = pairs[k];
    if (slot[pr.primary] < 0) continue;
    if (split[pr.neighbor] != Split::train)
      throw DataError("valuation neighbor '" + ds[pr.neighbor].id + "' is not a train-split appraisal");
    in.scored[std::size_t(slot[pr.primary])].push_back({ds[pr.neighbor].id, scores[k], ds[pr.neighbor].price});
  }
  return in;
}

inline std::vector<ValuationResult> value_all(const Dataset& ds, const ValuationInputs& in, double theta) {
  check_theta(theta);
  std::vector<ValuationResult> out;
  out.reserve(in.parcels.size());
  for (std::size_t k = 0; k < in.parcels.size(); ++k) out.push_back(value_parcel(ds[in.parcels[k]], in.scored[k], theta));
  return out;
}

inline constexpr std::array<Split, 2> kHeldOutSplits = {Split::val, Split::test};

inline std::vector<ValuationResult> value_all(const Dataset& ds, const SplitAssignment& split,
                                              const std::vector<PairRecord>& pairs, std::span<const double> scores,
                                              double theta, std::span<const Split> targets = kHeldOutSplits) {
  check_theta(theta);
  return value_all(ds, group_scored_pairs(ds, split, pairs, scores, targets), theta);
}

inline std::string valuation_results_csv(const std::vector<ValuationResult>& results) {
  std::string out = "parcel_id,covered,predicted_price,actual_price,n_contributors,theta\n";
  for (const auto& r : results) {
    out += r.parcel_id + ',' + (r.covered ? "true" : "false") + ',' +
           (r.predicted_price ? format_fixed(*r.predicted_price, 4) : std::string()) + ',' +
           format_fixed(r.actual_price, 4) + ',' + std::to_string(r.contributors.size()) + ',' +
           format_fixed(r.theta, 2) + '\n';
  }
  return out;
}

}  // namespace landval
