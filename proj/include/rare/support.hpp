#pragma once

#include <cstddef>
#include <vector>

#include "rare/riccati.hpp"

namespace rare {

struct SupportPoint {
  CovMatrix value;
  /// Composition word l_1 ... l_s: the point equals
  /// f_{l_1}(f_{l_2}(... f_{l_s}(P*))). Empty word = the anchor itself.
  std::vector<SubsetId> word;
  int level = 0;
};

struct SupportSet {
  SubsetId anchor = 0;
  int depth = 0;
  double delta = 0.0;
  bool truncated = false;            // node cap hit before the depth ran out
  std::vector<SupportPoint> points;  // discovery order, anchor first
  std::vector<std::size_t> level_counts;  // cumulative points per level
  std::vector<SubsetId> alphabet;
};

struct SupportOptions {
  int depth = 4;
  std::size_t node_cap = 20000;
  double delta = 1e-8;
  /// When set, composition letters range over every subset id instead of
  /// only the schedule's positive-probability atoms plus the empty set.
  bool full_alphabet = false;
  bool parallel = true;
};

/// Breadth-first closure of the map family applied to the fixed point of
/// the anchor subset. The anchor must lie in J(D). Duplicates are removed
/// by lattice key at resolution delta, then a distance pass merges points
/// that straddle a lattice boundary. Expansion order is deterministic:
/// map index ascending, then parent insertion order.
SupportSet enumerate_support(const SensorNetwork& net,
                             const Schedule& schedule, SubsetId anchor,
                             const SupportOptions& options);

/// Replays a stored composition word from an anchor value.
CovMatrix replay_word(const SensorNetwork& net,
                      const std::vector<SubsetId>& word,
                      const CovMatrix& anchor_value);

/// Symmetrized max-min spectral-norm distance between two enumerated sets.
double hausdorff_distance(const SupportSet& a, const SupportSet& b);

/// Residuals r_s = ||f_j^(s)(P*_i) - P*_j|| for s = 1..s_max: the
/// computable shadow of support equality across detectable atoms.
std::vector<double> cross_subset_limit_check(const SensorNetwork& net,
                                             const Schedule& schedule,
                                             SubsetId i, SubsetId j,
                                             int s_max);

}  // namespace rare
