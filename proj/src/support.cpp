#include "rare/support.hpp"

#include <algorithm>
#include <exception>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rare {

namespace {

void require_in_jd(const SensorNetwork& net, const Schedule& schedule,
                   SubsetId id, const char* where) {
  const auto jd = detectable_subsets(net, schedule);
  if (std::find(jd.begin(), jd.end(), id) == jd.end()) {
    std::ostringstream os;
    os << where << ": subset " << subset_to_string(id)
       << " is not in J(D) (positive probability and detectable stacked "
          "pair required)";
    throw PreconditionError(os.str());
  }
}

// Accepted-point index with a trace-sorted window for the distance merge:
// ||X - Y|| <= delta implies |tr X - tr Y| <= dim * delta.
class DedupIndex {
 public:
  DedupIndex(int dim, double delta) : dim_(dim), delta_(delta) {}

  bool contains(const QuantizedKey& key, const SymMatrix& value,
                const std::vector<SupportPoint>& points) const {
    if (by_key_.count(key) > 0) return true;
    const double tr = value.trace();
    const double window = dim_ * delta_ + 1e-300;
    auto lo = by_trace_.lower_bound(tr - window);
    auto hi = by_trace_.upper_bound(tr + window);
    for (auto it = lo; it != hi; ++it) {
      if (spectral_distance(points[it->second].value.sym(), value) <= delta_) {
        return true;
      }
    }
    return false;
  }

  void insert(const QuantizedKey& key, const SymMatrix& value,
              std::size_t index) {
    by_key_.emplace(key, index);
    by_trace_.emplace(value.trace(), index);
  }

 private:
  int dim_;
  double delta_;
  std::unordered_map<QuantizedKey, std::size_t, QuantizedKeyHash> by_key_;
  std::multimap<double, std::size_t> by_trace_;
};

}  // namespace

CovMatrix replay_word(const SensorNetwork& net,
                      const std::vector<SubsetId>& word,
                      const CovMatrix& anchor_value) {
  Eigen::MatrixXd x = anchor_value.mat();
  for (auto it = word.rbegin(); it != word.rend(); ++it) {
    if (*it == 0) {
      x = kernel::lyapunov_apply(net.A(), net.Q().mat(), x);
    } else {
      const StackedObsModel m = net.stacked(*it);
      x = kernel::riccati_apply(net.A(), net.Q().mat(), m.C, m.R.mat(), x);
    }
  }
  return CovMatrix(x);
}

SupportSet enumerate_support(const SensorNetwork& net,
                             const Schedule& schedule, SubsetId anchor,
                             const SupportOptions& options) {
  if (options.depth < 0) {
    throw PreconditionError("enumerate_support: depth must be >= 0");
  }
  if (!(options.delta > 0.0)) {
    throw PreconditionError("enumerate_support: delta must be positive");
  }
  require_in_jd(net, schedule, anchor, "enumerate_support");

  SupportSet out;
  out.anchor = anchor;
  out.depth = options.depth;
  out.delta = options.delta;

  if (options.full_alphabet) {
    for (SubsetId id = 0; id < net.subset_count(); ++id) {
      out.alphabet.push_back(id);
    }
  } else {
    out.alphabet = schedule.support();
    if (std::find(out.alphabet.begin(), out.alphabet.end(), SubsetId{0}) ==
        out.alphabet.end()) {
      out.alphabet.insert(out.alphabet.begin(), 0);
    }
  }
  const MapFamily maps(net, out.alphabet);

  const FixedPoint fp = dare_fixed_point(net, anchor);
  out.points.push_back(SupportPoint{fp.value, {}, 0});

  DedupIndex dedup(net.state_dim(), options.delta);
  dedup.insert(quantized_key(fp.value.sym(), options.delta), fp.value.sym(),
               0);
  out.level_counts.push_back(1);

  std::size_t frontier_begin = 0;
  std::size_t frontier_end = 1;
  for (int level = 1; level <= options.depth && !out.truncated; ++level) {
    const std::size_t frontier_size = frontier_end - frontier_begin;
    if (frontier_size == 0) break;
    const std::size_t n_maps = out.alphabet.size();
    const std::size_t n_cand = n_maps * frontier_size;

    // Candidate order: map index ascending, then parent insertion order.
    std::vector<Eigen::MatrixXd> candidates(n_cand);
    std::exception_ptr first_error;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (options.parallel)
#endif
    for (long long c = 0; c < static_cast<long long>(n_cand); ++c) {
      try {
        const SubsetId letter =
            out.alphabet[static_cast<std::size_t>(c) / frontier_size];
        const std::size_t parent =
            frontier_begin + static_cast<std::size_t>(c) % frontier_size;
        candidates[static_cast<std::size_t>(c)] =
            maps.apply_raw(letter, out.points[parent].value.mat());
      } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);

    // Serial merge in the same deterministic order.
    for (std::size_t c = 0; c < n_cand; ++c) {
      if (out.points.size() >= options.node_cap) {
        out.truncated = true;
        break;
      }
      const SubsetId letter = out.alphabet[c / frontier_size];
      const std::size_t parent = frontier_begin + c % frontier_size;
      CovMatrix value(candidates[c]);
      const QuantizedKey key = quantized_key(value.sym(), options.delta);
      if (dedup.contains(key, value.sym(), out.points)) continue;
      std::vector<SubsetId> word;
      word.reserve(out.points[parent].word.size() + 1);
      word.push_back(letter);
      word.insert(word.end(), out.points[parent].word.begin(),
                  out.points[parent].word.end());
      dedup.insert(key, value.sym(), out.points.size());
      out.points.push_back(SupportPoint{std::move(value), std::move(word),
                                        level});
    }
    frontier_begin = frontier_end;
    frontier_end = out.points.size();
    out.level_counts.push_back(out.points.size());
  }
  return out;
}

double hausdorff_distance(const SupportSet& a, const SupportSet& b) {
  if (a.points.empty() || b.points.empty()) {
    throw PreconditionError("hausdorff_distance: sets must be nonempty");
  }
  const int dim = a.points.front().value.dim();
  if (dim != b.points.front().value.dim()) {
    throw PreconditionError("hausdorff_distance: dimension mismatch");
  }
  auto one_sided = [](const SupportSet& from, const SupportSet& to) {
    double worst = 0.0;
    for (const auto& p : from.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to.points) {
        best = std::min(best, spectral_distance(p.value.sym(), q.value.sym()));
        if (best == 0.0) break;
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(one_sided(a, b), one_sided(b, a));
}

std::vector<double> cross_subset_limit_check(const SensorNetwork& net,
                                             const Schedule& schedule,
                                             SubsetId i, SubsetId j,
                                             int s_max) {
  if (s_max < 0) {
    throw PreconditionError("cross_subset_limit_check: s_max must be >= 0");
  }
  require_in_jd(net, schedule, i, "cross_subset_limit_check");
  require_in_jd(net, schedule, j, "cross_subset_limit_check");
  const FixedPoint fi = dare_fixed_point(net, i);
  const FixedPoint fj = dare_fixed_point(net, j);
  const StackedObsModel mj = net.stacked(j);

  std::vector<double> residuals;
  residuals.reserve(static_cast<std::size_t>(s_max));
  Eigen::MatrixXd x = fi.value.mat();
  for (int s = 1; s <= s_max; ++s) {
    x = kernel::riccati_apply(net.A(), net.Q().mat(), mj.C, mj.R.mat(), x);
    residuals.push_back(SymMatrix(x - fj.value.mat()).spectral_norm());
  }
  return residuals;
}

}  // namespace rare
