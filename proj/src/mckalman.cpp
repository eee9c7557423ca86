#include "rare/mckalman.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <sstream>

namespace rare {

std::string functional_name(Functional f) {
  switch (f) {
    case Functional::kTrace: return "trace";
    case Functional::kSpectralNorm: return "spectral-norm";
    case Functional::kLogDet: return "log-det";
  }
  return "?";
}

Functional functional_from_name(const std::string& name) {
  if (name == "trace") return Functional::kTrace;
  if (name == "spectral-norm") return Functional::kSpectralNorm;
  if (name == "log-det") return Functional::kLogDet;
  throw PreconditionError("unknown functional '" + name +
                          "' (trace | spectral-norm | log-det)");
}

double evaluate_functional(Functional f, const CovMatrix& p) {
  switch (f) {
    case Functional::kTrace:
      return p.trace();
    case Functional::kSpectralNorm:
      return p.spectral_norm();
    case Functional::kLogDet: {
      const Eigen::VectorXd ev = detail::sym_eigenvalues(p.mat());
      double acc = 0.0;
      for (int i = 0; i < ev.size(); ++i) acc += std::log(std::max(ev(i), 0.0));
      return acc;
    }
  }
  return 0.0;
}

std::pair<Eigen::VectorXd, CovMatrix> kalman_predictor_step(
    const SensorNetwork& net, SubsetId i,
    const std::optional<Eigen::VectorXd>& y, const Eigen::VectorXd& xhat,
    const CovMatrix& p, ClipStats* clips) {
  net.require_valid_subset(i);
  if (xhat.size() != net.state_dim() || p.dim() != net.state_dim()) {
    throw PreconditionError("kalman_predictor_step: state dimension mismatch");
  }
  if (i == 0) {
    if (y.has_value()) {
      throw PreconditionError(
          "kalman_predictor_step: empty subset cannot carry an observation");
    }
    return {net.A() * xhat, lyapunov_step(net, p, clips)};
  }
  if (!y.has_value()) {
    throw PreconditionError(
        "kalman_predictor_step: subset " + subset_to_string(i) +
        " transmitted but no observation was supplied");
  }
  const StackedObsModel m = net.stacked(i);
  if (y->size() != m.C.rows()) {
    std::ostringstream os;
    os << "kalman_predictor_step: observation has " << y->size()
       << " entries, subset " << subset_to_string(i) << " stacks "
       << m.C.rows();
    throw PreconditionError(os.str());
  }
  Eigen::MatrixXd s = m.C * p.mat() * m.C.transpose() + m.R.mat();
  s = 0.5 * (s + s.transpose()).eval();
  // K = A P C^T S^{-1}
  const Eigen::MatrixXd gain =
      chol_solve(CovMatrix(s), m.C * p.mat() * net.A().transpose())
          .transpose();
  const Eigen::VectorXd innovation = *y - m.C * xhat;
  Eigen::VectorXd next = net.A() * xhat + gain * innovation;
  return {std::move(next), riccati_step(net, i, p, clips)};
}

FilterRun run_filter(const SensorNetwork& net, const Schedule& schedule,
                     int horizon, std::uint64_t seed, std::uint64_t path) {
  if (horizon < 1) throw PreconditionError("run_filter: horizon T >= 1");

  RngStream sched_rng(seed, path, StreamPurpose::kSchedule);
  RngStream signal_rng(seed, path, StreamPurpose::kSignalNoise);
  RngStream obs_rng(seed, path, StreamPurpose::kObsNoise);

  std::vector<SubsetId> subsets(static_cast<std::size_t>(horizon));
  for (auto& s : subsets) s = schedule.sample(sched_rng);

  FilterRun run;
  run.seed = seed;
  run.path = path;
  run.states = simulate_signal(net, horizon, signal_rng);
  run.obs = simulate_observations(net, run.states, subsets, obs_rng);
  run.covs.initial = net.P0();
  run.covs.steps.reserve(subsets.size());

  Eigen::VectorXd xhat = Eigen::VectorXd::Zero(net.state_dim());
  CovMatrix p = net.P0();
  run.xhat.push_back(xhat);
  for (int t = 0; t < horizon; ++t) {
    const SubsetId i = subsets[static_cast<std::size_t>(t)];
    std::optional<Eigen::VectorXd> y;
    if (i != 0) y = run.obs.obs[static_cast<std::size_t>(t)];
    std::tie(xhat, p) =
        kalman_predictor_step(net, i, y, xhat, p, &run.covs.clips);
    run.xhat.push_back(xhat);
    run.covs.steps.emplace_back(i, p);
  }
  return run;
}

double pathwise_consistency(const SensorNetwork& net, const FilterRun& run) {
  ClipStats clips;
  CovMatrix p = run.covs.initial;
  double worst = 0.0;
  for (const auto& [i, stored] : run.covs.steps) {
    p = rare_step(net, i, p, &clips);
    worst = std::max(worst, spectral_distance(p.sym(), stored.sym()));
  }
  return worst;
}

EmpiricalDistribution empirical_functional_distribution(
    const std::vector<RareTrajectory>& runs, Functional functional,
    int burn_in, SampleAt sample_at) {
  EmpiricalDistribution out;
  out.tag = functional;
  out.burn_in = burn_in;
  for (const auto& run : runs) {
    if (burn_in >= run.horizon()) {
      throw PreconditionError(
          "empirical_functional_distribution: burn_in must be below every "
          "run's horizon");
    }
    if (sample_at.is_pooled()) {
      for (int t = burn_in + 1; t <= run.horizon(); ++t) {
        out.samples.push_back(evaluate_functional(
            functional, run.steps[static_cast<std::size_t>(t - 1)].second));
      }
    } else {
      const int t = sample_at.t_star;
      if (t < 0 || t > run.horizon()) {
        std::ostringstream os;
        os << "empirical_functional_distribution: t* = " << t
           << " outside run horizon " << run.horizon();
        throw PreconditionError(os.str());
      }
      const CovMatrix& p =
          t == 0 ? run.initial
                 : run.steps[static_cast<std::size_t>(t - 1)].second;
      out.samples.push_back(evaluate_functional(functional, p));
    }
  }
  if (out.samples.empty()) {
    throw PreconditionError("empirical_functional_distribution: empty sample");
  }
  std::sort(out.samples.begin(), out.samples.end());
  return out;
}

EmpiricalDistribution empirical_functional_distribution(
    const std::vector<FilterRun>& runs, Functional functional, int burn_in,
    SampleAt sample_at) {
  std::vector<RareTrajectory> covs;
  covs.reserve(runs.size());
  for (const auto& run : runs) covs.push_back(run.covs);
  return empirical_functional_distribution(covs, functional, burn_in,
                                           sample_at);
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) {
    throw PreconditionError("ks_statistic: both samples must be nonempty");
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t ia = 0, ib = 0;
  double d = 0.0;
  while (ia < a.size() && ib < b.size()) {
    const double x = std::min(a[ia], b[ib]);
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    d = std::max(d, std::abs(static_cast<double>(ia) / na -
                             static_cast<double>(ib) / nb));
  }
  return d;
}

double ks_two_sample(const EmpiricalDistribution& a,
                     const EmpiricalDistribution& b) {
  return ks_statistic(a.samples, b.samples);
}

namespace {

struct NormGrid {
  std::vector<int> times;                 // sampled t, ascending, >= 1
  std::vector<std::vector<double>> norms; // [path][grid index]
  int horizon = 0;
};

TailTable tail_from_grid(const NormGrid& grid, std::vector<double> k_grid,
                         double tail_threshold, double divergence_cutoff) {
  if (k_grid.empty()) {
    throw PreconditionError("tail table needs a nonempty K grid");
  }
  std::sort(k_grid.begin(), k_grid.end());
  TailTable table;
  table.k_grid = k_grid;
  table.sup_fraction.assign(k_grid.size(), 0.0);
  const double n_paths = static_cast<double>(grid.norms.size());
  for (std::size_t g = 0; g < grid.times.size(); ++g) {
    for (std::size_t k = 0; k < k_grid.size(); ++k) {
      int count = 0;
      for (const auto& path : grid.norms) {
        if (path[g] > k_grid[k]) ++count;
      }
      table.sup_fraction[k] =
          std::max(table.sup_fraction[k], count / n_paths);
    }
  }

  std::vector<double> final_quarter;
  const int cutoff_t = 3 * grid.horizon / 4;
  for (std::size_t g = 0; g < grid.times.size(); ++g) {
    if (grid.times[g] <= cutoff_t) continue;
    for (const auto& path : grid.norms) final_quarter.push_back(path[g]);
  }
  if (!final_quarter.empty()) {
    std::sort(final_quarter.begin(), final_quarter.end());
    const std::size_t n = final_quarter.size();
    table.median_final_quarter =
        n % 2 == 1 ? final_quarter[n / 2]
                   : 0.5 * (final_quarter[n / 2 - 1] + final_quarter[n / 2]);
  }

  if (table.median_final_quarter > divergence_cutoff) {
    table.verdict = "divergent";
  } else if (table.sup_fraction.back() < tail_threshold) {
    table.verdict = "consistent with s.b.";
  } else {
    table.verdict = "inconclusive";
  }
  return table;
}

MomentCurve moments_from_grid(const NormGrid& grid, int order,
                              const std::vector<int>& time_grid,
                              std::uint64_t bootstrap_seed, int resamples) {
  if (order < 1) throw PreconditionError("moment_estimate: order k >= 1");
  MomentCurve curve;
  curve.order = order;
  RngStream rng(bootstrap_seed, 0, StreamPurpose::kBootstrap);
  const std::size_t n = grid.norms.size();
  for (int t : time_grid) {
    const auto it = std::lower_bound(grid.times.begin(), grid.times.end(), t);
    if (it == grid.times.end() || *it != t) continue;
    const std::size_t g = static_cast<std::size_t>(it - grid.times.begin());
    std::vector<double> powered(n);
    for (std::size_t p = 0; p < n; ++p) {
      powered[p] = std::pow(grid.norms[p][g], order);
    }
    const double mean =
        std::accumulate(powered.begin(), powered.end(), 0.0) / n;
    // top 1% share of the mean
    std::vector<double> sorted = powered;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t top = std::max<std::size_t>(1, n / 100);
    const double top_sum =
        std::accumulate(sorted.end() - top, sorted.end(), 0.0);
    if (mean > 0.0 && top_sum > 0.5 * mean * n) {
      curve.heavy_tail_caveat = true;
    }
    std::vector<double> boot_means(static_cast<std::size_t>(resamples));
    for (int r = 0; r < resamples; ++r) {
      double sum = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        sum += powered[static_cast<std::size_t>(rng.next_u64() % n)];
      }
      boot_means[static_cast<std::size_t>(r)] = sum / n;
    }
    const double bmean =
        std::accumulate(boot_means.begin(), boot_means.end(), 0.0) /
        resamples;
    double var = 0.0;
    for (double m : boot_means) var += (m - bmean) * (m - bmean);
    var /= resamples;
    curve.times.push_back(t);
    curve.moment.push_back(mean);
    curve.bootstrap_se.push_back(std::sqrt(var));
  }
  return curve;
}

NormGrid grid_from_runs(const std::vector<RareTrajectory>& runs) {
  NormGrid grid;
  if (runs.empty()) return grid;
  grid.horizon = runs.front().horizon();
  for (int t = 1; t <= grid.horizon; ++t) grid.times.push_back(t);
  for (const auto& run : runs) {
    if (run.horizon() != grid.horizon) {
      throw PreconditionError("runs must share one horizon");
    }
    std::vector<double> norms(static_cast<std::size_t>(grid.horizon));
    for (int t = 1; t <= grid.horizon; ++t) {
      norms[static_cast<std::size_t>(t - 1)] =
          run.steps[static_cast<std::size_t>(t - 1)].second.spectral_norm();
    }
    grid.norms.push_back(std::move(norms));
  }
  return grid;
}

}  // namespace

TailTable stochastic_boundedness_diagnostic(
    const std::vector<RareTrajectory>& runs, std::vector<double> k_grid,
    double tail_threshold, double divergence_cutoff) {
  if (runs.size() < 100) {
    throw PreconditionError(
        "stochastic_boundedness_diagnostic: needs at least 100 paths");
  }
  return tail_from_grid(grid_from_runs(runs), std::move(k_grid),
                        tail_threshold, divergence_cutoff);
}

MomentCurve moment_estimate(const std::vector<RareTrajectory>& runs, int order,
                            const std::vector<int>& time_grid,
                            std::uint64_t bootstrap_seed,
                            int bootstrap_resamples) {
  if (runs.empty()) throw PreconditionError("moment_estimate: no runs");
  return moments_from_grid(grid_from_runs(runs), order, time_grid,
                           bootstrap_seed, bootstrap_resamples);
}

// ---------------------------------------------------------------------
// Streaming driver
// ---------------------------------------------------------------------

namespace {

struct PathRecord {
  double func_at_t_star = 0.0;
  double func_at_horizon = 0.0;
  std::vector<double> func_on_grid;   // grid times past burn-in
  std::vector<double> norm_on_grid;   // every grid time
  std::vector<double> trace_on_grid;
  double floor_margin = std::numeric_limits<double>::infinity();
  ClipStats clips;
  long clamped = 0;
  std::vector<DumpedPoint> dumped;
};

std::vector<int> make_time_grid(const McOptions& opt, int t_star) {
  int stride = opt.time_grid_stride;
  if (stride <= 0) stride = std::max(1, opt.horizon / 200);
  std::vector<int> grid;
  for (int t = stride; t <= opt.horizon; t += stride) grid.push_back(t);
  grid.push_back(t_star);
  grid.push_back(opt.horizon);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

PathRecord walk_path(const SensorNetwork& net, const Schedule& schedule,
                     const MapFamily& maps, const CovMatrix& p0,
                     const McOptions& opt, const std::vector<int>& grid,
                     int t_star, int path) {
  PathRecord rec;
  RngStream rng(opt.seed, static_cast<std::uint64_t>(path),
                stream_tag(StreamPurpose::kSchedule, opt.stream_variant));
  const Eigen::MatrixXd& q = net.Q().mat();
  CovMatrix p = p0;
  std::size_t g = 0;
  for (int t = 1; t <= opt.horizon; ++t) {
    const SubsetId i = schedule.sample(rng);
    p = maps.apply(i, p, &rec.clips);
    rec.floor_margin = std::min(
        rec.floor_margin, SymMatrix(p.mat() - q).min_eigenvalue());
    const double norm = p.spectral_norm();
    if (t == t_star) {
      rec.func_at_t_star = evaluate_functional(opt.functional, p);
    }
    if (t == opt.horizon) {
      rec.func_at_horizon = evaluate_functional(opt.functional, p);
    }
    if (g < grid.size() && grid[g] == t) {
      rec.norm_on_grid.push_back(norm);
      rec.trace_on_grid.push_back(p.trace());
      if (t > opt.burn_in) {
        rec.func_on_grid.push_back(evaluate_functional(opt.functional, p));
      }
      if (path < opt.dump_paths) {
        rec.dumped.push_back(DumpedPoint{path, t, i, p});
      }
      ++g;
    }
    if (norm > opt.norm_clamp) {
      p = CovMatrix(SymMatrix(p.mat() * (opt.norm_clamp / norm)));
      ++rec.clamped;
    }
  }
  return rec;
}

McResult run_driver(const SensorNetwork& net, const Schedule& schedule,
                    const CovMatrix& p0, const McOptions& opt,
                    bool parallel) {
  if (opt.paths < 1) throw PreconditionError("monte carlo: paths >= 1");
  if (opt.horizon < 1) throw PreconditionError("monte carlo: horizon >= 1");
  const int t_star = opt.t_star > 0 ? opt.t_star : opt.horizon;
  if (t_star > opt.horizon) {
    throw PreconditionError("monte carlo: t_star must be <= horizon");
  }
  if (opt.burn_in >= opt.horizon) {
    throw PreconditionError("monte carlo: burn_in must be below horizon");
  }
  if (p0.dim() != net.state_dim()) {
    throw PreconditionError("monte carlo: initial covariance dimension");
  }

  std::vector<SubsetId> alphabet = schedule.support();
  if (std::find(alphabet.begin(), alphabet.end(), SubsetId{0}) ==
      alphabet.end()) {
    alphabet.insert(alphabet.begin(), 0);
  }
  const MapFamily maps(net, alphabet);
  const std::vector<int> grid = make_time_grid(opt, t_star);

  std::vector<PathRecord> records(static_cast<std::size_t>(opt.paths));
  std::exception_ptr first_error;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel)
#endif
  for (int path = 0; path < opt.paths; ++path) {
    try {
      records[static_cast<std::size_t>(path)] =
          walk_path(net, schedule, maps, p0, opt, grid, t_star, path);
    } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  // Fixed-order aggregation over path index.
  McResult result;
  result.time_grid = grid;
  result.paths = opt.paths;
  result.horizon = opt.horizon;
  result.t_star = t_star;
  result.at_t_star.tag = result.at_horizon.tag = result.pooled.tag =
      opt.functional;
  result.pooled.burn_in = opt.burn_in;
  result.min_floor_margin = std::numeric_limits<double>::infinity();

  NormGrid norm_grid;
  norm_grid.horizon = opt.horizon;
  norm_grid.times = grid;
  for (const auto& rec : records) {
    result.at_t_star.samples.push_back(rec.func_at_t_star);
    result.at_horizon.samples.push_back(rec.func_at_horizon);
    result.pooled.samples.insert(result.pooled.samples.end(),
                                 rec.func_on_grid.begin(),
                                 rec.func_on_grid.end());
    result.min_floor_margin =
        std::min(result.min_floor_margin, rec.floor_margin);
    result.clips.merge(rec.clips);
    result.clamped_steps += rec.clamped;
    for (const auto& d : rec.dumped) result.dumped.push_back(d);
    norm_grid.norms.push_back(rec.norm_on_grid);
  }
  std::sort(result.at_t_star.samples.begin(), result.at_t_star.samples.end());
  std::sort(result.at_horizon.samples.begin(),
            result.at_horizon.samples.end());
  std::sort(result.pooled.samples.begin(), result.pooled.samples.end());

  result.tail = tail_from_grid(norm_grid, opt.k_grid, opt.tail_threshold,
                               opt.divergence_cutoff);
  result.moments = moments_from_grid(norm_grid, opt.moment_order, grid,
                                     opt.seed, 200);

  std::vector<double> final_traces;
  const int cutoff_t = 3 * opt.horizon / 4;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (grid[g] <= cutoff_t) continue;
    for (const auto& rec : records) final_traces.push_back(rec.trace_on_grid[g]);
  }
  if (!final_traces.empty()) {
    std::sort(final_traces.begin(), final_traces.end());
    const std::size_t n = final_traces.size();
    result.trace_median_final_quarter =
        n % 2 == 1 ? final_traces[n / 2]
                   : 0.5 * (final_traces[n / 2 - 1] + final_traces[n / 2]);
  }
  return result;
}

}  // namespace

McResult simulate_covariance_paths(const SensorNetwork& net,
                                   const Schedule& schedule,
                                   const CovMatrix& p0,
                                   const McOptions& options) {
  return run_driver(net, schedule, p0, options, /*parallel=*/true);
}

McResult simulate_covariance_paths_serial(const SensorNetwork& net,
                                          const Schedule& schedule,
                                          const CovMatrix& p0,
                                          const McOptions& options) {
  return run_driver(net, schedule, p0, options, /*parallel=*/false);
}

TwoIcResult two_initial_condition_study(const SensorNetwork& net,
                                        const Schedule& schedule,
                                        const CovMatrix& p0_a,
                                        const CovMatrix& p0_b,
                                        McOptions options, bool parallel) {
  TwoIcResult out;
  const std::uint64_t base_variant = options.stream_variant;
  options.stream_variant = base_variant;
  out.a = parallel ? simulate_covariance_paths(net, schedule, p0_a, options)
                   : simulate_covariance_paths_serial(net, schedule, p0_a,
                                                      options);
  options.stream_variant = base_variant + 1;
  out.b = parallel ? simulate_covariance_paths(net, schedule, p0_b, options)
                   : simulate_covariance_paths_serial(net, schedule, p0_b,
                                                      options);
  out.ks_at_t_star = ks_two_sample(out.a.at_t_star, out.b.at_t_star);
  out.ks_at_horizon = ks_two_sample(out.a.at_horizon, out.b.at_horizon);
  return out;
}

FilterBatchResult filter_consistency_batch(const SensorNetwork& net,
                                           const Schedule& schedule,
                                           int horizon, int runs,
                                           std::uint64_t seed,
                                           bool parallel) {
  if (runs < 1) throw PreconditionError("filter_consistency_batch: runs >= 1");
  std::vector<double> deviations(static_cast<std::size_t>(runs), 0.0);
  std::vector<double> relative(static_cast<std::size_t>(runs), 0.0);
  std::vector<double> floors(static_cast<std::size_t>(runs),
                             std::numeric_limits<double>::infinity());
  std::exception_ptr first_error;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel)
#endif
  for (int r = 0; r < runs; ++r) {
    try {
      const FilterRun run = run_filter(net, schedule, horizon, seed,
                                       static_cast<std::uint64_t>(r));
      const double dev = pathwise_consistency(net, run);
      double floor = std::numeric_limits<double>::infinity();
      double max_norm = 0.0;
      for (const auto& [i, p] : run.covs.steps) {
        floor = std::min(
            floor, SymMatrix(p.mat() - net.Q().mat()).min_eigenvalue());
        max_norm = std::max(max_norm, p.spectral_norm());
      }
      deviations[static_cast<std::size_t>(r)] = dev;
      relative[static_cast<std::size_t>(r)] = dev / (1.0 + max_norm);
      floors[static_cast<std::size_t>(r)] = floor;
    } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  FilterBatchResult out;
  out.runs = runs;
  out.max_deviation = *std::max_element(deviations.begin(), deviations.end());
  out.max_relative_deviation =
      *std::max_element(relative.begin(), relative.end());
  out.min_floor_margin = *std::min_element(floors.begin(), floors.end());
  return out;
}

}  // namespace rare
