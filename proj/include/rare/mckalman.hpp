#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rare/riccati.hpp"

namespace rare {

/// One joint simulation of signal, schedule, observations and the
/// one-step predictor. xhat[t] is xhat(t | t-1); covs carries P(0..T)
/// along the same subset sequence the observations used.
struct FilterRun {
  std::vector<Eigen::VectorXd> xhat;  // t = 0..T
  RareTrajectory covs;
  ObsTrajectory obs;
  StateTrajectory states;
  std::uint64_t seed = 0;
  std::uint64_t path = 0;

  int horizon() const { return covs.horizon(); }
};

/// One predictor update. The estimator always learns the transmitting
/// subset (acknowledgements), so i = 0 with an empty observation is the
/// open-loop branch. The covariance goes through rare_step, which keeps
/// filter covariance paths bit-identical to plain RARE iteration.
std::pair<Eigen::VectorXd, CovMatrix> kalman_predictor_step(
    const SensorNetwork& net, SubsetId i,
    const std::optional<Eigen::VectorXd>& y, const Eigen::VectorXd& xhat,
    const CovMatrix& p, ClipStats* clips = nullptr);

FilterRun run_filter(const SensorNetwork& net, const Schedule& schedule,
                     int horizon, std::uint64_t seed, std::uint64_t path = 0);

/// Replays the run's subset sequence through rare_step from the same
/// initial covariance and returns the max spectral deviation from the
/// stored covariances. Near zero by construction; guards refactors.
double pathwise_consistency(const SensorNetwork& net, const FilterRun& run);

enum class Functional { kTrace, kSpectralNorm, kLogDet };

std::string functional_name(Functional f);
Functional functional_from_name(const std::string& name);
double evaluate_functional(Functional f, const CovMatrix& p);

/// Scalar samples of a covariance functional, sorted ascending.
struct EmpiricalDistribution {
  std::vector<double> samples;
  Functional tag = Functional::kTrace;
  int burn_in = 0;
};

/// Sampling mode: one sample per run at a fixed time, or all post
/// burn-in times pooled (diagnostic only; pooled samples are serially
/// dependent).
struct SampleAt {
  static SampleAt at_time(int t) { return SampleAt{t}; }
  static SampleAt pooled() { return SampleAt{-1}; }
  int t_star = -1;
  bool is_pooled() const { return t_star < 0; }
};

EmpiricalDistribution empirical_functional_distribution(
    const std::vector<RareTrajectory>& runs, Functional functional,
    int burn_in, SampleAt sample_at);
EmpiricalDistribution empirical_functional_distribution(
    const std::vector<FilterRun>& runs, Functional functional, int burn_in,
    SampleAt sample_at);

/// Two-sample Kolmogorov-Smirnov statistic, sup |F1 - F2| in [0, 1].
double ks_two_sample(const EmpiricalDistribution& a,
                     const EmpiricalDistribution& b);
double ks_statistic(std::vector<double> a, std::vector<double> b);

/// Empirical tail table over a grid of thresholds K plus the boundedness
/// verdict described by the two rules: "consistent with s.b." when the
/// tail at the largest K is under tail_threshold, "divergent" when the
/// median norm over the final quarter of the horizon exceeds
/// divergence_cutoff, otherwise "inconclusive".
struct TailTable {
  std::vector<double> k_grid;
  std::vector<double> sup_fraction;  // sup over sampled t of P(||P_t|| > K)
  double median_final_quarter = 0.0;
  std::string verdict;
};

TailTable stochastic_boundedness_diagnostic(
    const std::vector<RareTrajectory>& runs, std::vector<double> k_grid,
    double tail_threshold = 0.01, double divergence_cutoff = 1e6);

/// Sample k-th moments of ||P_t|| on a time grid with bootstrap standard
/// errors. No verdict: heavy tails make sample moments unreliable, so a
/// caveat flag is raised when the top 1% of samples carries more than
/// half the mean.
struct MomentCurve {
  int order = 1;
  std::vector<int> times;
  std::vector<double> moment;
  std::vector<double> bootstrap_se;
  bool heavy_tail_caveat = false;
};

MomentCurve moment_estimate(const std::vector<RareTrajectory>& runs, int order,
                            const std::vector<int>& time_grid,
                            std::uint64_t bootstrap_seed = 0,
                            int bootstrap_resamples = 200);

// ---------------------------------------------------------------------
// Streaming Monte Carlo driver. Paths are independent tasks with derived
// rng streams; per-path records land in preallocated slots and aggregation
// runs in fixed path order, so results are bit-identical for any worker
// count. The OpenMP kernel and the serial reference share the per-path
// walker.
// ---------------------------------------------------------------------

struct McOptions {
  int paths = 500;
  int horizon = 1000;
  int burn_in = 100;
  int t_star = 0;           // 0: use horizon
  Functional functional = Functional::kTrace;
  std::vector<double> k_grid = {1e2, 1e3, 1e6, 1e9, 1e12, 1e16, 1e20};
  double tail_threshold = 0.01;
  double divergence_cutoff = 1e6;
  int time_grid_stride = 0;  // 0: ~200 grid points
  std::uint64_t seed = 1;
  std::uint64_t stream_variant = 0;  // separates otherwise equal studies
  int moment_order = 1;
  /// Spectral norms above this are rescaled to it (the next correction
  /// still resets them); keeps astronomically divergent paths finite.
  double norm_clamp = 1e150;
  int dump_paths = 0;  // keep full grid covariances for the first k paths
};

struct DumpedPoint {
  int path;
  int t;
  SubsetId subset;
  CovMatrix value;
};

struct McResult {
  std::vector<int> time_grid;
  EmpiricalDistribution at_t_star;      // one sample per path
  EmpiricalDistribution at_horizon;     // one sample per path at t = T
  EmpiricalDistribution pooled;         // grid times past burn-in, pooled
  TailTable tail;
  MomentCurve moments;
  double trace_median_final_quarter = 0.0;
  double min_floor_margin = 0.0;  // min over paths, t>=1 of min eig(P(t)-Q)
  ClipStats clips;
  long clamped_steps = 0;
  std::vector<DumpedPoint> dumped;
  int paths = 0;
  int horizon = 0;
  int t_star = 0;
};

/// OpenMP-parallel covariance Monte Carlo.
McResult simulate_covariance_paths(const SensorNetwork& net,
                                   const Schedule& schedule,
                                   const CovMatrix& p0,
                                   const McOptions& options);

/// Serial reference walker; must produce bit-identical results.
McResult simulate_covariance_paths_serial(const SensorNetwork& net,
                                          const Schedule& schedule,
                                          const CovMatrix& p0,
                                          const McOptions& options);

/// Ergodicity check of the invariant law: independent path bundles from
/// two initial conditions, compared by KS at t* (and at 2 t* when the
/// horizon allows, as a sensitivity readout).
struct TwoIcResult {
  McResult a;
  McResult b;
  double ks_at_t_star = 1.0;
  double ks_at_horizon = 1.0;
};

TwoIcResult two_initial_condition_study(const SensorNetwork& net,
                                        const Schedule& schedule,
                                        const CovMatrix& p0_a,
                                        const CovMatrix& p0_b,
                                        McOptions options,
                                        bool parallel = true);

/// Batch filter-vs-replay deviation over many seeds (max over runs).
struct FilterBatchResult {
  double max_deviation = 0.0;
  /// max over runs of deviation / (1 + max ||P|| along that run)
  double max_relative_deviation = 0.0;
  double min_floor_margin = 0.0;
  int runs = 0;
};

FilterBatchResult filter_consistency_batch(const SensorNetwork& net,
                                           const Schedule& schedule,
                                           int horizon, int runs,
                                           std::uint64_t seed,
                                           bool parallel = true);

}  // namespace rare
