#pragma once

#include <json.hpp>
#include <optional>
#include <string>

#include "rare/mckalman.hpp"
#include "rare/support.hpp"

namespace rare {

struct FixedPointParams {
  double tol = 1e-12;
  int max_iter = 100000;
};

struct SupportParams {
  /// Anchor subset as 1-based sensor indices; empty means "first atom of
  /// J(D)" resolved at run time.
  std::vector<int> anchor_sensors;
  int depth = 6;
  std::size_t node_cap = 20000;
  double delta = 1e-8;
  bool full_alphabet = false;
};

struct MonteCarloParams {
  McOptions options;
  std::optional<Eigen::MatrixXd> initial;    // defaults to the network P0
  std::optional<Eigen::MatrixXd> initial_b;  // enables the two-IC KS study
  bool with_filter = false;
  int filter_runs = 100;
};

/// Fully validated experiment description. Parsing either succeeds
/// completely or throws a ConfigError listing every schema violation with
/// its JSON-pointer path.
class ExperimentConfig {
 public:
  ExperimentConfig(SensorNetwork network, Schedule schedule,
                   std::uint64_t seed, FixedPointParams fixed_points,
                   SupportParams support, MonteCarloParams montecarlo)
      : network_(std::move(network)),
        schedule_(std::move(schedule)),
        seed_(seed),
        fixed_points_(std::move(fixed_points)),
        support_(std::move(support)),
        montecarlo_(std::move(montecarlo)) {}

  const SensorNetwork& network() const { return network_; }
  const Schedule& schedule() const { return schedule_; }
  std::uint64_t seed() const { return seed_; }
  void override_seed(std::uint64_t s) { seed_ = s; }
  const FixedPointParams& fixed_points() const { return fixed_points_; }
  const SupportParams& support() const { return support_; }
  const MonteCarloParams& montecarlo() const { return montecarlo_; }

  /// The config with every defaulted value spelled out; re-parses to an
  /// equal config.
  nlohmann::json resolved() const;

 private:
  SensorNetwork network_;
  Schedule schedule_;
  std::uint64_t seed_;
  FixedPointParams fixed_points_;
  SupportParams support_;
  MonteCarloParams montecarlo_;
};

ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_json(const nlohmann::json& root);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);

}  // namespace rare
