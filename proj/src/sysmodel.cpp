#include "rare/sysmodel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace rare {

std::vector<int> subset_sensors(SubsetId id) {
  std::vector<int> out;
  for (int k = 0; k < kMaxSensors; ++k) {
    if (id & (SubsetId{1} << k)) out.push_back(k + 1);
  }
  return out;
}

SubsetId subset_from_sensors(const std::vector<int>& sensors) {
  SubsetId id = 0;
  for (int s : sensors) {
    if (s < 1 || s > kMaxSensors) {
      std::ostringstream os;
      os << "sensor index " << s << " out of range [1," << kMaxSensors << "]";
      throw PreconditionError(os.str());
    }
    const SubsetId bit = SubsetId{1} << (s - 1);
    if (id & bit) {
      std::ostringstream os;
      os << "duplicate sensor index " << s << " in subset";
      throw PreconditionError(os.str());
    }
    id |= bit;
  }
  return id;
}

std::string subset_to_string(SubsetId id) {
  std::ostringstream os;
  os << "{";
  bool first = true;
  for (int s : subset_sensors(id)) {
    if (!first) os << ",";
    os << s;
    first = false;
  }
  os << "}";
  return os.str();
}

SensorNetwork::SensorNetwork(const Eigen::MatrixXd& A, const CovMatrix& Q,
                             const CovMatrix& P0, std::vector<Sensor> sensors)
    : A_(A), Q_(Q), P0_(P0), sensors_(std::move(sensors)) {
  const int m = static_cast<int>(A_.rows());
  if (A_.rows() != A_.cols() || m < 1) {
    throw PreconditionError("A must be square with dim >= 1");
  }
  if (Q_.dim() != m || P0_.dim() != m) {
    std::ostringstream os;
    os << "Q and P0 must be " << m << "x" << m << ", got " << Q_.dim()
       << " and " << P0_.dim();
    throw PreconditionError(os.str());
  }
  if (sensors_.empty() || static_cast<int>(sensors_.size()) > kMaxSensors) {
    std::ostringstream os;
    os << "sensor count must be in [1," << kMaxSensors << "], got "
       << sensors_.size();
    throw PreconditionError(os.str());
  }
  for (std::size_t n = 0; n < sensors_.size(); ++n) {
    const Sensor& s = sensors_[n];
    if (s.C.cols() != m) {
      std::ostringstream os;
      os << "sensor " << n + 1 << ": C has " << s.C.cols()
         << " columns, expected " << m;
      throw PreconditionError(os.str());
    }
    if (s.C.rows() < 1) {
      std::ostringstream os;
      os << "sensor " << n + 1 << ": C must have at least one row";
      throw PreconditionError(os.str());
    }
    if (s.R.dim() != s.C.rows()) {
      std::ostringstream os;
      os << "sensor " << n + 1 << ": R is " << s.R.dim() << "x" << s.R.dim()
         << " but C has " << s.C.rows() << " rows";
      throw PreconditionError(os.str());
    }
    const double min_eig = s.R.min_eigenvalue();
    if (!(min_eig > 0.0)) {
      std::ostringstream os;
      os << "sensor " << n + 1
         << ": R must be strictly positive definite (min eigenvalue "
         << min_eig << ")";
      throw PreconditionError(os.str());
    }
  }
}

void SensorNetwork::require_valid_subset(SubsetId id) const {
  if (id >= subset_count()) {
    std::ostringstream os;
    os << "subset id " << id << " out of range for " << sensor_count()
       << " sensors";
    throw PreconditionError(os.str());
  }
}

StackedObsModel SensorNetwork::stacked(SubsetId id) const {
  require_valid_subset(id);
  if (id == 0) {
    throw PreconditionError(
        "the empty subset has no observation model (use the Lyapunov map)");
  }
  int rows = 0;
  for (int s : subset_sensors(id)) rows += static_cast<int>(sensors_[s - 1].C.rows());

  Eigen::MatrixXd c(rows, state_dim());
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(rows, rows);
  int at = 0;
  for (int s : subset_sensors(id)) {
    const Sensor& sen = sensors_[s - 1];
    const int mn = static_cast<int>(sen.C.rows());
    c.middleRows(at, mn) = sen.C;
    r.block(at, at, mn, mn) = sen.R.mat();
    at += mn;
  }
  return StackedObsModel{std::move(c), CovMatrix(r)};
}

SensorNetwork build_network(const Eigen::MatrixXd& A, const CovMatrix& Q,
                            const CovMatrix& P0,
                            std::vector<Sensor> sensors) {
  return SensorNetwork(A, Q, P0, std::move(sensors));
}

Schedule Schedule::from_entries(
    std::vector<std::pair<SubsetId, double>> entries) {
  if (entries.empty()) {
    throw PreconditionError("schedule needs at least one entry");
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double sum = 0.0;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& [id, p] = entries[k];
    if (k > 0 && entries[k - 1].first == id) {
      std::ostringstream os;
      os << "duplicate schedule atom " << subset_to_string(id);
      throw PreconditionError(os.str());
    }
    if (!(p > 0.0) || p > 1.0) {
      std::ostringstream os;
      os << "schedule atom " << subset_to_string(id) << " has probability "
         << p << ", must be in (0,1]";
      throw PreconditionError(os.str());
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    std::ostringstream os;
    os << "schedule probabilities sum to " << sum << " (off by " << sum - 1.0
       << "); they must sum to 1";
    throw PreconditionError(os.str());
  }
  Schedule s;
  s.atoms_ = std::move(entries);
  s.cdf_.reserve(s.atoms_.size());
  double acc = 0.0;
  for (const auto& [id, p] : s.atoms_) {
    acc += p;
    s.cdf_.push_back(acc);
  }
  s.cdf_.back() = 1.0;
  return s;
}

double Schedule::prob(SubsetId id) const {
  auto it = std::lower_bound(
      atoms_.begin(), atoms_.end(), id,
      [](const auto& a, SubsetId v) { return a.first < v; });
  if (it != atoms_.end() && it->first == id) return it->second;
  return 0.0;
}

std::vector<SubsetId> Schedule::support() const {
  std::vector<SubsetId> out;
  out.reserve(atoms_.size());
  for (const auto& [id, p] : atoms_) out.push_back(id);
  return out;
}

SubsetId Schedule::sample(RngStream& rng) const {
  const double u = rng.uniform01();
  auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  return atoms_[static_cast<std::size_t>(it - cdf_.begin())].first;
}

SubsetId sample_subset(const Schedule& s, RngStream& rng) {
  return s.sample(rng);
}

namespace {

Eigen::VectorXd gaussian_vector(const Eigen::MatrixXd& sqrt_cov,
                                RngStream& rng) {
  Eigen::VectorXd z(sqrt_cov.cols());
  for (int i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return sqrt_cov * z;
}

}  // namespace

StateTrajectory simulate_signal(const SensorNetwork& net, int horizon,
                                RngStream& rng) {
  if (horizon < 1) throw PreconditionError("simulate_signal: horizon T >= 1");
  const Eigen::MatrixXd p0_sqrt = psd_sqrt(net.P0());
  const Eigen::MatrixXd q_sqrt = psd_sqrt(net.Q());
  StateTrajectory traj;
  traj.states.reserve(static_cast<std::size_t>(horizon) + 1);
  traj.states.push_back(gaussian_vector(p0_sqrt, rng));
  for (int t = 0; t < horizon; ++t) {
    traj.states.push_back(net.A() * traj.states.back() +
                          gaussian_vector(q_sqrt, rng));
  }
  return traj;
}

ObsTrajectory simulate_observations(const SensorNetwork& net,
                                    const StateTrajectory& traj,
                                    const std::vector<SubsetId>& subsets,
                                    RngStream& rng) {
  if (traj.states.size() < subsets.size()) {
    throw PreconditionError(
        "simulate_observations: need a state for every subset slot");
  }
  ObsTrajectory out;
  out.subsets = subsets;
  out.obs.resize(subsets.size());
  std::map<SubsetId, std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> cache;
  for (std::size_t t = 0; t < subsets.size(); ++t) {
    const SubsetId i = subsets[t];
    if (i == 0) continue;  // nothing arrives; slot stays empty
    auto it = cache.find(i);
    if (it == cache.end()) {
      const StackedObsModel m = net.stacked(i);
      it = cache.emplace(i, std::make_pair(m.C, psd_sqrt(m.R))).first;
    }
    out.obs[t] = it->second.first * traj.states[t] +
                 gaussian_vector(it->second.second, rng);
  }
  return out;
}

}  // namespace rare
