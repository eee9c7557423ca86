#include "rare/config.hpp"

#include <fstream>
#include <sstream>

namespace rare {

namespace {

using nlohmann::json;

/// Collects every violation before failing, so a bad config reports all
/// problems at once.
class Validator {
 public:
  void fail(const std::string& pointer, const std::string& message) {
    problems_.push_back(pointer + ": " + message);
  }

  void check_keys(const json& obj, const std::string& pointer,
                  std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
      (void)value;
      bool known = false;
      for (const char* a : allowed) {
        if (key == a) {
          known = true;
          break;
        }
      }
      if (!known) fail(pointer + "/" + key, "unknown key");
    }
  }

  bool ok() const { return problems_.empty(); }

  void throw_if_failed() const {
    if (ok()) return;
    std::ostringstream os;
    os << "config has " << problems_.size() << " problem"
       << (problems_.size() == 1 ? "" : "s") << ":";
    for (const auto& p : problems_) os << "\n  " << p;
    throw ConfigError(os.str());
  }

 private:
  std::vector<std::string> problems_;
};

std::optional<Eigen::MatrixXd> parse_matrix(const json& node,
                                            const std::string& pointer,
                                            Validator& v) {
  if (!node.is_array() || node.empty()) {
    v.fail(pointer, "expected a nonempty array of rows");
    return std::nullopt;
  }
  const std::size_t rows = node.size();
  std::size_t cols = 0;
  Eigen::MatrixXd m;
  for (std::size_t i = 0; i < rows; ++i) {
    const json& row = node[i];
    if (!row.is_array() || row.empty()) {
      v.fail(pointer + "/" + std::to_string(i),
             "expected a nonempty array of numbers");
      return std::nullopt;
    }
    if (i == 0) {
      cols = row.size();
      m.resize(static_cast<Eigen::Index>(rows),
               static_cast<Eigen::Index>(cols));
    } else if (row.size() != cols) {
      v.fail(pointer + "/" + std::to_string(i), "ragged row length");
      return std::nullopt;
    }
    for (std::size_t j = 0; j < cols; ++j) {
      if (!row[j].is_number()) {
        v.fail(pointer + "/" + std::to_string(i) + "/" + std::to_string(j),
               "expected a number");
        return std::nullopt;
      }
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          row[j].get<double>();
    }
  }
  return m;
}

double get_positive(const json& obj, const char* key, double fallback,
                    const std::string& pointer, Validator& v) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number() || !(obj[key].get<double>() > 0.0)) {
    v.fail(pointer + "/" + key, "must be a positive number");
    return fallback;
  }
  return obj[key].get<double>();
}

long get_int(const json& obj, const char* key, long fallback, long min_value,
             const std::string& pointer, Validator& v) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) {
    v.fail(pointer + "/" + key, "must be an integer");
    return fallback;
  }
  const long value = obj[key].get<long>();
  if (value < min_value) {
    std::ostringstream os;
    os << "must be >= " << min_value;
    v.fail(pointer + "/" + key, os.str());
    return fallback;
  }
  return value;
}

bool get_bool(const json& obj, const char* key, bool fallback,
              const std::string& pointer, Validator& v) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_boolean()) {
    v.fail(pointer + "/" + key, "must be a boolean");
    return fallback;
  }
  return obj[key].get<bool>();
}

std::vector<int> parse_sensor_list(const json& node,
                                   const std::string& pointer, Validator& v) {
  std::vector<int> out;
  if (!node.is_array()) {
    v.fail(pointer, "expected an array of 1-based sensor indices");
    return out;
  }
  for (std::size_t k = 0; k < node.size(); ++k) {
    if (!node[k].is_number_integer()) {
      v.fail(pointer + "/" + std::to_string(k), "expected an integer");
      return {};
    }
    out.push_back(node[k].get<int>());
  }
  return out;
}

}  // namespace

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

ExperimentConfig parse_config_json(const json& root) {
  Validator v;
  if (!root.is_object()) {
    v.fail("", "top level must be an object");
    v.throw_if_failed();
  }
  v.check_keys(root, "",
               {"network", "schedule", "seed", "fixed_points", "support",
                "montecarlo"});

  // --- network ---
  std::optional<SensorNetwork> network;
  if (!root.contains("network") || !root["network"].is_object()) {
    v.fail("/network", "required object");
  } else {
    const json& net = root["network"];
    v.check_keys(net, "/network", {"A", "Q", "P0", "sensors"});
    std::optional<Eigen::MatrixXd> a, q, p0;
    if (net.contains("A")) a = parse_matrix(net["A"], "/network/A", v);
    else v.fail("/network/A", "required matrix");
    if (net.contains("Q")) q = parse_matrix(net["Q"], "/network/Q", v);
    else v.fail("/network/Q", "required matrix");
    if (net.contains("P0")) p0 = parse_matrix(net["P0"], "/network/P0", v);
    else v.fail("/network/P0", "required matrix");

    std::vector<Sensor> sensors;
    bool sensors_ok = true;
    if (!net.contains("sensors") || !net["sensors"].is_array() ||
        net["sensors"].empty()) {
      v.fail("/network/sensors", "required nonempty array");
      sensors_ok = false;
    } else {
      for (std::size_t n = 0; n < net["sensors"].size(); ++n) {
        const std::string ptr = "/network/sensors/" + std::to_string(n);
        const json& s = net["sensors"][n];
        if (!s.is_object()) {
          v.fail(ptr, "expected an object with C and R");
          sensors_ok = false;
          continue;
        }
        v.check_keys(s, ptr, {"C", "R"});
        std::optional<Eigen::MatrixXd> c, r;
        if (s.contains("C")) c = parse_matrix(s["C"], ptr + "/C", v);
        else v.fail(ptr + "/C", "required matrix");
        if (s.contains("R")) r = parse_matrix(s["R"], ptr + "/R", v);
        else v.fail(ptr + "/R", "required matrix");
        if (!c || !r) {
          sensors_ok = false;
          continue;
        }
        try {
          CovMatrix rc(*r);
          if (!rc.positive_definite()) {
            v.fail(ptr + "/R", "must be strictly positive definite");
            sensors_ok = false;
            continue;
          }
          sensors.push_back(Sensor{*c, std::move(rc)});
        } catch (const Error& e) {
          v.fail(ptr + "/R", e.what());
          sensors_ok = false;
        }
      }
    }
    if (a && q && p0 && sensors_ok) {
      try {
        network.emplace(*a, CovMatrix(*q), CovMatrix(*p0),
                        std::move(sensors));
      } catch (const Error& e) {
        v.fail("/network", e.what());
      }
    }
  }

  // --- schedule ---
  std::optional<Schedule> schedule;
  if (!root.contains("schedule") || !root["schedule"].is_array() ||
      root["schedule"].empty()) {
    v.fail("/schedule", "required nonempty array of {sensors, prob}");
  } else {
    std::vector<std::pair<SubsetId, double>> entries;
    bool entries_ok = true;
    for (std::size_t k = 0; k < root["schedule"].size(); ++k) {
      const std::string ptr = "/schedule/" + std::to_string(k);
      const json& e = root["schedule"][k];
      if (!e.is_object()) {
        v.fail(ptr, "expected an object with sensors and prob");
        entries_ok = false;
        continue;
      }
      v.check_keys(e, ptr, {"sensors", "prob"});
      if (!e.contains("sensors") || !e.contains("prob")) {
        v.fail(ptr, "needs both sensors and prob");
        entries_ok = false;
        continue;
      }
      const std::vector<int> sens =
          parse_sensor_list(e["sensors"], ptr + "/sensors", v);
      if (!e["prob"].is_number()) {
        v.fail(ptr + "/prob", "expected a number");
        entries_ok = false;
        continue;
      }
      const double prob = e["prob"].get<double>();
      if (!(prob > 0.0) || prob > 1.0) {
        v.fail(ptr + "/prob", "must be in (0,1]");
        entries_ok = false;
        continue;
      }
      try {
        entries.emplace_back(subset_from_sensors(sens), prob);
      } catch (const Error& err) {
        v.fail(ptr + "/sensors", err.what());
        entries_ok = false;
      }
    }
    if (entries_ok) {
      try {
        schedule = Schedule::from_entries(std::move(entries));
      } catch (const Error& e) {
        v.fail("/schedule", e.what());
      }
    }
  }

  // --- seed ---
  std::uint64_t seed = 1;
  if (root.contains("seed")) {
    if (!root["seed"].is_number_integer() || root["seed"].get<long long>() < 0) {
      v.fail("/seed", "must be a non-negative integer");
    } else {
      seed = root["seed"].get<std::uint64_t>();
    }
  }

  // --- fixed_points ---
  FixedPointParams fp;
  if (root.contains("fixed_points")) {
    const json& f = root["fixed_points"];
    if (!f.is_object()) {
      v.fail("/fixed_points", "expected an object");
    } else {
      v.check_keys(f, "/fixed_points", {"tol", "max_iter"});
      fp.tol = get_positive(f, "tol", fp.tol, "/fixed_points", v);
      fp.max_iter = static_cast<int>(
          get_int(f, "max_iter", fp.max_iter, 1, "/fixed_points", v));
    }
  }

  // --- support ---
  SupportParams sp;
  if (root.contains("support")) {
    const json& s = root["support"];
    if (!s.is_object()) {
      v.fail("/support", "expected an object");
    } else {
      v.check_keys(s, "/support",
                   {"anchor", "depth", "node_cap", "delta", "full_alphabet"});
      if (s.contains("anchor")) {
        sp.anchor_sensors = parse_sensor_list(s["anchor"], "/support/anchor", v);
      }
      sp.depth = static_cast<int>(
          get_int(s, "depth", sp.depth, 0, "/support", v));
      sp.node_cap = static_cast<std::size_t>(get_int(
          s, "node_cap", static_cast<long>(sp.node_cap), 1, "/support", v));
      sp.delta = get_positive(s, "delta", sp.delta, "/support", v);
      sp.full_alphabet =
          get_bool(s, "full_alphabet", sp.full_alphabet, "/support", v);
    }
  }

  // --- montecarlo ---
  MonteCarloParams mc;
  if (root.contains("montecarlo")) {
    const json& m = root["montecarlo"];
    if (!m.is_object()) {
      v.fail("/montecarlo", "expected an object");
    } else {
      v.check_keys(m, "/montecarlo",
                   {"paths", "horizon", "burn_in", "t_star", "functional",
                    "k_grid", "tail_threshold", "divergence_cutoff",
                    "time_grid_stride", "initial", "initial_b", "with_filter",
                    "filter_runs", "dump_paths"});
      McOptions& o = mc.options;
      o.paths = static_cast<int>(
          get_int(m, "paths", o.paths, 1, "/montecarlo", v));
      o.horizon = static_cast<int>(
          get_int(m, "horizon", o.horizon, 1, "/montecarlo", v));
      o.burn_in = static_cast<int>(
          get_int(m, "burn_in", o.burn_in, 0, "/montecarlo", v));
      o.t_star = static_cast<int>(
          get_int(m, "t_star", o.t_star, 0, "/montecarlo", v));
      if (m.contains("functional")) {
        if (!m["functional"].is_string()) {
          v.fail("/montecarlo/functional", "expected a string");
        } else {
          try {
            o.functional = functional_from_name(m["functional"].get<std::string>());
          } catch (const Error& e) {
            v.fail("/montecarlo/functional", e.what());
          }
        }
      }
      if (m.contains("k_grid")) {
        if (!m["k_grid"].is_array() || m["k_grid"].empty()) {
          v.fail("/montecarlo/k_grid", "expected a nonempty array");
        } else {
          o.k_grid.clear();
          for (std::size_t k = 0; k < m["k_grid"].size(); ++k) {
            if (!m["k_grid"][k].is_number() ||
                !(m["k_grid"][k].get<double>() > 0.0)) {
              v.fail("/montecarlo/k_grid/" + std::to_string(k),
                     "must be a positive number");
            } else {
              o.k_grid.push_back(m["k_grid"][k].get<double>());
            }
          }
        }
      }
      o.tail_threshold =
          get_positive(m, "tail_threshold", o.tail_threshold, "/montecarlo", v);
      o.divergence_cutoff = get_positive(m, "divergence_cutoff",
                                         o.divergence_cutoff, "/montecarlo", v);
      o.time_grid_stride = static_cast<int>(get_int(
          m, "time_grid_stride", o.time_grid_stride, 0, "/montecarlo", v));
      o.dump_paths = static_cast<int>(
          get_int(m, "dump_paths", o.dump_paths, 0, "/montecarlo", v));
      if (m.contains("initial")) {
        mc.initial = parse_matrix(m["initial"], "/montecarlo/initial", v);
      }
      if (m.contains("initial_b")) {
        mc.initial_b = parse_matrix(m["initial_b"], "/montecarlo/initial_b", v);
      }
      mc.with_filter =
          get_bool(m, "with_filter", mc.with_filter, "/montecarlo", v);
      mc.filter_runs = static_cast<int>(
          get_int(m, "filter_runs", mc.filter_runs, 1, "/montecarlo", v));
    }
  }

  v.throw_if_failed();
  if (!network || !schedule) {
    throw ConfigError("config validation reached an inconsistent state");
  }

  // Cross checks needing the built pieces.
  Validator v2;
  for (const auto& [id, p] : schedule->atoms()) {
    (void)p;
    if (id >= network->subset_count()) {
      v2.fail("/schedule",
              "atom " + subset_to_string(id) + " references sensors beyond " +
                  std::to_string(network->sensor_count()));
    }
  }
  if (!sp.anchor_sensors.empty()) {
    try {
      const SubsetId anchor = subset_from_sensors(sp.anchor_sensors);
      if (anchor == 0 || anchor >= network->subset_count()) {
        v2.fail("/support/anchor", "not a valid non-empty subset");
      }
    } catch (const Error& e) {
      v2.fail("/support/anchor", e.what());
    }
  }
  const int dim = network->state_dim();
  if (mc.initial && (mc.initial->rows() != dim || mc.initial->cols() != dim)) {
    v2.fail("/montecarlo/initial", "dimension mismatch with the network");
  }
  if (mc.initial_b &&
      (mc.initial_b->rows() != dim || mc.initial_b->cols() != dim)) {
    v2.fail("/montecarlo/initial_b", "dimension mismatch with the network");
  }
  if (mc.options.t_star > mc.options.horizon) {
    v2.fail("/montecarlo/t_star", "must be <= horizon");
  }
  if (mc.options.burn_in >= mc.options.horizon) {
    v2.fail("/montecarlo/burn_in", "must be below horizon");
  }
  v2.throw_if_failed();

  mc.options.seed = seed;
  return ExperimentConfig(std::move(*network), std::move(*schedule), seed,
                          fp, sp, std::move(mc));
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path);
  }
  json root;
  try {
    in >> root;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config_json(root);
}

nlohmann::json ExperimentConfig::resolved() const {
  json root;
  json net;
  net["A"] = matrix_to_json(network_.A());
  net["Q"] = matrix_to_json(network_.Q().mat());
  net["P0"] = matrix_to_json(network_.P0().mat());
  json sensors = json::array();
  for (int n = 0; n < network_.sensor_count(); ++n) {
    json s;
    s["C"] = matrix_to_json(network_.sensor(n).C);
    s["R"] = matrix_to_json(network_.sensor(n).R.mat());
    sensors.push_back(std::move(s));
  }
  net["sensors"] = std::move(sensors);
  root["network"] = std::move(net);

  json sched = json::array();
  for (const auto& [id, p] : schedule_.atoms()) {
    json e;
    e["sensors"] = subset_sensors(id);
    e["prob"] = p;
    sched.push_back(std::move(e));
  }
  root["schedule"] = std::move(sched);

  root["seed"] = seed_;
  root["fixed_points"] = {{"tol", fixed_points_.tol},
                          {"max_iter", fixed_points_.max_iter}};
  root["support"] = {{"anchor", support_.anchor_sensors},
                     {"depth", support_.depth},
                     {"node_cap", support_.node_cap},
                     {"delta", support_.delta},
                     {"full_alphabet", support_.full_alphabet}};
  json mc;
  mc["paths"] = montecarlo_.options.paths;
  mc["horizon"] = montecarlo_.options.horizon;
  mc["burn_in"] = montecarlo_.options.burn_in;
  mc["t_star"] = montecarlo_.options.t_star;
  mc["functional"] = functional_name(montecarlo_.options.functional);
  mc["k_grid"] = montecarlo_.options.k_grid;
  mc["tail_threshold"] = montecarlo_.options.tail_threshold;
  mc["divergence_cutoff"] = montecarlo_.options.divergence_cutoff;
  mc["time_grid_stride"] = montecarlo_.options.time_grid_stride;
  mc["dump_paths"] = montecarlo_.options.dump_paths;
  if (montecarlo_.initial) mc["initial"] = matrix_to_json(*montecarlo_.initial);
  if (montecarlo_.initial_b) {
    mc["initial_b"] = matrix_to_json(*montecarlo_.initial_b);
  }
  mc["with_filter"] = montecarlo_.with_filter;
  mc["filter_runs"] = montecarlo_.filter_runs;
  root["montecarlo"] = std::move(mc);
  return root;
}

}  // namespace rare
