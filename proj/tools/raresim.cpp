// raresim: simulate and analyze minimum-variance filtering of a linear
// system observed by a sensor network over a randomized transmission
// schedule. Subcommands: analyze | fixed-points | support | montecarlo |
// demo. Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 violated
// precondition.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rare/analysis.hpp"
#include "rare/config.hpp"
#include "rare/mckalman.hpp"
#include "rare/support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rare;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

// Upper triangle, column-major: for column j, rows 0..j.
void csv_matrix_header(std::ostream& os, int dim, const std::string& prefix) {
  for (int j = 0; j < dim; ++j) {
    for (int i = 0; i <= j; ++i) {
      os << "," << prefix << "_" << i << "_" << j;
    }
  }
}

void csv_matrix_row(std::ostream& os, const Eigen::MatrixXd& m) {
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = 0; i <= j; ++i) {
      os << "," << fmt_double(m(i, j));
    }
  }
}

std::string word_string(const std::vector<SubsetId>& word) {
  std::ostringstream os;
  for (std::size_t k = 0; k < word.size(); ++k) {
    if (k) os << ".";
    os << word[k];
  }
  return os.str();
}

/// Collects artifacts and lands them atomically (temp file, then rename).
class OutputDir {
 public:
  OutputDir(fs::path dir, bool force) : dir_(std::move(dir)) {
    if (fs::exists(dir_) && !fs::is_empty(dir_) && !force) {
      throw ConfigError("output directory " + dir_.string() +
                        " exists and is not empty (use --force)");
    }
    fs::create_directories(dir_);
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path final_path = dir_ / name;
    const fs::path tmp_path = dir_ / (name + ".tmp");
    {
      std::ofstream out(tmp_path, std::ios::binary);
      if (!out) throw NumericError("cannot write " + tmp_path.string());
      out << content;
    }
    fs::rename(tmp_path, final_path);
    manifest_.push_back({{"file", name}, {"fnv1a64", hex64(fnv1a64(content))}});
  }

  json manifest() const { return manifest_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  json manifest_ = json::array();
};

json detectability_json(const SensorNetwork& net, const Schedule& schedule) {
  json atoms = json::array();
  for (const auto& rep : atom_reports(net, schedule)) {
    json offending = json::array();
    for (const auto& l : rep.offending) {
      offending.push_back({{"re", l.real()}, {"im", l.imag()}});
    }
    atoms.push_back({{"sensors", subset_sensors(rep.subset)},
                     {"prob", schedule.prob(rep.subset)},
                     {"detectable", rep.detectable},
                     {"offending_eigenvalues", offending}});
  }
  return atoms;
}

json analyze_json(const ExperimentConfig& cfg) {
  const SensorNetwork& net = cfg.network();
  const Schedule& schedule = cfg.schedule();
  const AssumptionReport e1 = validate_assumption_e1(net);
  json jd = json::array();
  for (SubsetId id : detectable_subsets(net, schedule)) {
    jd.push_back(subset_sensors(id));
  }
  return json{
      {"atoms", detectability_json(net, schedule)},
      {"detectable_atoms", jd},
      {"weakly_detectable", is_weakly_detectable(net, schedule)},
      {"assumptions",
       {{"stabilizable", e1.stabilizable},
        {"a_unstable", e1.a_unstable},
        {"q_positive_definite", e1.q_positive_definite},
        {"all_satisfied", e1.all()},
        {"spectral_radius", spectral_radius(net.A())}}}};
}

json fixed_points_json(const ExperimentConfig& cfg) {
  const SensorNetwork& net = cfg.network();
  json out;
  json points = json::array();
  json skipped = json::array();
  for (const auto& [id, prob] : cfg.schedule().atoms()) {
    (void)prob;
    if (id == 0) continue;
    if (!is_detectable(net.stacked(id).C, net.A()).detectable) {
      skipped.push_back({{"sensors", subset_sensors(id)},
                         {"reason", "pair not detectable"}});
      continue;
    }
    const FixedPoint fp = dare_fixed_point(net, id, cfg.fixed_points().tol,
                                           cfg.fixed_points().max_iter);
    points.push_back({{"sensors", subset_sensors(id)},
                      {"p_star", matrix_to_json(fp.value.mat())},
                      {"residual", fp.residual},
                      {"iterations", fp.iterations}});
  }
  out["fixed_points"] = std::move(points);
  out["skipped_atoms"] = std::move(skipped);
  return out;
}

SubsetId resolve_anchor(const ExperimentConfig& cfg) {
  if (!cfg.support().anchor_sensors.empty()) {
    return subset_from_sensors(cfg.support().anchor_sensors);
  }
  const auto jd = detectable_subsets(cfg.network(), cfg.schedule());
  if (jd.empty()) {
    throw PreconditionError(
        "no detectable atom in the schedule; cannot anchor the support "
        "enumeration");
  }
  return jd.front();
}

std::string support_csv(const SupportSet& s) {
  std::ostringstream os;
  const int dim = s.points.front().value.dim();
  os << "index,level,word";
  csv_matrix_header(os, dim, "p");
  os << "\r\n";
  for (std::size_t k = 0; k < s.points.size(); ++k) {
    os << k << "," << s.points[k].level << "," << word_string(s.points[k].word);
    csv_matrix_row(os, s.points[k].value.mat());
    os << "\r\n";
  }
  return os.str();
}

json support_summary_json(const SupportSet& s) {
  json levels = json::array();
  for (std::size_t k = 0; k < s.level_counts.size(); ++k) {
    levels.push_back({{"depth", k}, {"points", s.level_counts[k]}});
  }
  json alphabet = json::array();
  for (SubsetId id : s.alphabet) alphabet.push_back(subset_sensors(id));
  return json{{"anchor", subset_sensors(s.anchor)},
              {"depth", s.depth},
              {"delta", s.delta},
              {"points", s.points.size()},
              {"truncated", s.truncated},
              {"cumulative_points_per_depth", levels},
              {"alphabet", alphabet}};
}

std::string samples_csv(const EmpiricalDistribution& d) {
  std::ostringstream os;
  os << "rank," << functional_name(d.tag) << "\r\n";
  for (std::size_t k = 0; k < d.samples.size(); ++k) {
    os << k << "," << fmt_double(d.samples[k]) << "\r\n";
  }
  return os.str();
}

std::string dumped_csv(const McResult& r, int dim) {
  std::ostringstream os;
  os << "path,t,subset";
  csv_matrix_header(os, dim, "p");
  os << "\r\n";
  for (const auto& d : r.dumped) {
    os << d.path << "," << d.t << "," << word_string({d.subset});
    csv_matrix_row(os, d.value.mat());
    os << "\r\n";
  }
  return os.str();
}

json tail_json(const TailTable& t) {
  json rows = json::array();
  for (std::size_t k = 0; k < t.k_grid.size(); ++k) {
    rows.push_back({{"K", t.k_grid[k]}, {"sup_fraction", t.sup_fraction[k]}});
  }
  return json{{"table", rows},
              {"median_final_quarter", t.median_final_quarter},
              {"verdict", t.verdict}};
}

json moments_json(const MomentCurve& m) {
  json rows = json::array();
  for (std::size_t k = 0; k < m.times.size(); ++k) {
    rows.push_back({{"t", m.times[k]},
                    {"moment", m.moment[k]},
                    {"bootstrap_se", m.bootstrap_se[k]}});
  }
  return json{{"order", m.order},
              {"curve", rows},
              {"heavy_tail_caveat", m.heavy_tail_caveat}};
}

json mc_result_json(const McResult& r) {
  return json{{"paths", r.paths},
              {"horizon", r.horizon},
              {"t_star", r.t_star},
              {"tail", tail_json(r.tail)},
              {"moments", moments_json(r.moments)},
              {"min_floor_margin", r.min_floor_margin},
              {"clipped_eigenvalues", r.clips.count},
              {"clamped_steps", r.clamped_steps}};
}

// Command-line overrides for the montecarlo and support subcommands; a
// value < 0 (or empty string) means "keep the config value".
struct McFlagOverrides {
  int paths = -1;
  int horizon = -1;
  int burn_in = -1;
  int t_star = -1;
  int dump_paths = -1;
  std::string functional;
};

json run_montecarlo(const ExperimentConfig& cfg, OutputDir& out,
                    const McFlagOverrides& flags) {
  const MonteCarloParams& mc = cfg.montecarlo();
  McOptions opt = mc.options;
  opt.seed = cfg.seed();
  if (flags.paths >= 0) opt.paths = flags.paths;
  if (flags.horizon >= 0) opt.horizon = flags.horizon;
  if (flags.burn_in >= 0) opt.burn_in = flags.burn_in;
  if (flags.t_star >= 0) opt.t_star = flags.t_star;
  if (flags.dump_paths >= 0) opt.dump_paths = flags.dump_paths;
  if (!flags.functional.empty()) {
    opt.functional = functional_from_name(flags.functional);
  }
  const CovMatrix p0 =
      mc.initial ? CovMatrix(*mc.initial) : cfg.network().P0();

  json summary;
  if (mc.initial_b) {
    const CovMatrix p0b = CovMatrix(*mc.initial_b);
    const TwoIcResult r = two_initial_condition_study(
        cfg.network(), cfg.schedule(), p0, p0b, opt);
    out.write("samples_a.csv", samples_csv(r.a.at_t_star));
    out.write("samples_b.csv", samples_csv(r.b.at_t_star));
    if (opt.dump_paths > 0) {
      out.write("trajectories_a.csv", dumped_csv(r.a, cfg.network().state_dim()));
    }
    summary["two_initial_conditions"] = {
        {"ks_at_t_star", r.ks_at_t_star},
        {"ks_at_horizon", r.ks_at_horizon},
        {"initial_a", matrix_to_json(p0.mat())},
        {"initial_b", matrix_to_json(p0b.mat())}};
    summary["run_a"] = mc_result_json(r.a);
    summary["run_b"] = mc_result_json(r.b);
  } else {
    const McResult r =
        simulate_covariance_paths(cfg.network(), cfg.schedule(), p0, opt);
    out.write("samples.csv", samples_csv(r.at_t_star));
    if (opt.dump_paths > 0) {
      out.write("trajectories.csv", dumped_csv(r, cfg.network().state_dim()));
    }
    summary["run"] = mc_result_json(r);
  }
  if (mc.with_filter) {
    const FilterBatchResult fb = filter_consistency_batch(
        cfg.network(), cfg.schedule(), opt.horizon, mc.filter_runs,
        cfg.seed());
    summary["filter_consistency"] = {
        {"runs", fb.runs},
        {"max_deviation", fb.max_deviation},
        {"min_floor_margin", fb.min_floor_margin}};
  }
  return summary;
}

int run(int argc, char** argv) {
  CLI::App app{
      "Random-schedule networked Kalman filtering: Riccati recursions, "
      "detectability analysis, invariant-support enumeration and Monte "
      "Carlo ergodicity diagnostics"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  bool force = false;

  app.add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  app.add_option("--out", out_dir, "output directory (default out-<cmd>)");
  app.add_option("--seed", seed, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_option("--threads", threads, "worker threads (0 = library default)");
  app.add_flag("--force", force, "write into a non-empty output directory");

  auto* cmd_analyze = app.add_subcommand(
      "analyze", "detectability reports, J(D), assumption checks");
  auto* cmd_fp = app.add_subcommand(
      "fixed-points", "fixed point of every detectable schedule atom");
  auto* cmd_support = app.add_subcommand(
      "support", "truncated enumeration of the invariant-measure support");
  auto* cmd_mc = app.add_subcommand(
      "montecarlo", "covariance Monte Carlo with stability diagnostics");
  auto* cmd_demo = app.add_subcommand(
      "demo", "analyze + fixed-points + support + montecarlo in one run");

  McFlagOverrides mc_flags;
  cmd_mc->add_option("--paths", mc_flags.paths, "number of sample paths");
  cmd_mc->add_option("--horizon", mc_flags.horizon, "steps per path");
  cmd_mc->add_option("--burn-in", mc_flags.burn_in, "steps dropped from pooling");
  cmd_mc->add_option("--t-star", mc_flags.t_star,
                     "fixed sampling time (0 = horizon)");
  cmd_mc->add_option("--functional", mc_flags.functional,
                     "trace | spectral-norm | log-det");
  cmd_mc->add_option("--dump-paths", mc_flags.dump_paths,
                     "write grid covariances for the first k paths");

  bool full_alphabet = false;
  int support_depth = -1;
  cmd_support->add_flag("--full-alphabet", full_alphabet,
                        "compose over every subset id, not only schedule "
                        "atoms");
  cmd_support->add_option("--depth", support_depth, "enumeration depth");

  CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  ExperimentConfig cfg = parse_config(config_path);
  if (seed_set) cfg.override_seed(seed);

  const std::string subcommand = app.get_subcommands().front()->get_name();
  if (out_dir.empty()) out_dir = "out-" + subcommand;
  OutputDir out{fs::path(out_dir), force};

  json summary;
  summary["subcommand"] = subcommand;
  summary["seed"] = cfg.seed();

  if (cmd_analyze->parsed()) {
    summary["analysis"] = analyze_json(cfg);
    std::cout << summary["analysis"].dump(2) << "\n";
  } else if (cmd_fp->parsed()) {
    summary["fixed_points"] = fixed_points_json(cfg);
    std::cout << summary["fixed_points"].dump(2) << "\n";
  } else if (cmd_support->parsed()) {
    SupportOptions sopt;
    sopt.depth = support_depth >= 0 ? support_depth : cfg.support().depth;
    sopt.node_cap = cfg.support().node_cap;
    sopt.delta = cfg.support().delta;
    sopt.full_alphabet = full_alphabet || cfg.support().full_alphabet;
    const SupportSet s = enumerate_support(cfg.network(), cfg.schedule(),
                                           resolve_anchor(cfg), sopt);
    out.write("points.csv", support_csv(s));
    summary["support"] = support_summary_json(s);
    std::cout << summary["support"].dump(2) << "\n";
  } else if (cmd_mc->parsed()) {
    summary["montecarlo"] = run_montecarlo(cfg, out, mc_flags);
    std::cout << summary["montecarlo"].dump(2) << "\n";
  } else if (cmd_demo->parsed()) {
    summary["analysis"] = analyze_json(cfg);
    summary["fixed_points"] = fixed_points_json(cfg);
    SupportOptions sopt;
    sopt.depth = cfg.support().depth;
    sopt.node_cap = cfg.support().node_cap;
    sopt.delta = cfg.support().delta;
    sopt.full_alphabet = cfg.support().full_alphabet;
    const SupportSet s = enumerate_support(cfg.network(), cfg.schedule(),
                                           resolve_anchor(cfg), sopt);
    out.write("points.csv", support_csv(s));
    summary["support"] = support_summary_json(s);
    summary["montecarlo"] = run_montecarlo(cfg, out, mc_flags);

    std::cout << "weakly detectable: "
              << (summary["analysis"]["weakly_detectable"].get<bool>()
                      ? "yes"
                      : "no")
              << "\n";
    std::cout << "detectable atoms: "
              << summary["analysis"]["detectable_atoms"].dump() << "\n";
    std::cout << "support points at depth " << s.depth << ": "
              << s.points.size() << (s.truncated ? " (truncated)" : "")
              << "\n";
    const json& mc = summary["montecarlo"];
    if (mc.contains("two_initial_conditions")) {
      std::cout << "KS(two initial conditions) at t*: "
                << mc["two_initial_conditions"]["ks_at_t_star"].get<double>()
                << "\n";
      std::cout << "verdict: "
                << mc["run_a"]["tail"]["verdict"].get<std::string>() << "\n";
    } else {
      std::cout << "verdict: "
                << mc["run"]["tail"]["verdict"].get<std::string>() << "\n";
    }
  }

  out.write("resolved_config.json", cfg.resolved().dump(2) + "\n");
  summary["artifacts"] = out.manifest();
  const std::string summary_text = summary.dump(2) + "\n";
  {
    // summary.json lists every other artifact with its content hash; it is
    // written last and not self-referential
    std::ofstream f(out.dir() / "summary.json.tmp", std::ios::binary);
    f << summary_text;
  }
  fs::rename(out.dir() / "summary.json.tmp", out.dir() / "summary.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    json err{{"error",
              {{"type", e.exit_code() == 2   ? "config"
                        : e.exit_code() == 4 ? "precondition"
                                             : "numeric"},
               {"message", e.what()},
               {"exit_code", e.exit_code()}}}};
    std::cerr << err.dump() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    json err{{"error",
              {{"type", "internal"}, {"message", e.what()}, {"exit_code", 1}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
