// Experiment front end: convergence studies, long-time energy runs, single
// trajectories, tableau inspection, and structure-preservation checks.

#include "CLI11.hpp"
#include "json.hpp"

#include "svi/svi.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using json = nlohmann::ordered_json;
using namespace svi;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitExperiment = 3;

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(12) << v;
  return out.str();
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("SVI_SEED")) return std::strtoull(env, nullptr, 10);
  return 42;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream stream(csv);
  std::string item;
  while (std::getline(stream, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Resolved experiment configuration; echoed into every output for
/// provenance. Flags override file values which override defaults.
struct Config {
  std::string experiment;
  std::string system = "kubo";
  double beta = 0.1;
  double gamma = 0.1;
  double sigma = 0.1;
  std::vector<std::string> schemes;
  std::vector<double> q0{0.0};
  std::vector<double> p0{1.0};
  double T = 3.2;
  double dt = 0.25;
  std::vector<double> dt_levels;
  int paths = 1000;
  std::uint64_t seed = default_seed();
  std::string out;
  int threads = 1;
  std::string reference = "auto";  // auto | exact | taylor32
  int ref_refine = 32;
  std::optional<double> truncation;

  json to_json() const {
    json j;
    j["experiment"] = experiment;
    j["system"] = system;
    j["beta"] = beta;
    j["gamma"] = gamma;
    j["sigma"] = sigma;
    j["schemes"] = schemes;
    j["q0"] = q0;
    j["p0"] = p0;
    j["T"] = T;
    j["dt"] = dt;
    j["dt_levels"] = dt_levels;
    j["paths"] = paths;
    j["seed"] = seed;
    j["threads"] = threads;
    j["reference"] = reference;
    j["ref_refine"] = ref_refine;
    if (truncation)
      j["truncation"] = *truncation;
    else
      j["truncation"] = nullptr;
    return j;
  }

  void merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open config file " + path);
    json j = json::parse(in);
    if (j.contains("system")) system = j["system"].get<std::string>();
    if (j.contains("beta")) beta = j["beta"].get<double>();
    if (j.contains("gamma")) gamma = j["gamma"].get<double>();
    if (j.contains("sigma")) sigma = j["sigma"].get<double>();
    if (j.contains("schemes")) schemes = j["schemes"].get<std::vector<std::string>>();
    if (j.contains("q0")) q0 = j["q0"].get<std::vector<double>>();
    if (j.contains("p0")) p0 = j["p0"].get<std::vector<double>>();
    if (j.contains("T")) T = j["T"].get<double>();
    if (j.contains("dt")) dt = j["dt"].get<double>();
    if (j.contains("dt_levels")) dt_levels = j["dt_levels"].get<std::vector<double>>();
    if (j.contains("paths")) paths = j["paths"].get<int>();
    if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();
    if (j.contains("out")) out = j["out"].get<std::string>();
    if (j.contains("threads")) threads = j["threads"].get<int>();
    if (j.contains("reference")) reference = j["reference"].get<std::string>();
    if (j.contains("ref_refine")) ref_refine = j["ref_refine"].get<int>();
    if (j.contains("truncation") && !j["truncation"].is_null())
      truncation = j["truncation"].get<double>();
  }

  Systemd make_system() const {
    SystemParams<double> params;
    params.beta = beta;
    params.gamma = gamma;
    params.sigma = sigma;
    return builtin_system<double>(system, params);
  }

  PhaseStated initial_state() const {
    Eigen::Map<const Eigen::VectorXd> q(q0.data(), static_cast<Eigen::Index>(q0.size()));
    Eigen::Map<const Eigen::VectorXd> p(p0.data(), static_cast<Eigen::Index>(p0.size()));
    return PhaseStated(q, p);
  }

  SolverConfig solver() const {
    SolverConfig cfg;
    cfg.truncation_retry_bound = truncation;
    return cfg;
  }
};

/// Buffered output file: nothing touches the filesystem until success, so a
/// failed run leaves no partial artifacts.
class OutputFile {
 public:
  OutputFile(std::string path, const Config& cfg) : path_(std::move(path)) {
    body_ << "# config: " << cfg.to_json().dump() << "\n";
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    body_ << "# generated: " << now << "\n";
  }

  std::ostringstream& stream() { return body_; }

  void commit() const {
    if (path_.empty()) {
      std::cout << body_.str();
      return;
    }
    std::ofstream out(path_);
    if (!out) throw std::runtime_error("cannot write " + path_);
    out << body_.str();
  }

 private:
  std::string path_;
  std::ostringstream body_;
};

void write_json_summary(const std::string& csv_path, const json& summary) {
  if (csv_path.empty()) return;
  std::ofstream out(csv_path + ".json");
  if (!out) throw std::runtime_error("cannot write " + csv_path + ".json");
  out << summary.dump(2) << "\n";
}

int cmd_convergence(const Config& cfg) {
  if (cfg.schemes.empty()) throw ArgumentError("convergence: need at least one scheme");
  if (cfg.dt_levels.empty()) throw ArgumentError("convergence: need --dt-levels");
  const auto sys = cfg.make_system();
  std::vector<Stepper> steppers;
  for (const auto& name : cfg.schemes) steppers.push_back(Stepper::parse(name));

  ReferenceSpec ref;
  if (cfg.reference == "exact" || (cfg.reference == "auto" && cfg.system == "kubo")) {
    ref.kind = ReferenceSpec::Kind::exact_kubo;
    ref.kubo_beta = cfg.beta;
  } else if (cfg.reference == "taylor32" || cfg.reference == "auto") {
    ref.kind = ReferenceSpec::Kind::fine_taylor32;
    ref.refine = cfg.ref_refine;
  } else {
    throw ArgumentError("convergence: unknown reference '" + cfg.reference + "'");
  }

  const auto results = ms_convergence_multi<double>(steppers, sys, cfg.initial_state(), cfg.T,
                                                    cfg.dt_levels, cfg.paths, cfg.seed, ref,
                                                    cfg.solver(), cfg.threads);

  OutputFile file(cfg.out, cfg);
  file.stream() << "scheme,dt,ms_error,stderr,n_paths\n";
  json summary;
  summary["config"] = cfg.to_json();
  summary["results"] = json::array();
  for (const auto& r : results) {
    for (std::size_t l = 0; l < r.dt_levels.size(); ++l)
      file.stream() << r.stepper << "," << format_double(r.dt_levels[l]) << ","
                    << format_double(r.ms_errors[l]) << "," << format_double(r.std_errors[l])
                    << "," << r.n_paths << "\n";
    json entry;
    entry["scheme"] = r.stepper;
    entry["fitted_order"] = r.fitted_order;
    entry["order_stderr"] = r.order_std_error;
    entry["dt_levels"] = r.dt_levels;
    entry["ms_errors"] = r.ms_errors;
    entry["stderrs"] = r.std_errors;
    entry["n_dropped"] = r.n_dropped;
    summary["results"].push_back(entry);
    std::cerr << r.stepper << ": fitted order " << format_double(r.fitted_order) << " +- "
              << format_double(r.order_std_error) << " (" << r.n_dropped << " dropped)\n";
  }
  file.commit();
  write_json_summary(cfg.out, summary);
  return kExitOk;
}

int cmd_energy(const Config& cfg) {
  if (cfg.schemes.size() != 1) throw ArgumentError("energy: need exactly one scheme");
  const auto sys = cfg.make_system();
  const auto stepper = Stepper::parse(cfg.schemes.front());
  const auto result = energy_experiment(stepper, sys, cfg.initial_state(), cfg.T, cfg.dt,
                                        cfg.paths, cfg.seed, cfg.solver(), cfg.threads);
  const auto fit = fit_linear(result.times, result.mean_H);

  OutputFile file(cfg.out, cfg);
  file.stream() << "scheme,t,mean_H,stderr\n";
  for (std::size_t k = 0; k < result.times.size(); ++k)
    file.stream() << result.stepper << "," << format_double(result.times[k]) << ","
                  << format_double(result.mean_H[k]) << ","
                  << format_double(result.std_errors[k]) << "\n";
  file.commit();

  json summary;
  summary["config"] = cfg.to_json();
  summary["scheme"] = result.stepper;
  summary["slope"] = fit.slope;
  summary["slope_stderr"] = fit.std_error;
  summary["n_dropped"] = result.n_dropped;
  write_json_summary(cfg.out, summary);
  std::cerr << result.stepper << ": mean-energy slope " << format_double(fit.slope) << " +- "
            << format_double(fit.std_error) << "\n";
  return kExitOk;
}

int cmd_trajectory(const Config& cfg, const std::string& save_path_file,
                   const std::string& load_path_file) {
  if (cfg.schemes.size() != 1) throw ArgumentError("trajectory: need exactly one scheme");
  const auto sys = cfg.make_system();
  const auto stepper = Stepper::parse(cfg.schemes.front());
  const auto steps = static_cast<Eigen::Index>(std::llround(cfg.T / cfg.dt));
  if (steps < 1 || std::abs(steps * cfg.dt - cfg.T) > 1e-9 * cfg.T)
    throw ArgumentError("trajectory: dt must divide T");

  WienerPathd path = load_path_file.empty()
                         ? sample_path<double>(cfg.seed, steps, cfg.dt, sys.channels,
                                               stepper.needs_dz())
                         : load_path(load_path_file);
  if (path.steps() != steps || path.channels() != sys.channels)
    throw ArgumentError("trajectory: loaded path does not match T/dt/channels");
  if (!save_path_file.empty()) save_path(path, save_path_file);

  const auto traj = run_trajectory(stepper, sys, cfg.initial_state(), path, cfg.solver());
  const bool planar = sys.dim == 2;

  OutputFile file(cfg.out, cfg);
  file.stream() << "t";
  for (int i = 0; i < sys.dim; ++i) file.stream() << ",q" << i;
  for (int i = 0; i < sys.dim; ++i) file.stream() << ",p" << i;
  file.stream() << ",H";
  if (planar) file.stream() << ",J_rot";
  file.stream() << "\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    file.stream() << format_double(static_cast<double>(k) * cfg.dt);
    for (int i = 0; i < sys.dim; ++i) file.stream() << "," << format_double(traj[k].q[i]);
    for (int i = 0; i < sys.dim; ++i) file.stream() << "," << format_double(traj[k].p[i]);
    file.stream() << "," << format_double(sys.H(traj[k].q, traj[k].p));
    if (planar)
      file.stream() << ","
                    << format_double(traj[k].p[1] * traj[k].q[0] - traj[k].p[0] * traj[k].q[1]);
    file.stream() << "\n";
  }
  file.commit();
  return kExitOk;
}

int cmd_tableau(const Config& cfg) {
  if (cfg.schemes.size() != 1) throw ArgumentError("tableau: need exactly one scheme");
  const SchemeId id = parse_scheme(cfg.schemes.front());
  const auto desc = build_scheme<double>(id);
  std::ostringstream out;
  out << to_string(id) << "\n";
  if (desc.sprk32) {
    out << to_string(*desc.sprk32);
  } else {
    const auto& g = *desc.galerkin;
    out << "  polynomial degree s = " << g.basis.degree() << "\n";
    out << "  drift rule: " << g.drift_rule.name << ", diffusion rule: " << g.diffusion_rule.name
        << "\n";
    try {
      out << to_string(galerkin_to_sprk(g));
    } catch (const ConfigError&) {
      out << "  (no SPRK tableau: the scheme has r != s or split node sets)\n";
    }
  }
  if (cfg.out.empty()) {
    std::cout << out.str();
  } else {
    std::ofstream file(cfg.out);
    if (!file) throw std::runtime_error("cannot write " + cfg.out);
    file << out.str();
  }
  return kExitOk;
}

int cmd_check(const Config& cfg) {
  SolverConfig tight;
  tight.tol = 1e-13;
  std::mt19937_64 gen(cfg.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  OutputFile file(cfg.out, cfg);
  file.stream() << "scheme,system,symplectic_defect,momentum_drift\n";

  std::vector<Stepper> steppers;
  for (SchemeId id : all_scheme_ids()) steppers.push_back(Stepper::make(id));
  steppers.push_back(Stepper{Stepper::Kind::milstein, SchemeId::P1N1Q2Gau});

  for (const auto& stepper : steppers) {
    for (const char* system_name : {"kubo", "synchrotron"}) {
      SystemParams<double> params;
      params.beta = cfg.beta;
      const auto sys = builtin_system<double>(system_name, params);
      const bool scheme_kind = stepper.kind == Stepper::Kind::scheme;
      if (scheme_kind) {
        const auto caps = build_scheme<double>(stepper.scheme).caps;
        if (caps.requires_h_independent_of_p && !sys.h_independent_of_p) continue;
      }
      double worst = 0;
      for (int draw = 0; draw < 10; ++draw) {
        const PhaseStated z(uni(gen), uni(gen));
        const double dt = 0.02 + 0.23 * std::abs(uni(gen));
        const double w = 3.0 * std::sqrt(dt) * uni(gen);
        const Eigen::VectorXd dw = Eigen::VectorXd::Constant(1, w);
        const IncrementPaird inc = increment_from_normals(w / std::sqrt(dt), uni(gen), dt);
        const std::function<PhaseStated(const PhaseStated&)> map =
            [&](const PhaseStated& z_in) -> PhaseStated {
          if (stepper.kind == Stepper::Kind::milstein)
            return milstein_step(sys, z_in, dt, dw);
          std::optional<IncrementPaird> pair;
          if (stepper.scheme == SchemeId::SPRK32Milstein) pair = inc;
          return fast_step(stepper.scheme, sys, z_in, dt, dw, tight, pair).state;
        };
        worst = std::max(worst, symplectic_defect<double>(map, z).defect);
      }

      // Momentum drift measured on the rotation-invariant planar system.
      double drift = std::nan("");
      if (scheme_kind) {
        SystemParams<double> rot_params;
        rot_params.sigma = cfg.sigma;
        const auto rot = builtin_system<double>("planar-rotational", rot_params);
        Eigen::VectorXd q0(2), p0(2);
        q0 << 0.8, -0.1;
        p0 << 0.2, 0.9;
        const auto path = sample_path<double>(cfg.seed + 1, 100, 0.05, 1,
                                              stepper.needs_dz());
        const auto traj = run_trajectory(stepper, rot, PhaseStated(q0, p0), path, tight);
        const auto series = momentum_series(traj, LinearGenerator<double>::planar_rotation());
        drift = 0;
        for (double j : series) drift = std::max(drift, std::abs(j - series.front()));
      }

      file.stream() << stepper.name() << "," << system_name << "," << format_double(worst) << ","
                    << format_double(drift) << "\n";
    }
  }
  file.commit();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic variational integrators for Hamiltonian systems"};
  app.require_subcommand(1);

  Config cfg;
  std::string config_file, schemes_csv, levels_csv, save_path_file, load_path_file;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_file, "JSON config file (flags override file values)");
    cmd->add_option("--system", cfg.system, "kubo | synchrotron | anharmonic | planar-rotational");
    cmd->add_option("--beta", cfg.beta, "noise intensity");
    cmd->add_option("--gamma", cfg.gamma, "anharmonic stiffness");
    cmd->add_option("--sigma", cfg.sigma, "planar-rotational noise coupling");
    cmd->add_option("--scheme,--schemes", schemes_csv, "comma-separated scheme ids");
    cmd->add_option("--q0", cfg.q0, "initial position (repeat for higher dimension)");
    cmd->add_option("--p0", cfg.p0, "initial momentum");
    cmd->add_option("--T", cfg.T, "final time");
    cmd->add_option("--seed", cfg.seed, "master seed (env SVI_SEED overrides the default)");
    cmd->add_option("--out", cfg.out, "output CSV path (stdout when omitted)");
    cmd->add_option("--threads", cfg.threads, "worker threads for Monte Carlo trials");
    cmd->add_option("--truncate", cfg.truncation,
                    "retry failed solves with increments clamped to this bound");
    return cmd;
  };

  auto* conv = add_common(app.add_subcommand("convergence", "mean-square error vs step size"));
  conv->add_option("--dt-levels", levels_csv, "comma-separated step sizes, ascending");
  conv->add_option("--paths", cfg.paths, "Monte Carlo sample paths");
  conv->add_option("--reference", cfg.reference, "auto | exact | taylor32");
  conv->add_option("--ref-refine", cfg.ref_refine, "reference refinement below the finest level");

  auto* energy = add_common(app.add_subcommand("energy", "mean Hamiltonian over time"));
  energy->add_option("--dt", cfg.dt, "step size");
  energy->add_option("--paths", cfg.paths, "Monte Carlo sample paths");

  auto* traj = add_common(app.add_subcommand("trajectory", "single path, full state series"));
  traj->add_option("--dt", cfg.dt, "step size");
  traj->add_option("--save-path", save_path_file, "dump the Wiener path to this binary file");
  traj->add_option("--load-path", load_path_file, "reuse a dumped Wiener path");

  auto* tableau = add_common(app.add_subcommand("tableau", "print scheme coefficients"));
  auto* check = add_common(
      app.add_subcommand("check", "symplectic-defect and momentum-drift table"));
  (void)tableau;
  (void)check;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    // Merge order: defaults (already in cfg) < config file < explicit flags.
    // Flags were parsed directly into cfg, so re-apply the file only for
    // fields the user did not pass on the command line.
    Config file_cfg;
    if (!config_file.empty()) {
      file_cfg.merge_file(config_file);
      auto* active = app.get_subcommands().front();
      auto keep_flag = [&](const std::string& flag) {
        const auto* opt = active->get_option_no_throw(flag);
        return opt != nullptr && opt->count() > 0;
      };
      Config merged = file_cfg;
      if (keep_flag("--system")) merged.system = cfg.system;
      if (keep_flag("--beta")) merged.beta = cfg.beta;
      if (keep_flag("--gamma")) merged.gamma = cfg.gamma;
      if (keep_flag("--sigma")) merged.sigma = cfg.sigma;
      if (keep_flag("--q0")) merged.q0 = cfg.q0;
      if (keep_flag("--p0")) merged.p0 = cfg.p0;
      if (keep_flag("--T")) merged.T = cfg.T;
      if (keep_flag("--dt")) merged.dt = cfg.dt;
      if (keep_flag("--paths")) merged.paths = cfg.paths;
      if (keep_flag("--seed")) merged.seed = cfg.seed;
      if (keep_flag("--out")) merged.out = cfg.out;
      if (keep_flag("--threads")) merged.threads = cfg.threads;
      if (keep_flag("--reference")) merged.reference = cfg.reference;
      if (keep_flag("--ref-refine")) merged.ref_refine = cfg.ref_refine;
      if (keep_flag("--truncate")) merged.truncation = cfg.truncation;
      if (keep_flag("--scheme")) merged.schemes.clear();  // replaced below
      cfg = merged;
    }
    if (!schemes_csv.empty()) cfg.schemes = split_list(schemes_csv);
    if (!levels_csv.empty()) {
      cfg.dt_levels.clear();
      for (const auto& item : split_list(levels_csv)) cfg.dt_levels.push_back(std::stod(item));
    }

    if (conv->parsed()) {
      cfg.experiment = "convergence";
      return cmd_convergence(cfg);
    }
    if (energy->parsed()) {
      cfg.experiment = "energy";
      return cmd_energy(cfg);
    }
    if (traj->parsed()) {
      cfg.experiment = "trajectory";
      return cmd_trajectory(cfg, save_path_file, load_path_file);
    }
    if (app.get_subcommand("tableau")->parsed()) {
      cfg.experiment = "tableau";
      return cmd_tableau(cfg);
    }
    cfg.experiment = "check";
    return cmd_check(cfg);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ExperimentError& e) {
    std::cerr << "experiment failed: " << e.what() << "\n";
    return kExitExperiment;
  } catch (const SolveError& e) {
    std::cerr << "experiment failed: " << e.what() << "\n";
    return kExitExperiment;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
