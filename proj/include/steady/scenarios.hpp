#pragma once

// Scenario configuration and runners behind the `steady` CLI. Each runner
// returns typed rows; `write_*_csv` and the manifest helpers serialize them.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "steady/errors.hpp"
#include "steady/estimation.hpp"
#include "steady/fisher.hpp"
#include "steady/io.hpp"
#include "steady/lsq.hpp"
#include "steady/mock_hardware.hpp"

namespace steady {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kConfigVersion = 1;

enum class Scenario {
  Generate,
  Fit,
  Validate,
  Design,
  ScanPs,
  ScanSpam,
  LindbladCompare,
  DesignCompare,
  LsqDemo
};

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::Generate: return "generate";
    case Scenario::Fit: return "fit";
    case Scenario::Validate: return "validate";
    case Scenario::Design: return "design";
    case Scenario::ScanPs: return "scan_ps";
    case Scenario::ScanSpam: return "scan_spam";
    case Scenario::LindbladCompare: return "lindblad_compare";
    case Scenario::DesignCompare: return "design_compare";
    case Scenario::LsqDemo: return "lsq_demo";
  }
  return "?";
}

inline Scenario scenario_from_string(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(Scenario::LsqDemo); ++i) {
    if (to_string(static_cast<Scenario>(i)) == s) return static_cast<Scenario>(i);
  }
  throw ConfigError("unknown scenario '" + s + "'");
}

struct ScenarioConfig {
  int version = kConfigVersion;
  Scenario scenario = Scenario::Fit;

  // system
  int qubits = 3;
  std::uint64_t system_seed = 20200101;
  double decay = 0.0;  // per-qubit Gamma of the truth (generate / fit)

  // data
  int pulses = 512;
  int shots = 64;  // 0 = exact probabilities
  double duration = 1.0;
  double spam = 0.0;
  std::uint64_t seed = 1;

  // grids
  std::vector<int> pulse_list{16, 32, 64, 128, 256, 512};
  std::vector<int> shot_list{1, 2, 4, 8, 16, 32, 64};
  std::vector<double> spam_list{0.001, 0.003, 0.01, 0.03};
  std::vector<double> duration_list{1.0};
  std::vector<double> gamma_list{0.0, 0.01, 0.02, 0.05, 0.1};

  // model / fit
  std::string model = "hamiltonian";  // or "lindblad"
  FitConfig fit;
  int lindblad_steps = 100;  // RK4 steps per unit time for open models
  /// Initial rate of the open-model fit in lindblad_compare, which starts
  /// from the closed-model estimate.
  double open_lr0 = 0.002;
  /// Long-pulse runs (T > 1) spend this fraction of the P x S budget on a
  /// T = 1 fit that seeds them.
  double warm_fraction = 0.25;

  // validation
  int validation_pulses = 256;
  double validation_duration = 1.0;
  std::uint64_t validation_seed = 7;

  // design
  DesignConfig design;

  // lsq
  double lsq_p = 0.25;
  int trials = 1000;

  // files
  std::string dataset;  // input dataset for fit / validate
  std::string omega;    // input report (omega_hat) for validate

  int threads = 1;

  void validate() const {
    if (version != kConfigVersion) {
      throw ConfigError("config version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kConfigVersion) + ")");
    }
    if (qubits < 2 || qubits > 4) throw ConfigError("qubits must be in [2, 4]");
    if (!(decay >= 0.0)) throw ConfigError("decay must be >= 0");
    if (pulses < 1 || shots < 0) throw ConfigError("pulses >= 1 and shots >= 0 required");
    if (!(duration > 0.0) || !(validation_duration > 0.0)) throw ConfigError("durations must be > 0");
    if (!(spam >= 0.0) || !(1.0 - qubits * spam > 0.0)) throw ConfigError("spam must be in [0, 1/Q)");
    const auto nonempty = [](bool empty, const char* name) {
      if (empty) throw ConfigError(std::string(name) + " must be non-empty");
    };
    nonempty(pulse_list.empty(), "pulse_list");
    nonempty(shot_list.empty(), "shot_list");
    nonempty(spam_list.empty(), "spam_list");
    nonempty(duration_list.empty(), "duration_list");
    nonempty(gamma_list.empty(), "gamma_list");
    for (int p : pulse_list) {
      if (p < 1) throw ConfigError("pulse_list entries must be >= 1");
    }
    for (int s : shot_list) {
      if (s < 0) throw ConfigError("shot_list entries must be >= 0");
    }
    for (double s : spam_list) {
      if (!(s >= 0.0) || !(1.0 - qubits * s > 0.0)) throw ConfigError("spam_list entries must be in [0, 1/Q)");
    }
    for (double t : duration_list) {
      if (!(t > 0.0)) throw ConfigError("duration_list entries must be > 0");
    }
    for (double g : gamma_list) {
      if (!(g >= 0.0)) throw ConfigError("gamma_list entries must be >= 0");
    }
    if (model != "hamiltonian" && model != "lindblad") {
      throw ConfigError("model must be 'hamiltonian' or 'lindblad'");
    }
    if (lindblad_steps < 4) throw ConfigError("lindblad_steps must be >= 4");
    if (!(open_lr0 > 0.0)) throw ConfigError("open_lr0 must be > 0");
    if (!(warm_fraction > 0.0 && warm_fraction < 1.0)) throw ConfigError("warm_fraction must be in (0, 1)");
    if (validation_pulses < 1) throw ConfigError("validation_pulses must be >= 1");
    if (design.pulses < 1 || design.steps < 0 || !(design.lr > 0.0) || !(design.power > 0.0)) {
      throw ConfigError("design: pulses >= 1, steps >= 0, lr > 0, power > 0");
    }
    if (!(lsq_p >= 0.0) || trials < 1) throw ConfigError("lsq_p >= 0 and trials >= 1 required");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    fit.validate();
  }
};

namespace detail {

template <class T>
std::vector<T> list_field(const json& v, const char* name) {
  if (!v.is_array()) throw ConfigError(std::string(name) + " must be an array");
  return v.get<std::vector<T>>();
}

inline DesignConfig design_from_json(const json& j, DesignConfig d) {
  if (!j.is_object()) throw ConfigError("design: expected an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "pulses") d.pulses = v.get<int>();
    else if (key == "power") d.power = v.get<double>();
    else if (key == "steps") d.steps = v.get<int>();
    else if (key == "lr") d.lr = v.get<double>();
    else if (key == "ridge") d.ridge = v.get<double>();
    else if (key == "seed") d.seed = v.get<std::uint64_t>();
    else throw ConfigError("design: unknown field '" + key + "'");
  }
  return d;
}

}  // namespace detail

/// Parses a config object. Every field is optional except `version` and
/// `scenario`; unknown fields are errors.
inline ScenarioConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  if (!j.contains("version")) throw ConfigError("config: missing 'version'");
  if (!j.contains("scenario")) throw ConfigError("config: missing 'scenario'");
  ScenarioConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "version") c.version = v.get<int>();
      else if (key == "scenario") c.scenario = scenario_from_string(v.get<std::string>());
      else if (key == "qubits") c.qubits = v.get<int>();
      else if (key == "system_seed") c.system_seed = v.get<std::uint64_t>();
      else if (key == "decay") c.decay = v.get<double>();
      else if (key == "pulses") c.pulses = v.get<int>();
      else if (key == "shots") c.shots = v.get<int>();
      else if (key == "duration") c.duration = v.get<double>();
      else if (key == "spam") c.spam = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "pulse_list") c.pulse_list = detail::list_field<int>(v, "pulse_list");
      else if (key == "shot_list") c.shot_list = detail::list_field<int>(v, "shot_list");
      else if (key == "spam_list") c.spam_list = detail::list_field<double>(v, "spam_list");
      else if (key == "duration_list") c.duration_list = detail::list_field<double>(v, "duration_list");
      else if (key == "gamma_list") c.gamma_list = detail::list_field<double>(v, "gamma_list");
      else if (key == "model") c.model = v.get<std::string>();
      else if (key == "fit") c.fit = fit_config_from_json(v, c.fit);
      else if (key == "lindblad_steps") c.lindblad_steps = v.get<int>();
      else if (key == "open_lr0") c.open_lr0 = v.get<double>();
      else if (key == "warm_fraction") c.warm_fraction = v.get<double>();
      else if (key == "validation_pulses") c.validation_pulses = v.get<int>();
      else if (key == "validation_duration") c.validation_duration = v.get<double>();
      else if (key == "validation_seed") c.validation_seed = v.get<std::uint64_t>();
      else if (key == "design") c.design = detail::design_from_json(v, c.design);
      else if (key == "lsq_p") c.lsq_p = v.get<double>();
      else if (key == "trials") c.trials = v.get<int>();
      else if (key == "dataset") c.dataset = v.get<std::string>();
      else if (key == "omega") c.omega = v.get<std::string>();
      else if (key == "threads") c.threads = v.get<int>();
      else throw ConfigError("config: unknown field '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Shared plumbing

namespace detail {

inline LindbladOptions lindblad_options(const ScenarioConfig& c) {
  LindbladOptions o;
  o.steps_per_unit = c.lindblad_steps;
  o.min_steps = c.lindblad_steps;
  return o;
}

inline TrueSystem scenario_system(const ScenarioConfig& c, double decay) {
  return build_true_system(c.qubits, c.system_seed,
                           decay > 0.0 ? std::optional<double>(decay) : std::nullopt);
}

inline FitConfig scenario_fit(const ScenarioConfig& c) {
  FitConfig f = c.fit;
  f.threads = c.threads;
  return f;
}

inline ValidationSet scenario_validation(const ScenarioConfig& c, const TrueSystem& sys) {
  return make_validation_set(sys, c.validation_pulses, c.validation_duration, c.validation_seed,
                             lindblad_options(c));
}

}  // namespace detail

struct FitOutcome {
  EstimationReport report;
  double validation = 0.0;
};

/// Fit at T = 1 directly; for T > 1, spend `warm_fraction` of the pulses on
/// a T = 1 fit, then refine on the rest at duration T with lr0 / T.
inline FitOutcome fit_with_duration(const Model& model, const TrueSystem& sys, const SpamModel& spam,
                                    int pulses, int shots, double duration, std::uint64_t seed,
                                    const FitConfig& cfg, const ValidationSet& vs,
                                    double warm_fraction, LindbladOptions opts = {}) {
  FitOutcome out;
  if (duration <= 1.0) {
    const Dataset ds = generate_dataset(sys, spam, pulses, shots, duration, seed, opts);
    out.report = fit(model, ds, cfg);
  } else {
    const int warm = std::max(1, static_cast<int>(std::lround(warm_fraction * pulses)));
    const int rest = std::max(1, pulses - warm);
    const Dataset ds1 = generate_dataset(sys, spam, warm, shots, 1.0, seed, opts);
    const EstimationReport r1 = fit(model, ds1, cfg);
    const Dataset ds2 = generate_dataset(sys, spam, rest, shots, duration, seed + 1, opts);
    FitConfig c2 = cfg;
    c2.init = r1.omega_hat;
    c2.lr0 = cfg.lr0 / duration;
    out.report = fit(model, ds2, c2);
  }
  out.validation = validate(model, out.report.omega_hat, vs, DistanceKind::MSE, cfg.threads);
  return out;
}

// ---------------------------------------------------------------------------
// Rows

struct PsRow {
  int pulses = 0;
  int shots = 0;
  double c_min = 0.0;
  double v_min = 0.0;
  int epochs = 0;
  double wall_time = 0.0;
};

struct SpamRow {
  double s = 0.0;
  double duration = 1.0;
  double v_min = 0.0;
  double c_min = 0.0;
  double wall_time = 0.0;
};

struct LindbladRow {
  double gamma = 0.0;
  std::string model_kind;
  double v_min = 0.0;
  double c_min = 0.0;
  double wall_time = 0.0;
};

struct DesignRow {
  int shots = 0;
  std::string pulse_kind;
  double c_min = 0.0;
  double v_min = 0.0;
  double logdet = 0.0;
};

struct LsqRow {
  int pulses = 0;
  int shots = 0;
  double mean_v = 0.0;
  double approx_expectation = 0.0;
  double exact_expectation = 0.0;
};

// ---------------------------------------------------------------------------
// Runners

using Progress = std::function<void(const std::string&)>;

namespace detail {

/// Grid points go to the worker pool (one fit each, single-threaded inside);
/// with one thread the fit itself gets it. Rows keep grid order.
template <class Row, class Task>
std::vector<Row> run_grid(const ScenarioConfig& c, int points, const Progress& progress, Task&& task) {
  std::vector<Row> rows(static_cast<std::size_t>(points));
  std::mutex mu;
  parallel_for_dynamic(points, c.threads, [&](int i) {
    std::string line;
    rows[static_cast<std::size_t>(i)] = task(i, c.threads > 1 ? 1 : c.threads, line);
    if (progress) {
      std::lock_guard lock(mu);
      progress(line);
    }
  });
  return rows;
}

}  // namespace detail

inline std::vector<PsRow> run_scan_ps(const ScenarioConfig& c, const Progress& progress = {}) {
  const TrueSystem sys = detail::scenario_system(c, 0.0);
  const Model model = sys.hamiltonian_model();
  const ValidationSet vs = detail::scenario_validation(c, sys);
  const int ns = static_cast<int>(c.shot_list.size());
  const int points = static_cast<int>(c.pulse_list.size()) * ns;
  return detail::run_grid<PsRow>(c, points, progress, [&](int i, int inner, std::string& line) {
    const int p = c.pulse_list[i / ns];
    const int s = c.shot_list[i % ns];
    FitConfig cfg = detail::scenario_fit(c);
    cfg.threads = inner;
    const Dataset ds = generate_dataset(sys, SpamModel{c.spam}, p, s, c.duration, c.seed);
    const EstimationReport rep = fit(model, ds, cfg);
    PsRow row{p, s, rep.final_cost, validate(model, rep.omega_hat, vs, DistanceKind::MSE, inner),
              rep.epochs, rep.wall_time};
    line = "P=" + std::to_string(p) + " S=" + std::to_string(s) + " V=" + std::to_string(row.v_min);
    return row;
  });
}

inline std::vector<SpamRow> run_scan_spam(const ScenarioConfig& c, const Progress& progress = {}) {
  const TrueSystem sys = detail::scenario_system(c, 0.0);
  const Model model = sys.hamiltonian_model();
  const ValidationSet vs = detail::scenario_validation(c, sys);
  const int nt = static_cast<int>(c.duration_list.size());
  const int points = static_cast<int>(c.spam_list.size()) * nt;
  return detail::run_grid<SpamRow>(c, points, progress, [&](int i, int inner, std::string& line) {
    const double s = c.spam_list[i / nt];
    const double t = c.duration_list[i % nt];
    FitConfig cfg = detail::scenario_fit(c);
    cfg.threads = inner;
    const FitOutcome o = fit_with_duration(model, sys, SpamModel{s}, c.pulses, c.shots, t, c.seed, cfg, vs,
                                           c.warm_fraction);
    line = "s=" + std::to_string(s) + " T=" + std::to_string(t) + " V=" + std::to_string(o.validation);
    return SpamRow{s, t, o.validation, o.report.final_cost, o.report.wall_time};
  });
}

/// Fits the closed model first; the open model starts from that estimate
/// with zero collapse strengths.
inline std::vector<LindbladRow> run_lindblad_compare(const ScenarioConfig& c,
                                                     const Progress& progress = {}) {
  const LindbladOptions opts = detail::lindblad_options(c);
  // Simulated truth runs 4x finer so RK4 undershoot stays far below the
  // populations being estimated.
  LindbladOptions truth_opts = opts;
  truth_opts.steps_per_unit *= 4;
  truth_opts.min_steps *= 4;
  const FitConfig cfg = detail::scenario_fit(c);
  std::vector<LindbladRow> rows;
  for (double g : c.gamma_list) {
    // The truth always carries collapse operators so Gamma = 0 runs through
    // the same integrator.
    TrueSystem sys = build_true_system(c.qubits, c.system_seed, g);
    const ValidationSet vs = make_validation_set(sys, c.validation_pulses, c.validation_duration,
                                                 c.validation_seed, truth_opts);
    const Dataset ds =
        generate_dataset(sys, SpamModel{c.spam}, c.pulses, c.shots, c.duration, c.seed, truth_opts);
    const Model ham = sys.hamiltonian_model();
    const EstimationReport rh = fit(ham, ds, cfg);
    rows.push_back({g, "hamiltonian", validate(ham, rh.omega_hat, vs, DistanceKind::MSE, c.threads),
                    rh.final_cost, rh.wall_time});
    const Model open = sys.lindblad_model(opts);
    FitConfig co = cfg;
    ParameterVector init = ParameterVector::Zero(open.parameter_count());
    init.head(rh.omega_hat.size()) = rh.omega_hat;
    co.init = init;
    co.lr0 = c.open_lr0;
    const EstimationReport rl = fit(open, ds, co);
    rows.push_back({g, "lindblad", validate(open, rl.omega_hat, vs, DistanceKind::MSE, c.threads),
                    rl.final_cost, rl.wall_time});
    if (progress) {
      progress("Gamma=" + std::to_string(g) + " V_ham=" + std::to_string(rows[rows.size() - 2].v_min) +
               " V_lind=" + std::to_string(rows.back().v_min));
    }
  }
  return rows;
}

struct DesignCompareResult {
  std::vector<DesignRow> rows;
  DesignResult design;
  double random_logdet = 0.0;
};

/// Random pulses are N(0, 1) rescaled to the design power; the designed set
/// is optimized at the true parameters. Both are measured with the same
/// shot seed at each S.
inline DesignCompareResult run_design_compare(const ScenarioConfig& c, const Progress& progress = {}) {
  const TrueSystem sys = detail::scenario_system(c, 0.0);
  const Model model = sys.hamiltonian_model();
  const ValidationSet vs = detail::scenario_validation(c, sys);
  const FitConfig cfg = detail::scenario_fit(c);
  DesignConfig dc = c.design;
  dc.pulses = c.pulses;
  dc.duration = c.duration;
  dc.threads = c.threads;
  DesignCompareResult out;
  out.design = design_pulses(model, sys.omega(), dc);
  DesignConfig none = dc;
  none.steps = 0;
  std::vector<ControlPulse> random = design_pulses(model, sys.omega(), none).pulses;
  // Both sets at the same mean power; a no-op for any design that took a step.
  normalize_power(random, dc.power);
  normalize_power(out.design.pulses, dc.power);
  out.design.logdet_trace.back() = design_logdet(model, sys.omega(), out.design.pulses, dc.ridge, c.threads);
  out.random_logdet = design_logdet(model, sys.omega(), random, dc.ridge, c.threads);
  const double designed_logdet = out.design.logdet_trace.back();
  if (progress) {
    progress("logdet random=" + std::to_string(out.random_logdet) +
             " designed=" + std::to_string(designed_logdet));
  }
  for (int s : c.shot_list) {
    for (int kind = 0; kind < 2; ++kind) {
      const auto& pulses = kind == 0 ? random : out.design.pulses;
      const Dataset ds = measure_pulses(sys, SpamModel{c.spam}, pulses, s, c.seed);
      const EstimationReport rep = fit(model, ds, cfg);
      out.rows.push_back({s, kind == 0 ? "random" : "designed", rep.final_cost,
                          validate(model, rep.omega_hat, vs, DistanceKind::MSE, c.threads),
                          kind == 0 ? out.random_logdet : designed_logdet});
    }
    if (progress) {
      const auto n = out.rows.size();
      progress("S=" + std::to_string(s) + " V_random=" + std::to_string(out.rows[n - 2].v_min) +
               " V_designed=" + std::to_string(out.rows[n - 1].v_min));
    }
  }
  return out;
}

inline std::vector<LsqRow> run_lsq_demo(const ScenarioConfig& c) {
  std::vector<LsqRow> rows;
  for (int p : c.pulse_list) {
    for (int s : c.shot_list) {
      LsqConfig lc;
      lc.p = c.lsq_p;
      lc.pulses = p;
      lc.shots = s;
      lc.trials = c.trials;
      lc.seed = c.seed;
      const LsqSummary sum = lsq_monte_carlo(lc);
      rows.push_back({p, s, sum.mean_v, sum.approx_expectation, sum.exact_expectation});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

inline std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace detail

inline void write_csv(const std::filesystem::path& path, const std::vector<PsRow>& rows) {
  auto out = detail::open_csv(path);
  out << "P,S,C_min,V_min,epochs,wall_time\n";
  for (const auto& r : rows) {
    out << r.pulses << ',' << r.shots << ',' << detail::fmt(r.c_min) << ',' << detail::fmt(r.v_min) << ','
        << r.epochs << ',' << detail::fmt(r.wall_time) << '\n';
  }
}

inline void write_csv(const std::filesystem::path& path, const std::vector<SpamRow>& rows) {
  auto out = detail::open_csv(path);
  out << "s,T,V_min,C_min,wall_time\n";
  for (const auto& r : rows) {
    out << detail::fmt(r.s) << ',' << detail::fmt(r.duration) << ',' << detail::fmt(r.v_min) << ','
        << detail::fmt(r.c_min) << ',' << detail::fmt(r.wall_time) << '\n';
  }
}

inline void write_csv(const std::filesystem::path& path, const std::vector<LindbladRow>& rows) {
  auto out = detail::open_csv(path);
  out << "Gamma,model_kind,V_min,C_min,wall_time\n";
  for (const auto& r : rows) {
    out << detail::fmt(r.gamma) << ',' << r.model_kind << ',' << detail::fmt(r.v_min) << ','
        << detail::fmt(r.c_min) << ',' << detail::fmt(r.wall_time) << '\n';
  }
}

inline void write_csv(const std::filesystem::path& path, const std::vector<DesignRow>& rows) {
  auto out = detail::open_csv(path);
  out << "S,pulse_kind,C_min,V_min,logdet\n";
  for (const auto& r : rows) {
    out << r.shots << ',' << r.pulse_kind << ',' << detail::fmt(r.c_min) << ',' << detail::fmt(r.v_min)
        << ',' << detail::fmt(r.logdet) << '\n';
  }
}

inline void write_csv(const std::filesystem::path& path, const std::vector<LsqRow>& rows) {
  auto out = detail::open_csv(path);
  out << "P,S,mean_V_opt,p_over_PS,two_p_over_PS\n";
  for (const auto& r : rows) {
    out << r.pulses << ',' << r.shots << ',' << detail::fmt(r.mean_v) << ','
        << detail::fmt(r.approx_expectation) << ',' << detail::fmt(r.exact_expectation) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Dispatch

/// Runs one scenario, writing artifacts under `out_dir` (created if needed)
/// together with manifest.json. Returns the manifest.
inline json run_scenario(const ScenarioConfig& c, const std::filesystem::path& out_dir,
                         const Progress& progress = {}) {
  c.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + out_dir.string() + "': " + ec.message());
  const auto start = std::chrono::steady_clock::now();
  json manifest;
  manifest["scenario"] = to_string(c.scenario);
  manifest["version"] = kVersion;
  manifest["config_version"] = c.version;
  manifest["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                              "." + std::to_string(EIGEN_MINOR_VERSION);
  manifest["seeds"] = {{"system", c.system_seed}, {"data", c.seed}, {"fit", c.fit.seed},
                       {"validation", c.validation_seed}, {"design", c.design.seed}};
  manifest["threads"] = c.threads;
  json artifacts = json::array();

  const auto load_or_generate = [&](const TrueSystem& sys) {
    if (!c.dataset.empty()) return dataset_from_json(read_json_file(c.dataset));
    return generate_dataset(sys, SpamModel{c.spam}, c.pulses, c.shots, c.duration, c.seed,
                            detail::lindblad_options(c));
  };
  const auto model_for = [&](const TrueSystem& sys) {
    return c.model == "lindblad" ? sys.lindblad_model(detail::lindblad_options(c)) : sys.hamiltonian_model();
  };

  switch (c.scenario) {
    case Scenario::Generate: {
      const TrueSystem sys = detail::scenario_system(c, c.decay);
      const Dataset ds = generate_dataset(sys, SpamModel{c.spam}, c.pulses, c.shots, c.duration, c.seed,
                                          detail::lindblad_options(c));
      write_json_file((out_dir / "dataset.json").string(), dataset_to_json(ds));
      artifacts.push_back("dataset.json");
      break;
    }
    case Scenario::Fit: {
      const TrueSystem sys = detail::scenario_system(c, c.decay);
      const Dataset ds = load_or_generate(sys);
      const Model model = model_for(sys);
      const EstimationReport rep = fit(model, ds, detail::scenario_fit(c));
      json rj = report_to_json(rep, model);
      const ValidationSet vs = detail::scenario_validation(c, sys);
      rj["validation"] = validate(model, rep.omega_hat, vs, DistanceKind::MSE, c.threads);
      write_json_file((out_dir / "report.json").string(), rj);
      write_csv(out_dir / "results.csv",
                std::vector<PsRow>{{ds.size(), ds.shots, rep.final_cost, rj["validation"].get<double>(),
                                    rep.epochs, rep.wall_time}});
      artifacts.push_back("report.json");
      artifacts.push_back("results.csv");
      break;
    }
    case Scenario::Validate: {
      if (c.omega.empty()) throw ConfigError("validate: 'omega' (a fit report) is required");
      const TrueSystem sys = detail::scenario_system(c, c.decay);
      const Model model = model_for(sys);
      const json rep = read_json_file(c.omega);
      if (!rep.contains("omega_hat")) throw ConfigError("validate: report has no 'omega_hat'");
      const auto v = rep.at("omega_hat").get<std::vector<double>>();
      const ParameterVector w = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      if (w.size() != model.parameter_count()) throw ConfigError("validate: omega_hat has the wrong length");
      const double val = validate(model, w, detail::scenario_validation(c, sys), DistanceKind::MSE, c.threads);
      write_json_file((out_dir / "validation.json").string(), json{{"V", val}, {"pulses", c.validation_pulses}});
      artifacts.push_back("validation.json");
      break;
    }
    case Scenario::Design: {
      const TrueSystem sys = detail::scenario_system(c, 0.0);
      DesignConfig dc = c.design;
      dc.duration = c.duration;
      dc.threads = c.threads;
      const DesignResult res = design_pulses(sys.hamiltonian_model(), sys.omega(), dc);
      write_json_file((out_dir / "pulses.json").string(),
                      json{{"T", c.duration}, {"pulses", pulses_to_json(res.pulses)}, {"logdet", res.logdet_trace}});
      artifacts.push_back("pulses.json");
      break;
    }
    case Scenario::ScanPs:
      write_csv(out_dir / "scan_ps.csv", run_scan_ps(c, progress));
      artifacts.push_back("scan_ps.csv");
      break;
    case Scenario::ScanSpam:
      write_csv(out_dir / "scan_spam.csv", run_scan_spam(c, progress));
      artifacts.push_back("scan_spam.csv");
      break;
    case Scenario::LindbladCompare:
      write_csv(out_dir / "lindblad_compare.csv", run_lindblad_compare(c, progress));
      artifacts.push_back("lindblad_compare.csv");
      break;
    case Scenario::DesignCompare: {
      const DesignCompareResult r = run_design_compare(c, progress);
      write_csv(out_dir / "design_compare.csv", r.rows);
      write_json_file((out_dir / "designed_pulses.json").string(),
                      json{{"T", c.duration}, {"pulses", pulses_to_json(r.design.pulses)},
                           {"logdet", r.design.logdet_trace}});
      artifacts.push_back("design_compare.csv");
      artifacts.push_back("designed_pulses.json");
      break;
    }
    case Scenario::LsqDemo:
      write_csv(out_dir / "lsq_demo.csv", run_lsq_demo(c));
      artifacts.push_back("lsq_demo.csv");
      break;
  }
  manifest["artifacts"] = artifacts;
  manifest["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json_file((out_dir / "manifest.json").string(), manifest);
  return manifest;
}

}  // namespace steady
