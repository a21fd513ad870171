#pragma once

// JSON serialization of datasets, pulse lists and estimation reports.
//
// Dataset schema:
//   { "meta": { "seed", "T", "S", "P", "s", "system" },
//     "pulses": [[d_1 ... d_D], ...],
//     "counts": [[n_0 ... n_{2^Q-1}], ...]      (S >= 1)
//   | "probs":  [[p_0 ... p_{2^Q-1}], ...] }    (S == 0, exact)

#include <Eigen/Dense>

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "steady/errors.hpp"
#include "steady/estimation.hpp"
#include "steady/mock_hardware.hpp"

namespace steady {

using json = nlohmann::json;

namespace detail {

inline json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> rows_matrix(const json& rows,
                                                                   const char* what) {
  if (!rows.is_array() || rows.empty()) throw ConfigError(std::string(what) + ": expected a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (!rows[0].is_array()) throw ConfigError(std::string(what) + ": rows must be arrays");
  const auto m = static_cast<Eigen::Index>(rows[0].size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != m) {
      throw ConfigError(std::string(what) + ": ragged rows");
    }
    for (Eigen::Index j = 0; j < m; ++j) out(i, j) = r[static_cast<std::size_t>(j)].get<Scalar>();
  }
  return out;
}

inline json vector_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace detail

inline json pulses_to_json(const std::vector<ControlPulse>& pulses) {
  json rows = json::array();
  for (const auto& p : pulses) {
    if (!p.is_constant()) throw DomainError("pulses_to_json: only constant pulses are serialized");
    rows.push_back(std::vector<double>(p.amplitudes.data(), p.amplitudes.data() + p.amplitudes.size()));
  }
  return rows;
}

inline std::vector<ControlPulse> pulses_from_json(const json& rows, double duration) {
  const Eigen::MatrixXd m = detail::rows_matrix<double>(rows, "pulses");
  std::vector<ControlPulse> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.push_back(ControlPulse::constant(m.row(i).transpose(), duration));
  }
  return out;
}

inline json dataset_to_json(const Dataset& ds) {
  json j;
  j["meta"] = {{"seed", ds.seed}, {"T", ds.duration}, {"S", ds.shots},
               {"P", ds.size()},  {"s", ds.spam_s},   {"system", ds.system}};
  j["pulses"] = pulses_to_json(ds.pulses);
  if (ds.exact()) {
    j["probs"] = detail::matrix_rows(ds.estimates);
  } else {
    j["counts"] = detail::matrix_rows(ds.counts.cast<double>());
  }
  return j;
}

inline Dataset dataset_from_json(const json& j) {
  try {
    for (const auto& [key, _] : j.items()) {
      if (key != "meta" && key != "pulses" && key != "counts" && key != "probs") {
        throw ConfigError("dataset: unknown field '" + key + "'");
      }
    }
    const json& meta = j.at("meta");
    Dataset ds;
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.duration = meta.at("T").get<double>();
    ds.shots = meta.at("S").get<int>();
    ds.spam_s = meta.value("s", 0.0);
    ds.system = meta.value("system", std::string("unknown"));
    ds.pulses = pulses_from_json(j.at("pulses"), ds.duration);
    if (ds.shots == 0) {
      if (!j.contains("probs")) throw ConfigError("dataset: S = 0 requires 'probs'");
      ds.estimates = detail::rows_matrix<double>(j.at("probs"), "probs");
    } else {
      if (!j.contains("counts")) throw ConfigError("dataset: S >= 1 requires 'counts'");
      const Eigen::MatrixXd c = detail::rows_matrix<double>(j.at("counts"), "counts");
      ds.counts = c.cast<int>();
      ds.estimates = c / ds.shots;
    }
    if (meta.contains("P") && meta.at("P").get<int>() != ds.size()) {
      throw ConfigError("dataset: meta.P does not match the pulse count");
    }
    ds.validate();
    return ds;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

inline json fit_config_to_json(const FitConfig& c) {
  return {{"distance", to_string(c.distance)},
          {"lr0", c.lr0},
          {"lr_decay", c.lr_decay},
          {"lr_min", c.lr_min},
          {"plateau_window", c.plateau_window},
          {"plateau_threshold", c.plateau_threshold},
          {"lambda0", c.lambda0},
          {"lambda_noise", c.lambda_noise},
          {"anneal", to_string(c.anneal)},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"tol", c.tol},
          {"init_scale", c.init_scale},
          {"init_nominal_coupling", c.init_nominal_coupling},
          {"restarts", c.restarts},
          {"seed", c.seed}};
}

/// Reads the fields present in `j` over the defaults in `base`; unknown
/// fields are rejected.
inline FitConfig fit_config_from_json(const json& j, FitConfig base = {}) {
  if (!j.is_object()) throw ConfigError("fit: expected an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "distance") base.distance = distance_from_string(v.get<std::string>());
      else if (key == "lr0") base.lr0 = v.get<double>();
      else if (key == "lr_decay") base.lr_decay = v.get<double>();
      else if (key == "lr_min") base.lr_min = v.get<double>();
      else if (key == "plateau_window") base.plateau_window = v.get<int>();
      else if (key == "plateau_threshold") base.plateau_threshold = v.get<double>();
      else if (key == "lambda0") base.lambda0 = v.get<double>();
      else if (key == "lambda_noise") base.lambda_noise = v.get<double>();
      else if (key == "anneal") base.anneal = anneal_from_string(v.get<std::string>());
      else if (key == "batch_size") base.batch_size = v.get<int>();
      else if (key == "max_epochs") base.max_epochs = v.get<int>();
      else if (key == "tol") base.tol = v.get<double>();
      else if (key == "init_scale") base.init_scale = v.get<double>();
      else if (key == "init_nominal_coupling") base.init_nominal_coupling = v.get<double>();
      else if (key == "restarts") base.restarts = v.get<int>();
      else if (key == "seed") base.seed = v.get<std::uint64_t>();
      else throw ConfigError("fit: unknown field '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("fit: ") + e.what());
  }
  base.validate();
  return base;
}

inline json report_to_json(const EstimationReport& r, const Model& model) {
  json j;
  j["omega_hat"] = detail::vector_json(r.omega_hat);
  j["parameter_names"] = model.parameter_names();
  j["cost_trace"] = r.cost_trace;
  j["reg_trace"] = r.reg_trace;
  j["lr_trace"] = r.lr_trace;
  j["initial_cost"] = r.initial_cost;
  j["final_cost"] = r.final_cost;
  j["epochs"] = r.epochs;
  j["restart"] = r.restart;
  j["stop_reason"] = r.stop_reason;
  j["wall_time"] = r.wall_time;
  j["config"] = fit_config_to_json(r.config);
  return j;
}

}  // namespace steady
