#pragma once

// Distances between population vectors, the pulse-averaged cost and its
// gradient, the NAdam fit with an annealed L1 penalty, validation against
// exact truth, and the z-rotation gauge diagnostic.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "steady/constants.hpp"
#include "steady/errors.hpp"
#include "steady/mock_hardware.hpp"
#include "steady/models.hpp"
#include "steady/parallel.hpp"

namespace steady {

enum class DistanceKind { MSE, MAE, CrossEntropy, Bhattacharyya };

inline std::string to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::MSE: return "mse";
    case DistanceKind::MAE: return "mae";
    case DistanceKind::CrossEntropy: return "cross_entropy";
    case DistanceKind::Bhattacharyya: return "bhattacharyya";
  }
  return "?";
}

inline DistanceKind distance_from_string(const std::string& s) {
  if (s == "mse") return DistanceKind::MSE;
  if (s == "mae") return DistanceKind::MAE;
  if (s == "cross_entropy") return DistanceKind::CrossEntropy;
  if (s == "bhattacharyya") return DistanceKind::Bhattacharyya;
  throw ConfigError("unknown distance '" + s + "' (mse, mae, cross_entropy, bhattacharyya)");
}

/// dist(measured, model). MSE and MAE sum over outcomes; CrossEntropy is
/// -sum measured * log(model); Bhattacharyya is -log sum sqrt(measured * model).
inline double distance(DistanceKind kind, const Eigen::Ref<const Eigen::VectorXd>& measured,
                       const Eigen::Ref<const Eigen::VectorXd>& model,
                       double clip = kDefaultTolerances.prob_clip) {
  if (measured.size() != model.size()) throw DimensionError("distance: length mismatch");
  switch (kind) {
    case DistanceKind::MSE: return (measured - model).squaredNorm();
    case DistanceKind::MAE: return (measured - model).cwiseAbs().sum();
    case DistanceKind::CrossEntropy: {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < model.size(); ++k) {
        if (measured(k) != 0.0) acc -= measured(k) * std::log(std::max(model(k), clip));
      }
      return acc;
    }
    case DistanceKind::Bhattacharyya: {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < model.size(); ++k) {
        acc += std::sqrt(std::max(measured(k), 0.0) * std::max(model(k), clip));
      }
      return -std::log(std::max(acc, clip));
    }
  }
  return 0.0;
}

/// d dist / d model.
inline Eigen::VectorXd distance_grad(DistanceKind kind,
                                     const Eigen::Ref<const Eigen::VectorXd>& measured,
                                     const Eigen::Ref<const Eigen::VectorXd>& model,
                                     double clip = kDefaultTolerances.prob_clip) {
  if (measured.size() != model.size()) throw DimensionError("distance_grad: length mismatch");
  const Eigen::Index n = model.size();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  switch (kind) {
    case DistanceKind::MSE: g = 2.0 * (model - measured); break;
    case DistanceKind::MAE:
      for (Eigen::Index k = 0; k < n; ++k) {
        const double d = model(k) - measured(k);
        g(k) = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      }
      break;
    case DistanceKind::CrossEntropy:
      for (Eigen::Index k = 0; k < n; ++k) {
        if (model(k) > clip) g(k) = -measured(k) / model(k);
      }
      break;
    case DistanceKind::Bhattacharyya: {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        acc += std::sqrt(std::max(measured(k), 0.0) * std::max(model(k), clip));
      }
      if (acc <= clip) break;
      for (Eigen::Index k = 0; k < n; ++k) {
        if (model(k) > clip) g(k) = -std::sqrt(std::max(measured(k), 0.0) / model(k)) / (2.0 * acc);
      }
      break;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Cost

namespace detail {

inline void check_dataset(const Model& model, const Dataset& ds) {
  if (ds.pulses.empty()) throw DomainError("cost: dataset has no pulses");
  if (ds.outcomes() != model.dim()) throw DimensionError("cost: dataset outcome count != 2^Q");
  if (ds.pulses.front().drives() != model.drives()) {
    throw DimensionError("cost: dataset drive count does not match the model");
  }
}

}  // namespace detail

inline double cost(const Model& model, const ParameterVector& w, const Dataset& ds,
                   DistanceKind kind, int threads = 1) {
  detail::check_dataset(model, ds);
  std::vector<double> per(ds.pulses.size());
  parallel_for(ds.size(), threads, [&](int i) {
    per[i] = distance(kind, ds.estimates.row(i).transpose(), predict_probs(model, w, ds.pulses[i]));
  });
  return std::accumulate(per.begin(), per.end(), 0.0) / ds.size();
}

struct CostGradient {
  double cost = 0.0;
  Eigen::VectorXd grad;
  /// Mean of sum_k p(1 - p) / S over the batch, at the model predictions.
  double sampling_floor = 0.0;
};

/// Cost and exact gradient restricted to the pulses in `batch`.
inline CostGradient cost_grad(const Model& model, const ParameterVector& w, const Dataset& ds,
                              const std::vector<int>& batch, DistanceKind kind, int threads = 1) {
  detail::check_dataset(model, ds);
  if (batch.empty()) throw DomainError("cost_grad: empty batch");
  const int b = static_cast<int>(batch.size());
  std::vector<double> costs(b), floors(b);
  std::vector<Eigen::VectorXd> grads(b);
  parallel_for(b, threads, [&](int j) {
    const int i = batch[j];
    if (i < 0 || i >= ds.size()) throw DomainError("cost_grad: batch index out of range");
    PulseEvaluation ev(model, w, ds.pulses[i]);
    const Eigen::VectorXd meas = ds.estimates.row(i).transpose();
    costs[j] = distance(kind, meas, ev.probs());
    grads[j] = ev.gradient(distance_grad(kind, meas, ev.probs()));
    floors[j] = ds.exact() ? 0.0 : (ev.probs().array() * (1.0 - ev.probs().array())).sum() / ds.shots;
  });
  CostGradient out;
  out.grad = Eigen::VectorXd::Zero(w.size());
  for (int j = 0; j < b; ++j) {
    out.cost += costs[j];
    out.grad += grads[j];
    out.sampling_floor += floors[j];
  }
  out.cost /= b;
  out.grad /= b;
  out.sampling_floor /= b;
  return out;
}

inline CostGradient cost_grad(const Model& model, const ParameterVector& w, const Dataset& ds,
                              DistanceKind kind, int threads = 1) {
  std::vector<int> all(static_cast<std::size_t>(ds.size()));
  std::iota(all.begin(), all.end(), 0);
  return cost_grad(model, w, ds, all, kind, threads);
}

/// Smallest achievable cost given the data alone: the mean empirical entropy
/// for cross-entropy, zero otherwise.
inline double data_cost_floor(const Dataset& ds, DistanceKind kind) {
  if (kind != DistanceKind::CrossEntropy) return 0.0;
  double acc = 0.0;
  for (int i = 0; i < ds.size(); ++i) {
    for (int k = 0; k < ds.outcomes(); ++k) {
      const double p = ds.estimates(i, k);
      if (p > 0.0) acc -= p * std::log(p);
    }
  }
  return acc / ds.size();
}

// ---------------------------------------------------------------------------
// Fit

/// How the L1 weight follows the cost. With c the previous epoch's mean
/// batch cost (minus the data floor for cross-entropy) and f the sampling
/// noise estimate sum_k p(1 - p) / S at the current predictions:
///   Cost     lambda0 * max(c, f)
///   Noise    lambda0 * max(c - f, 0) + lambda_noise * sqrt(f / P)
///   Constant lambda0
/// Under Noise the weight fades with the fit's excess cost and settles at the
/// gradient-noise scale, so exact data ends unregularized.
enum class AnnealSchedule { None, Constant, Cost, Noise };

inline std::string to_string(AnnealSchedule a) {
  switch (a) {
    case AnnealSchedule::None: return "none";
    case AnnealSchedule::Constant: return "constant";
    case AnnealSchedule::Cost: return "cost";
    case AnnealSchedule::Noise: return "noise";
  }
  return "?";
}

inline AnnealSchedule anneal_from_string(const std::string& s) {
  if (s == "none") return AnnealSchedule::None;
  if (s == "constant") return AnnealSchedule::Constant;
  if (s == "cost") return AnnealSchedule::Cost;
  if (s == "noise") return AnnealSchedule::Noise;
  throw ConfigError("unknown anneal schedule '" + s + "' (none, constant, cost, noise)");
}

struct FitConfig {
  DistanceKind distance = DistanceKind::MSE;
  double lr0 = 0.01;
  double lr_decay = 0.5;
  double lr_min = 1e-5;
  int plateau_window = 50;
  double plateau_threshold = 0.01;
  double lambda0 = 0.01;
  double lambda_noise = 0.3;
  AnnealSchedule anneal = AnnealSchedule::Noise;
  int batch_size = 64;
  int max_epochs = 3000;
  double tol = 1e-14;
  double init_scale = 0.1;
  /// Added to the alpha diagonal of square linear-mix models at init: drive l
  /// nominally couples to operator l with unit strength.
  double init_nominal_coupling = 1.0;
  std::uint64_t seed = 1;
  int threads = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::optional<ParameterVector> init;  // warm start instead of N(0, init_scale^2)
  /// Independent random initializations; the one with the lowest final
  /// regularized training cost is kept. Ignored with a warm start.
  int restarts = 1;

  void validate() const {
    if (!(lr0 > 0.0) || !(lr_decay > 0.0 && lr_decay < 1.0) || !(lr_min > 0.0)) {
      throw ConfigError("FitConfig: need lr0 > 0, 0 < lr_decay < 1, lr_min > 0");
    }
    if (plateau_window < 1 || !(plateau_threshold >= 0.0)) {
      throw ConfigError("FitConfig: plateau_window >= 1 and plateau_threshold >= 0");
    }
    if (!(lambda0 >= 0.0) || !(lambda_noise >= 0.0)) {
      throw ConfigError("FitConfig: lambda0 and lambda_noise must be >= 0");
    }
    if (batch_size < 1 || max_epochs < 0) throw ConfigError("FitConfig: batch_size >= 1, max_epochs >= 0");
    if (!(tol >= 0.0) || !(init_scale >= 0.0)) throw ConfigError("FitConfig: tol, init_scale >= 0");
    if (threads < 1) throw ConfigError("FitConfig: threads >= 1");
    if (restarts < 1) throw ConfigError("FitConfig: restarts >= 1");
  }
};

struct EstimationReport {
  ParameterVector omega_hat;
  std::vector<double> cost_trace;  // mean batch cost per epoch
  std::vector<double> reg_trace;   // lambda * |omega|_1 at the end of each epoch
  std::vector<double> lr_trace;
  std::vector<std::pair<int, double>> monitor_trace;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int epochs = 0;
  int restart = 0;  // index of the kept initialization
  std::string stop_reason;
  double wall_time = 0.0;
  FitConfig config;
};

using FitMonitor = std::function<double(const ParameterVector&)>;

namespace detail {

inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

namespace detail {

inline EstimationReport fit_once(const Model& model, const Dataset& ds, const FitConfig& cfg,
                                 int restart, const FitMonitor& monitor, int monitor_every) {
  cfg.validate();
  detail::check_dataset(model, ds);
  const auto start = std::chrono::steady_clock::now();
  const int dim = model.parameter_count();
  const int p = ds.size();
  const Eigen::Index c0 = model.strength_offset();

  EstimationReport rep;
  rep.config = cfg;

  auto rng = substream(cfg.seed, static_cast<std::uint64_t>(restart), kStreamFit);
  ParameterVector w(dim);
  if (cfg.init) {
    if (cfg.init->size() != dim) throw DimensionError("fit: warm start has wrong length");
    w = *cfg.init;
  } else {
    std::normal_distribution<double> normal(0.0, cfg.init_scale);
    for (int l = 0; l < dim; ++l) w(l) = normal(rng);
    if (model.kind() == HamiltonianKind::LinearMix && model.basis().size() == model.drives()) {
      for (int k = 0; k < model.drives(); ++k) w(k * model.drives() + k) += cfg.init_nominal_coupling;
    }
  }
  for (Eigen::Index l = c0; l < dim; ++l) w(l) = std::max(0.0, w(l));

  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(dim);
  double b1t = 1.0, b2t = 1.0;
  double lr = cfg.lr0;
  const int batch = std::min(cfg.batch_size, p);
  const double data_floor = data_cost_floor(ds, cfg.distance);

  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);

  double running_cost = std::numeric_limits<double>::quiet_NaN();
  double running_floor = 0.0;
  int last_decay = 0;
  std::vector<double> best_so_far;
  rep.stop_reason = "max_epochs";

  const auto lambda_now = [&]() {
    if (cfg.anneal == AnnealSchedule::None) return 0.0;
    if (cfg.anneal == AnnealSchedule::Constant) return cfg.lambda0;
    if (std::isnan(running_cost)) return 0.0;
    const double excess = running_cost - data_floor;
    if (cfg.anneal == AnnealSchedule::Cost) return cfg.lambda0 * std::max(excess, running_floor);
    return cfg.lambda0 * std::max(excess - running_floor, 0.0) +
           cfg.lambda_noise * std::sqrt(running_floor / p);
  };

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_cost = 0.0, epoch_floor = 0.0;
    int batches = 0;
    for (int lo = 0; lo < p; lo += batch) {
      const int hi = std::min(p, lo + batch);
      const std::vector<int> idx(order.begin() + lo, order.begin() + hi);
      CostGradient cg = cost_grad(model, w, ds, idx, cfg.distance, cfg.threads);
      if (!std::isfinite(cg.cost) || !cg.grad.allFinite()) {
        throw NumericalError("fit: non-finite cost or gradient at epoch " + std::to_string(epoch));
      }
      if (epoch == 0 && batches == 0 && std::isnan(running_cost)) {
        running_cost = cg.cost;
        running_floor = cg.sampling_floor;
      }
      epoch_cost += cg.cost * (hi - lo);
      epoch_floor += cg.sampling_floor * (hi - lo);
      ++batches;

      const double lam = lambda_now();
      Eigen::VectorXd g = cg.grad;
      if (lam > 0.0) {
        for (int l = 0; l < dim; ++l) g(l) += lam * detail::sign(w(l));
      }
      // NAdam (Nesterov lookahead on the first moment).
      b1t *= cfg.beta1;
      b2t *= cfg.beta2;
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseAbs2();
      const Eigen::VectorXd mhat =
          (cfg.beta1 / (1.0 - b1t * cfg.beta1)) * m1 + ((1.0 - cfg.beta1) / (1.0 - b1t)) * g;
      const Eigen::VectorXd vhat = m2 / (1.0 - b2t);
      w.array() -= lr * mhat.array() / (vhat.array().sqrt() + cfg.adam_eps);
      for (Eigen::Index l = c0; l < dim; ++l) w(l) = std::max(0.0, w(l));
    }
    epoch_cost /= p;
    epoch_floor /= p;
    running_cost = epoch_cost;
    running_floor = epoch_floor;
    if (epoch == 0) rep.initial_cost = epoch_cost;
    rep.cost_trace.push_back(epoch_cost);
    rep.reg_trace.push_back(lambda_now() * w.lpNorm<1>());
    rep.lr_trace.push_back(lr);
    rep.epochs = epoch + 1;
    best_so_far.push_back(best_so_far.empty() ? epoch_cost : std::min(best_so_far.back(), epoch_cost));

    if (monitor && monitor_every > 0 && (epoch + 1) % monitor_every == 0) {
      rep.monitor_trace.emplace_back(epoch + 1, monitor(w));
    }

    const double excess0 = rep.initial_cost - data_floor;
    if (excess0 > 0.0 && (epoch_cost - data_floor) / excess0 < cfg.tol) {
      rep.stop_reason = "tol";
      break;
    }
    if (epoch - last_decay >= cfg.plateau_window) {
      const double before = best_so_far[epoch - cfg.plateau_window] - data_floor;
      const double now = best_so_far[epoch] - data_floor;
      if (before <= 0.0 || (before - now) / before < cfg.plateau_threshold) {
        lr *= cfg.lr_decay;
        last_decay = epoch;
        if (lr < cfg.lr_min) {
          rep.stop_reason = "lr_min";
          break;
        }
      }
    }
  }

  rep.omega_hat = w;
  rep.restart = restart;
  rep.final_cost = cost(model, w, ds, cfg.distance, cfg.threads);
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace detail

/// Minimizes C(omega) + lambda_k |omega|_1 by minibatch NAdam. Collapse
/// strengths, when present, are projected onto c >= 0 after every step.
inline EstimationReport fit(const Model& model, const Dataset& ds, const FitConfig& cfg,
                            const FitMonitor& monitor = {}, int monitor_every = 0) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const int runs = cfg.init ? 1 : cfg.restarts;
  std::optional<EstimationReport> best;
  double best_score = 0.0;
  for (int r = 0; r < runs; ++r) {
    EstimationReport rep = detail::fit_once(model, ds, cfg, r, monitor, monitor_every);
    const double lam = rep.reg_trace.empty() ? 0.0 : rep.reg_trace.back();
    const double score = rep.final_cost + lam;
    if (!best || score < best_score) {
      best = std::move(rep);
      best_score = score;
    }
  }
  best->wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return *best;
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationSet {
  std::vector<ControlPulse> pulses;
  Eigen::MatrixXd probs;  // exact, SPAM-free truth populations
};

/// Fixed held-out pulses (unit variance, duration T_v) with exact truth.
inline ValidationSet make_validation_set(const TrueSystem& sys, int count = 256,
                                         double duration = 1.0, std::uint64_t seed = 7,
                                         LindbladOptions options = {}) {
  Dataset ds = generate_dataset(sys, SpamModel{0.0}, count, 0, duration, seed, options,
                                kStreamValidation);
  return {std::move(ds.pulses), std::move(ds.estimates)};
}

inline double validate(const Model& model, const ParameterVector& w, const ValidationSet& vs,
                       DistanceKind kind = DistanceKind::MSE, int threads = 1) {
  if (vs.pulses.empty()) throw DomainError("validate: empty validation set");
  if (vs.probs.cols() != model.dim()) throw DimensionError("validate: outcome count != 2^Q");
  std::vector<double> per(vs.pulses.size());
  parallel_for(static_cast<int>(vs.pulses.size()), threads, [&](int i) {
    per[i] = distance(kind, vs.probs.row(i).transpose(), predict_probs(model, w, vs.pulses[i]));
  });
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

// ---------------------------------------------------------------------------
// Gauge

/// Rotates the (X_q, Y_q) row pair of a linear-mix array by theta for every
/// qubit, i.e. conjugation of all drive terms by exp(i theta G / 2) with
/// G = sum_q Z_q. Rows follow the test-system basis order.
inline Eigen::MatrixXd gauge_rotate(const Eigen::MatrixXd& rows, int qubits, double theta) {
  if (rows.rows() < 3 * qubits) throw DimensionError("gauge_rotate: too few rows for the basis");
  Eigen::MatrixXd out = rows;
  const double c = std::cos(theta), s = std::sin(theta);
  for (int q = 0; q < qubits; ++q) {
    const Eigen::RowVectorXd x = rows.row(qubits + q);
    const Eigen::RowVectorXd y = rows.row(2 * qubits + q);
    out.row(qubits + q) = c * x - s * y;
    out.row(2 * qubits + q) = s * x + c * y;
  }
  return out;
}

inline LinearMixParams gauge_rotate(const LinearMixParams& p, int qubits, double theta) {
  LinearMixParams out;
  out.alpha = gauge_rotate(p.alpha, qubits, theta);
  out.beta = gauge_rotate(Eigen::MatrixXd(p.beta), qubits, theta).col(0);
  return out;
}

struct GaugeError {
  double error = 0.0;  // mean squared difference after the best rotation
  double theta = 0.0;
  double raw = 0.0;    // mean squared difference at theta = 0
};

/// min over theta of mean((R(theta) alpha_hat - alpha_true)^2): a 721-point
/// scan of [0, 2 pi] followed by golden-section refinement.
inline GaugeError parameter_error_mod_gauge(const Eigen::MatrixXd& alpha_hat,
                                            const Eigen::MatrixXd& alpha_true, int qubits = 3) {
  if (alpha_hat.rows() != alpha_true.rows() || alpha_hat.cols() != alpha_true.cols()) {
    throw DimensionError("parameter_error_mod_gauge: alpha shapes differ");
  }
  if (alpha_hat.rows() < 3 * qubits) {
    throw DomainError("parameter_error_mod_gauge: requires the test-system linear-mix basis");
  }
  const auto f = [&](double t) {
    return (gauge_rotate(alpha_hat, qubits, t) - alpha_true).squaredNorm() /
           static_cast<double>(alpha_true.size());
  };
  constexpr int kScan = 721;
  const double two_pi = 2.0 * std::numbers::pi;
  const double step = two_pi / (kScan - 1);
  double best_t = 0.0, best_f = f(0.0);
  for (int j = 1; j < kScan; ++j) {
    const double t = j * step;
    const double v = f(t);
    if (v < best_f) {
      best_f = v;
      best_t = t;
    }
  }
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = best_t - step, b = best_t + step;
  double x1 = b - invphi * (b - a), x2 = a + invphi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 100 && b - a > 1e-12; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
    }
  }
  const double t = 0.5 * (a + b);
  GaugeError out;
  out.raw = f(0.0);
  out.error = std::min({f(t), best_f, out.raw});
  out.theta = out.error == f(t) ? std::fmod(t + two_pi, two_pi) : (out.error == best_f ? best_t : 0.0);
  return out;
}

}  // namespace steady
