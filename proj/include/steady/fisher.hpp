#pragma once

// Fisher information of multinomial population measurements, Cramer-Rao
// bounds, and D-optimal pulse design by ascent on log det of the total Fisher
// matrix.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "steady/constants.hpp"
#include "steady/errors.hpp"
#include "steady/mock_hardware.hpp"
#include "steady/models.hpp"
#include "steady/parallel.hpp"

namespace steady {

struct FisherMatrix {
  Eigen::MatrixXd entries;
  int pulses = 1;
  int shots = 1;
};

/// sum_k (1/p_k) dp_k/dw_i dp_k/dw_j for a single shot of one pulse.
inline FisherMatrix fisher_per_pulse(const Model& model, const ParameterVector& w,
                                     const ControlPulse& pulse,
                                     const Tolerances& tol = kDefaultTolerances) {
  PulseEvaluation ev(model, w, pulse);
  const Eigen::MatrixXd jac = ev.jacobian();
  const Eigen::VectorXd inv = ev.probs().cwiseMax(tol.prob_clip).cwiseInverse();
  FisherMatrix f;
  f.entries = jac.transpose() * inv.asDiagonal() * jac;
  f.entries = 0.5 * (f.entries + f.entries.transpose()).eval();
  return f;
}

/// S * sum_i fisher_per_pulse(pulse_i).
inline FisherMatrix fisher_total(const Model& model, const ParameterVector& w,
                                 const std::vector<ControlPulse>& pulses, int shots,
                                 int threads = 1, const Tolerances& tol = kDefaultTolerances) {
  if (pulses.empty()) throw DomainError("fisher_total: no pulses");
  if (shots < 1) throw DomainError("fisher_total: shots must be >= 1");
  std::vector<Eigen::MatrixXd> per(pulses.size());
  parallel_for(static_cast<int>(pulses.size()), threads,
               [&](int i) { per[i] = fisher_per_pulse(model, w, pulses[i], tol).entries; });
  FisherMatrix f;
  f.entries = Eigen::MatrixXd::Zero(w.size(), w.size());
  for (const auto& m : per) f.entries += m;
  f.entries *= shots;
  f.pulses = static_cast<int>(pulses.size());
  f.shots = shots;
  return f;
}

struct CrbBias {
  Eigen::VectorXd bias;       // b_l
  Eigen::VectorXd bias_grad;  // d b_l / d w_l
};

struct CrbReport {
  Eigen::VectorXd bounds;      // variance (or MSE with bias) lower bounds
  std::vector<bool> bounded;   // false where the parameter overlaps a null direction
  int rank = 0;
  Eigen::MatrixXd null_space;  // columns span the numerically null directions
  Eigen::MatrixXd covariance;  // pseudo-inverse of the Fisher matrix
};

/// Diagonal of the pseudo-inverse (eigenvalues below cutoff * lambda_max
/// dropped). Parameters with weight on the null space are flagged unbounded
/// and reported as +inf. With a bias, the bound is (1 - b')^2 [I^+]_ll + b^2.
inline CrbReport crb_report(const FisherMatrix& fisher, const std::optional<CrbBias>& bias = {},
                            const Tolerances& tol = kDefaultTolerances) {
  const Eigen::MatrixXd& f = fisher.entries;
  if (f.rows() != f.cols() || f.rows() < 1) throw DimensionError("crb_report: Fisher must be square");
  const Eigen::Index n = f.rows();
  if (bias && (bias->bias.size() != n || bias->bias_grad.size() != n)) {
    throw DimensionError("crb_report: bias vectors must match the Fisher dimension");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (f + f.transpose()));
  const Eigen::VectorXd& lam = es.eigenvalues();
  const Eigen::MatrixXd& v = es.eigenvectors();
  const double lmax = std::max(lam.cwiseAbs().maxCoeff(), 0.0);
  const double cut = tol.pinv_cutoff * lmax;

  CrbReport rep;
  rep.bounds = Eigen::VectorXd::Zero(n);
  rep.covariance = Eigen::MatrixXd::Zero(n, n);
  rep.bounded.assign(static_cast<std::size_t>(n), true);
  std::vector<Eigen::Index> null_cols;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lam(i) > cut && lam(i) > 0.0) {
      ++rep.rank;
      rep.bounds += v.col(i).cwiseAbs2() / lam(i);
      rep.covariance.noalias() += v.col(i) * v.col(i).transpose() / lam(i);
    } else {
      null_cols.push_back(i);
    }
  }
  rep.null_space.resize(n, static_cast<Eigen::Index>(null_cols.size()));
  for (std::size_t c = 0; c < null_cols.size(); ++c) {
    rep.null_space.col(static_cast<Eigen::Index>(c)) = v.col(null_cols[c]);
  }
  const Eigen::VectorXd null_weight = rep.null_space.rowwise().squaredNorm();
  for (Eigen::Index l = 0; l < n; ++l) {
    if (bias) {
      const double g = 1.0 - bias->bias_grad(l);
      rep.bounds(l) = g * g * rep.bounds(l) + bias->bias(l) * bias->bias(l);
    }
    if (null_weight(l) > std::sqrt(tol.pinv_cutoff)) {
      rep.bounded[l] = false;
      rep.bounds(l) = std::numeric_limits<double>::infinity();
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// D-optimal design

/// log det(F + delta I) for an SPD-after-ridge matrix.
inline double logdet_ridge(const Eigen::MatrixXd& f, double delta) {
  Eigen::MatrixXd a = f;
  a.diagonal().array() += delta;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("logdet: matrix not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

namespace detail {

inline void require_design_model(const Model& model) {
  if (model.kind() != HamiltonianKind::LinearMix || model.is_open()) {
    throw DomainError("design: requires a closed linear-mix model");
  }
}

/// d a / d omega at drive d (M x dim).
inline Eigen::MatrixXd mix_jacobian(const Model& model, const Eigen::Ref<const Eigen::VectorXd>& d) {
  const int m = model.basis().size();
  const int dd = model.drives();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, model.parameter_count());
  for (int k = 0; k < m; ++k) {
    for (int l = 0; l < dd; ++l) b(k, k * dd + l) = d(l);
    b(k, m * dd + k) = 1.0;
  }
  return b;
}

}  // namespace detail

/// Per-shot Fisher matrix of a constant pulse through the mix coefficients:
/// F = B^T (Ja^T W Ja) B.
inline Eigen::MatrixXd fisher_constant_pulse(const Model& model, const ParameterVector& w,
                                             const Eigen::Ref<const Eigen::VectorXd>& d,
                                             double duration,
                                             const Tolerances& tol = kDefaultTolerances) {
  detail::require_design_model(model);
  const MixDerivatives md = mix_derivatives(model, w, d, duration, false, tol);
  const Eigen::VectorXd wts = md.probs.cwiseMax(tol.prob_clip).cwiseInverse();
  const Eigen::MatrixXd b = detail::mix_jacobian(model, d);
  const Eigen::MatrixXd k = md.jac.transpose() * wts.asDiagonal() * md.jac;
  return b.transpose() * k * b;
}

/// Gradient of tr(G F(d)) with respect to the drive amplitudes d, G fixed
/// symmetric. This is d/dd log det(sum F + delta I) with G the inverse.
inline Eigen::VectorXd fisher_drive_gradient(const Model& model, const ParameterVector& w,
                                             const Eigen::Ref<const Eigen::VectorXd>& d,
                                             double duration, const Eigen::MatrixXd& g,
                                             const Tolerances& tol = kDefaultTolerances) {
  detail::require_design_model(model);
  const int m = model.basis().size();
  const int dd = model.drives();
  const int n = model.dim();
  const MixDerivatives md = mix_derivatives(model, w, d, duration, true, tol);
  Eigen::VectorXd wts(n), dw_scale(n);
  for (int q = 0; q < n; ++q) {
    const bool clipped = md.probs(q) <= tol.prob_clip;
    const double p = clipped ? tol.prob_clip : md.probs(q);
    wts(q) = 1.0 / p;
    dw_scale(q) = clipped ? 0.0 : 1.0 / (p * p);  // -dW/dp
  }
  const Eigen::MatrixXd b = detail::mix_jacobian(model, d);
  const Eigen::MatrixXd k = md.jac.transpose() * wts.asDiagonal() * md.jac;
  const Eigen::MatrixXd gb = b * g * b.transpose();  // M x M

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(dd);
  // Explicit dependence of B on d: 2 tr(G B^T K dB/dd_j).
  const Eigen::MatrixXd x = g * b.transpose() * k;  // dim x M
  for (int j = 0; j < dd; ++j) {
    double acc = 0.0;
    for (int kk = 0; kk < m; ++kk) acc += x(kk * dd + j, kk);
    grad(j) += 2.0 * acc;
  }
  // Dependence through a(d): <G_B, dK/da_m> times alpha_mj.
  const Eigen::MatrixXd r = md.jac * gb;  // n x M
  const Eigen::VectorXd diag_rj = (r.cwiseProduct(md.jac)).rowwise().sum();  // (Ja G_B Ja^T)_qq
  Eigen::VectorXd ga = Eigen::VectorXd::Zero(m);
  for (int mm = 0; mm < m; ++mm) {
    double acc = 0.0;
    for (int q = 0; q < n; ++q) {
      acc += 2.0 * wts(q) * md.hess[q].row(mm).dot(r.row(q));
      acc -= dw_scale(q) * md.jac(q, mm) * diag_rj(q);
    }
    ga(mm) = acc;
  }
  for (int j = 0; j < dd; ++j) {
    for (int mm = 0; mm < m; ++mm) grad(j) += ga(mm) * w(mm * dd + j);
  }
  return grad;
}

struct DesignConfig {
  int pulses = 512;
  double power = 1.0;
  double duration = 1.0;
  int steps = 100;
  double lr = 0.01;
  double ridge = kDefaultTolerances.logdet_ridge;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct DesignResult {
  std::vector<ControlPulse> pulses;
  std::vector<double> logdet_trace;  // before the first step, then after each step
};

inline double design_logdet(const Model& model, const ParameterVector& w,
                            const std::vector<ControlPulse>& pulses, double ridge, int threads = 1) {
  return logdet_ridge(fisher_total(model, w, pulses, 1, threads).entries, ridge);
}

/// Rescales all amplitudes so the mean of d^2 over pulses and drives is `power`.
inline void normalize_power(std::vector<ControlPulse>& pulses, double power) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& p : pulses) {
    acc += p.amplitudes.squaredNorm();
    count += static_cast<std::size_t>(p.amplitudes.size());
  }
  if (!(acc > 0.0)) throw NumericalError("normalize_power: all amplitudes are zero");
  const double scale = std::sqrt(power * static_cast<double>(count) / acc);
  for (auto& p : pulses) p.amplitudes *= scale;
}

inline double mean_power(const std::vector<ControlPulse>& pulses) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& p : pulses) {
    acc += p.amplitudes.squaredNorm();
    count += static_cast<std::size_t>(p.amplitudes.size());
  }
  return acc / static_cast<double>(count);
}

/// Adam ascent on log det(sum_i F_i + delta I) over the amplitudes of P
/// constant pulses drawn from N(0, 1), rescaled to the target power after
/// every step.
inline DesignResult design_pulses(const Model& model, const ParameterVector& w,
                                  const DesignConfig& cfg,
                                  const Tolerances& tol = kDefaultTolerances) {
  detail::require_design_model(model);
  model.check_parameters(w);
  if (cfg.pulses < 1 || cfg.steps < 0 || !(cfg.power > 0.0) || !(cfg.lr > 0.0) ||
      !(cfg.duration > 0.0) || !(cfg.ridge > 0.0)) {
    throw DomainError("design_pulses: need P >= 1, steps >= 0, and positive power, lr, T, ridge");
  }
  const int dd = model.drives();
  DesignResult res;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < cfg.pulses; ++i) {
    auto rng = substream(cfg.seed, static_cast<std::uint64_t>(i), kStreamDesign);
    Eigen::VectorXd d(dd);
    for (int l = 0; l < dd; ++l) d(l) = normal(rng);
    res.pulses.push_back(ControlPulse::constant(d, cfg.duration));
  }

  const int dim = model.parameter_count();
  const auto total_fisher = [&]() {
    std::vector<Eigen::MatrixXd> per(res.pulses.size());
    parallel_for(cfg.pulses, cfg.threads, [&](int i) {
      per[i] = fisher_constant_pulse(model, w, res.pulses[i].segment(0), cfg.duration, tol);
    });
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& m : per) f += m;
    return f;
  };

  Eigen::MatrixXd f = total_fisher();
  res.logdet_trace.push_back(logdet_ridge(f, cfg.ridge));
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(cfg.pulses, dd);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(cfg.pulses, dd);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  for (int step = 0; step < cfg.steps; ++step) {
    Eigen::MatrixXd a = f;
    a.diagonal().array() += cfg.ridge;
    const Eigen::MatrixXd g = a.llt().solve(Eigen::MatrixXd::Identity(dim, dim));
    Eigen::MatrixXd grad(cfg.pulses, dd);
    parallel_for(cfg.pulses, cfg.threads, [&](int i) {
      grad.row(i) =
          fisher_drive_gradient(model, w, res.pulses[i].segment(0), cfg.duration, g, tol).transpose();
    });
    b1t *= b1;
    b2t *= b2;
    m1 = b1 * m1 + (1.0 - b1) * grad;
    m2 = b2 * m2 + (1.0 - b2) * grad.cwiseAbs2();
    const Eigen::MatrixXd stepm =
        cfg.lr * (m1 / (1.0 - b1t)).array() / ((m2 / (1.0 - b2t)).array().sqrt() + eps);
    for (int i = 0; i < cfg.pulses; ++i) {
      res.pulses[i].amplitudes.row(0) += stepm.row(i);
    }
    normalize_power(res.pulses, cfg.power);
    f = total_fisher();
    res.logdet_trace.push_back(logdet_ridge(f, cfg.ridge));
  }
  return res;
}

}  // namespace steady
