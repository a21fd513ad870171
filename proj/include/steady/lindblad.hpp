#pragma once

// Lindblad master-equation propagation in real Hermitian coordinates.
//
// A Hermitian n x n matrix rho is stored as n^2 reals indexed by m = i*n + j:
//   i == j : rho_ii
//   i <  j : Re rho_ij
//   i >  j : Im rho_ji
// The Lindbladian then acts as a real n^2 x n^2 matrix S. For a generator that
// is constant over a segment, one explicit Runge-Kutta step of size h is the
// polynomial map r -> P(hS) r (P(z) = 1 + z for Euler, 1 + z + z^2/2 + z^3/6 +
// z^4/24 for RK4), so each segment builds P(hS) once and applies it per step.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "steady/errors.hpp"
#include "steady/linalg.hpp"

namespace steady {

enum class Integrator { Euler, RK4 };

inline int integrator_order(Integrator method) { return method == Integrator::RK4 ? 4 : 1; }

namespace coords {

inline int size(int n) { return n * n; }

inline Eigen::VectorXd from_hermitian(const ComplexMatrix& rho) {
  const int n = static_cast<int>(rho.rows());
  Eigen::VectorXd r(n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) r(i * n + j) = rho(i, i).real();
      else if (i < j) r(i * n + j) = rho(i, j).real();
      else r(i * n + j) = rho(j, i).imag();
    }
  }
  return r;
}

inline ComplexMatrix to_hermitian(const Eigen::Ref<const Eigen::VectorXd>& r, int n) {
  ComplexMatrix rho(n, n);
  for (int i = 0; i < n; ++i) {
    rho(i, i) = r(i * n + i);
    for (int j = i + 1; j < n; ++j) {
      rho(i, j) = cplx(r(i * n + j), r(j * n + i));
      rho(j, i) = std::conj(rho(i, j));
    }
  }
  return rho;
}

/// Basis matrix B_m such that rho = sum_m r_m B_m.
inline ComplexMatrix basis(int m, int n) {
  const int i = m / n;
  const int j = m % n;
  ComplexMatrix b = ComplexMatrix::Zero(n, n);
  if (i == j) {
    b(i, i) = 1.0;
  } else if (i < j) {
    b(i, j) = 1.0;
    b(j, i) = 1.0;
  } else {
    b(j, i) = cplx(0.0, 1.0);
    b(i, j) = cplx(0.0, -1.0);
  }
  return b;
}

/// The Hermitian mu with  sum_m u_m coords_m(X) = Re tr(mu X)  for Hermitian X.
inline ComplexMatrix dual(const Eigen::Ref<const Eigen::VectorXd>& u, int n) {
  ComplexMatrix mu(n, n);
  for (int i = 0; i < n; ++i) {
    mu(i, i) = u(i * n + i);
    for (int j = i + 1; j < n; ++j) {
      mu(i, j) = 0.5 * cplx(u(i * n + j), u(j * n + i));
      mu(j, i) = std::conj(mu(i, j));
    }
  }
  return mu;
}

}  // namespace coords

/// Columns are coords(-i [H, B_m]).
inline Eigen::MatrixXd commutator_superop(const ComplexMatrix& h) {
  const int n = static_cast<int>(h.rows());
  Eigen::MatrixXd s(n * n, n * n);
  for (int m = 0; m < n * n; ++m) {
    const ComplexMatrix b = coords::basis(m, n);
    const ComplexMatrix c = cplx(0.0, -1.0) * (h * b - b * h);
    s.col(m) = coords::from_hermitian(c);
  }
  return s;
}

/// Columns are coords(L B_m L^dag - {L^dag L, B_m} / 2).
inline Eigen::MatrixXd dissipator_superop(const ComplexMatrix& l) {
  const int n = static_cast<int>(l.rows());
  const ComplexMatrix ldl = l.adjoint() * l;
  Eigen::MatrixXd s(n * n, n * n);
  for (int m = 0; m < n * n; ++m) {
    const ComplexMatrix b = coords::basis(m, n);
    const ComplexMatrix d = l * b * l.adjoint() - 0.5 * (ldl * b + b * ldl);
    s.col(m) = coords::from_hermitian(d);
  }
  return s;
}

/// Z such that <G, commutator_superop(dH)>_F = Re tr(Z dH) for every Hermitian dH.
inline ComplexMatrix commutator_superop_adjoint(const Eigen::MatrixXd& g, int n) {
  ComplexMatrix z = ComplexMatrix::Zero(n, n);
  for (int m = 0; m < n * n; ++m) {
    const ComplexMatrix b = coords::basis(m, n);
    const ComplexMatrix mu = coords::dual(g.col(m), n);
    z += cplx(0.0, -1.0) * (b * mu - mu * b);
  }
  return z;
}

/// One-step map P(hS) evaluated in Horner form, keeping the nested factors
/// Y_k = I + (h/k) S Y_{k+1} for the reverse pass.
class StepMap {
 public:
  StepMap(Eigen::MatrixXd s, double h, Integrator method)
      : s_(std::move(s)), h_(h), order_(integrator_order(method)) {
    const Eigen::Index d = s_.rows();
    nested_.resize(order_ + 1);
    nested_[order_] = Eigen::MatrixXd::Identity(d, d);
    for (int k = order_; k >= 1; --k) {
      Eigen::MatrixXd y = (k == order_) ? Eigen::MatrixXd((h_ / k) * s_)
                                        : Eigen::MatrixXd((h_ / k) * (s_ * nested_[k]));
      y.diagonal().array() += 1.0;
      nested_[k - 1] = std::move(y);
    }
  }

  /// Y_1 = P(hS). nested_[k-1] holds Y_k.
  [[nodiscard]] const Eigen::MatrixXd& phi() const { return nested_[0]; }
  [[nodiscard]] const Eigen::MatrixXd& generator() const { return s_; }

  /// Pulls a cotangent of P(hS) back to a cotangent of S.
  [[nodiscard]] Eigen::MatrixXd generator_cotangent(const Eigen::MatrixXd& g_phi) const {
    Eigen::MatrixXd g_s = Eigen::MatrixXd::Zero(s_.rows(), s_.cols());
    Eigen::MatrixXd g_y = g_phi;
    for (int k = 1; k <= order_; ++k) {
      const double c = h_ / k;
      if (k == order_) {
        g_s += c * g_y;
      } else {
        g_s.noalias() += c * (g_y * nested_[k].transpose());
        g_y = c * (s_.transpose() * g_y);
      }
    }
    return g_s;
  }

 private:
  Eigen::MatrixXd s_;
  double h_;
  int order_;
  std::vector<Eigen::MatrixXd> nested_;
};

/// Trace and smallest eigenvalue of a density matrix. Explicit integrators
/// do not preserve positivity exactly; `positive` reports min eig >= -tol.
struct DensityDiagnostics {
  double trace = 0.0;
  double min_eigenvalue = 0.0;
  bool positive = true;
};

inline DensityDiagnostics density_diagnostics(const ComplexMatrix& rho,
                                              const Tolerances& tol = kDefaultTolerances) {
  DensityDiagnostics d;
  d.trace = rho.trace().real();
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(rho, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("density_diagnostics: eigensolver failed");
  d.min_eigenvalue = solver.eigenvalues()(0);
  d.positive = d.min_eigenvalue >= -tol.psd_diagnostic;
  return d;
}

namespace detail {

inline void require_finite_state(const Eigen::VectorXd& r, int step) {
  if (!r.allFinite()) {
    throw IntegrationError("evolve_lindblad: non-finite state after step " +
                           std::to_string(step) + " (reduce the step size)");
  }
}

}  // namespace detail

}  // namespace steady
