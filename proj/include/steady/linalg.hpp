#pragma once

// Dense complex linear algebra for systems of at most four qubits:
// Hermitian eigendecomposition, propagation by e^{-iHT}, and directional
// derivatives of the propagator via divided differences in the eigenbasis.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <sstream>
#include <string>

#include "steady/constants.hpp"
#include "steady/errors.hpp"

namespace steady {

using cplx = std::complex<double>;

/// Largest supported Hilbert-space dimension (Q <= 4).
inline constexpr int kMaxDim = 16;

using ComplexMatrix =
    Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using StateVector = Eigen::Matrix<cplx, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using SmallRealMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using SmallRealVector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

namespace detail {

inline void require_square(const ComplexMatrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    throw DimensionError(std::string(what) + ": matrix must be square and non-empty");
  }
}

inline double max_hermiticity_defect(const ComplexMatrix& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

}  // namespace detail

/// A dense Hermitian matrix. Construction through `from_matrix` validates
/// Hermiticity; `trusted` is for values Hermitian by construction (real
/// linear combinations of Hermitian operands).
class HermitianOperator {
 public:
  struct TrustedTag {};

  HermitianOperator() = default;
  HermitianOperator(ComplexMatrix m, TrustedTag) : m_(std::move(m)) {}

  static HermitianOperator from_matrix(const ComplexMatrix& m,
                                       const Tolerances& tol = kDefaultTolerances) {
    detail::require_square(m, "HermitianOperator");
    if (!m.allFinite()) throw DomainError("HermitianOperator: non-finite entries");
    const double defect = detail::max_hermiticity_defect(m);
    if (defect > tol.hermiticity) {
      std::ostringstream os;
      os << "HermitianOperator: matrix is not Hermitian (max defect " << defect << ")";
      throw DomainError(os.str());
    }
    return HermitianOperator(m, TrustedTag{});
  }

  static HermitianOperator trusted(ComplexMatrix m) { return {std::move(m), TrustedTag{}}; }

  static HermitianOperator zero(int dim) {
    return trusted(ComplexMatrix::Zero(dim, dim));
  }

  [[nodiscard]] const ComplexMatrix& matrix() const { return m_; }
  [[nodiscard]] int dim() const { return static_cast<int>(m_.rows()); }

 private:
  ComplexMatrix m_;
};

/// Eigenvalues ascending; eigenvectors stored as columns of a unitary matrix.
struct EigenDecomposition {
  SmallRealVector eigenvalues;
  ComplexMatrix eigenvectors;

  [[nodiscard]] ComplexMatrix reconstruct() const {
    return eigenvectors * eigenvalues.cast<cplx>().asDiagonal() * eigenvectors.adjoint();
  }
};

/// H = sym + i * antisym.
inline HermitianOperator hermitian_from_parts(const Eigen::Ref<const Eigen::MatrixXd>& sym,
                                              const Eigen::Ref<const Eigen::MatrixXd>& antisym,
                                              const Tolerances& tol = kDefaultTolerances) {
  if (sym.rows() != sym.cols() || antisym.rows() != antisym.cols() ||
      sym.rows() != antisym.rows() || sym.rows() < 1) {
    throw DimensionError("hermitian_from_parts: parts must be square with equal dims");
  }
  if (sym.rows() > kMaxDim) throw DimensionError("hermitian_from_parts: dim exceeds 16");
  if ((sym - sym.transpose()).cwiseAbs().maxCoeff() > tol.symmetry) {
    throw DomainError("hermitian_from_parts: symmetric part is not symmetric");
  }
  if ((antisym + antisym.transpose()).cwiseAbs().maxCoeff() > tol.symmetry) {
    throw DomainError("hermitian_from_parts: antisymmetric part is not antisymmetric");
  }
  ComplexMatrix h(sym.rows(), sym.cols());
  for (Eigen::Index i = 0; i < sym.rows(); ++i) {
    for (Eigen::Index j = 0; j < sym.cols(); ++j) h(i, j) = cplx(sym(i, j), antisym(i, j));
  }
  return HermitianOperator::trusted(std::move(h));
}

inline EigenDecomposition eig_hermitian(const HermitianOperator& h) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h.matrix(), Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    std::ostringstream os;
    os << "eig_hermitian: eigensolver did not converge (dim " << h.dim() << ", |H|_F "
       << h.matrix().norm() << ", max |H_ij| " << h.matrix().cwiseAbs().maxCoeff() << ")";
    throw NumericalError(os.str());
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Divided difference of f(x) = exp(-i x t) at (x, y). Written through sinc
/// so that nearby eigenvalues do not cancel; the analytic limit
/// -i t exp(-i x t) is used below `gap`.
inline cplx exp_divided_difference(double x, double y, double t,
                                   double gap = kDefaultTolerances.degenerate_gap) {
  const double d = x - y;
  if (std::abs(d) < gap) return cplx(0.0, -t) * std::exp(cplx(0.0, -x * t));
  const double half = 0.5 * d * t;
  const double sinc = std::sin(half) / half;
  return cplx(0.0, -t) * std::exp(cplx(0.0, -0.5 * (x + y) * t)) * sinc;
}

/// Second divided difference f[x, y, z] of f(x) = exp(-i x t).
inline cplx exp_second_divided_difference(double x, double y, double z, double t,
                                          const Tolerances& tol = kDefaultTolerances) {
  if (x > y) std::swap(x, y);
  if (y > z) std::swap(y, z);
  if (x > y) std::swap(x, y);
  if (z - x < tol.degenerate_gap2) {
    const double mean = (x + y + z) / 3.0;
    return -0.5 * t * t * std::exp(cplx(0.0, -mean * t));
  }
  return (exp_divided_difference(x, y, t, tol.degenerate_gap) -
          exp_divided_difference(y, z, t, tol.degenerate_gap)) /
         (x - z);
}

/// e^{-iHT} held in factored form so that propagation, the Frechet
/// derivative, and its adjoint all reuse one eigendecomposition.
class UnitaryPropagator {
 public:
  UnitaryPropagator(const HermitianOperator& h, double t,
                    const Tolerances& tol = kDefaultTolerances)
      : eig_(eig_hermitian(h)), t_(t), tol_(tol) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("UnitaryPropagator: T must be >= 0");
    const int n = h.dim();
    phases_.resize(n);
    for (int i = 0; i < n; ++i) phases_(i) = std::exp(cplx(0.0, -eig_.eigenvalues(i) * t));
    divided_.resize(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        divided_(i, j) = exp_divided_difference(eig_.eigenvalues(i), eig_.eigenvalues(j), t,
                                                tol.degenerate_gap);
      }
    }
  }

  [[nodiscard]] int dim() const { return static_cast<int>(phases_.size()); }
  [[nodiscard]] double duration() const { return t_; }
  [[nodiscard]] const EigenDecomposition& eig() const { return eig_; }
  [[nodiscard]] const StateVector& phases() const { return phases_; }
  /// Matrix of divided differences f[lambda_i, lambda_j].
  [[nodiscard]] const ComplexMatrix& divided() const { return divided_; }

  [[nodiscard]] ComplexMatrix matrix() const {
    return eig_.eigenvectors * phases_.asDiagonal() * eig_.eigenvectors.adjoint();
  }

  [[nodiscard]] StateVector apply(const StateVector& psi) const {
    StateVector c = eig_.eigenvectors.adjoint() * psi;
    c.array() *= phases_.array();
    return eig_.eigenvectors * c;
  }

  /// d/de e^{-i(H + e dH)T} at e = 0.
  [[nodiscard]] ComplexMatrix frechet(const ComplexMatrix& dh) const {
    if (dh.rows() != dim() || dh.cols() != dim()) {
      throw DimensionError("dexp_frechet: direction has wrong dimension");
    }
    const auto& v = eig_.eigenvectors;
    ComplexMatrix x = v.adjoint() * dh * v;
    x.array() *= divided_.array();
    return v * x * v.adjoint();
  }

  /// Adjoint of psi_in -> w^T (dU psi_in) as a Hamiltonian-space cotangent:
  /// returns Z with  w^T dU psi_in = tr(Z dH) / 2  for every direction dH, so
  /// the real gradient of 2 Re(w^T dU psi_in) is Re tr(Z dH).
  [[nodiscard]] ComplexMatrix frechet_adjoint(const StateVector& psi_in,
                                              const StateVector& w) const {
    const auto& v = eig_.eigenvectors;
    const StateVector c = v.adjoint() * psi_in;
    const StateVector r = v.transpose() * w;
    ComplexMatrix q(dim(), dim());
    for (int i = 0; i < dim(); ++i) {
      for (int j = 0; j < dim(); ++j) q(i, j) = divided_(i, j) * r(i) * c(j);
    }
    return 2.0 * (v * q.transpose() * v.adjoint());
  }

 private:
  EigenDecomposition eig_;
  double t_;
  Tolerances tol_;
  StateVector phases_;
  ComplexMatrix divided_;
};

inline StateVector evolve_unitary(const HermitianOperator& h, double t, const StateVector& psi0) {
  if (psi0.size() != h.dim()) throw DimensionError("evolve_unitary: state has wrong dimension");
  return UnitaryPropagator(h, t).apply(psi0);
}

inline ComplexMatrix dexp_frechet(const HermitianOperator& h, double t,
                                  const HermitianOperator& dh) {
  if (h.dim() != dh.dim()) throw DimensionError("dexp_frechet: H and dH differ in dimension");
  return UnitaryPropagator(h, t).frechet(dh.matrix());
}

/// |0...0> in a space of the given dimension.
inline StateVector ground_state(int dim) {
  StateVector psi = StateVector::Zero(dim);
  psi(0) = 1.0;
  return psi;
}

inline StateVector basis_state(int dim, int index) {
  StateVector psi = StateVector::Zero(dim);
  psi(index) = 1.0;
  return psi;
}

}  // namespace steady
