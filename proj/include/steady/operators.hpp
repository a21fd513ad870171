#pragma once

// Pauli algebra on Q qubits. Qubit 1 is the most significant bit of the
// computational-basis index, so |q1 q2 q3> has index 4*q1 + 2*q2 + q3.

#include <bit>
#include <string>
#include <vector>

#include "steady/linalg.hpp"

namespace steady::ops {

inline ComplexMatrix identity(int dim) { return ComplexMatrix::Identity(dim, dim); }

inline ComplexMatrix pauli_x() {
  ComplexMatrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

inline ComplexMatrix pauli_y() {
  ComplexMatrix m(2, 2);
  m << 0, cplx(0, -1), cplx(0, 1), 0;
  return m;
}

inline ComplexMatrix pauli_z() {
  ComplexMatrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

/// |0><1|: takes the excited state |1> to the ground state |0>.
inline ComplexMatrix lowering() {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 1) = 1.0;
  return m;
}

inline ComplexMatrix raising() { return lowering().adjoint(); }

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  const Eigen::Index n = a.rows() * b.rows();
  const Eigen::Index m = a.cols() * b.cols();
  if (n > kMaxDim || m > kMaxDim) throw DimensionError("kron: result exceeds 16 dimensions");
  ComplexMatrix out(n, m);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// Single-qubit operator `op` acting on qubit `q` (0-based) of `qubits`.
inline ComplexMatrix on_qubit(const ComplexMatrix& op, int q, int qubits) {
  if (q < 0 || q >= qubits) throw DomainError("on_qubit: qubit index out of range");
  ComplexMatrix out = (q == 0) ? op : identity(2);
  for (int k = 1; k < qubits; ++k) out = kron(out, k == q ? op : identity(2));
  return out;
}

/// sigma_a^+ sigma_b^- + h.c.
inline ComplexMatrix exchange(int a, int b, int qubits) {
  const ComplexMatrix up = on_qubit(raising(), a, qubits) * on_qubit(lowering(), b, qubits);
  return up + up.adjoint();
}

inline int hamming_distance(unsigned a, unsigned b) {
  return std::popcount(a ^ b);
}

}  // namespace steady::ops
