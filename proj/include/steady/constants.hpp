#pragma once

namespace steady {

/// Numerical tolerances shared across the library. Tests may construct a
/// tightened copy and pass it where an overload accepts one.
struct Tolerances {
  double hermiticity = 1e-12;        // |H_ij - conj(H_ji)|
  double symmetry = 1e-12;           // (anti)symmetric input parts
  double degenerate_gap = 1e-10;     // first divided difference switches to f'
  double degenerate_gap2 = 1e-7;     // second divided difference switches to f''/2
  double prob_clip = 1e-12;          // floor for log / 1/p terms
  double prob_sum = 1e-9;            // accepted deviation of sum(p) from 1
  double psd_diagnostic = 1e-7;      // density-matrix positivity report
  double negative_population = 1e-6;  // RK4 undershoot clipped in simulated truth
  double pinv_cutoff = 1e-10;        // relative to largest Fisher eigenvalue
  double logdet_ridge = 1e-8;        // ridge added inside D-optimal log det
};

inline constexpr Tolerances kDefaultTolerances{};

}  // namespace steady
