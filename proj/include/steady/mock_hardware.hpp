#pragma once

// Simulated ground truth: the 3-qubit test system (Pauli drives on each qubit
// plus nearest-neighbour exchange), intrinsic SPAM, and multinomial sampling.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "steady/errors.hpp"
#include "steady/models.hpp"
#include "steady/operators.hpp"

namespace steady {

// ---------------------------------------------------------------------------
// Random streams. SplitMix64 mixes (seed, stream index) into the seed of an
// independent mt19937_64, so pulse i never shares state with pulse j.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index,
                                 std::uint64_t domain = 0) {
  const std::uint64_t k = splitmix64(splitmix64(seed ^ splitmix64(domain)) + index);
  std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  return std::mt19937_64(seq);
}

// Stream domains, so the same (seed, index) gives distinct streams per use.
inline constexpr std::uint64_t kStreamTruth = 1;
inline constexpr std::uint64_t kStreamPulses = 2;
inline constexpr std::uint64_t kStreamValidation = 3;
inline constexpr std::uint64_t kStreamFit = 4;
inline constexpr std::uint64_t kStreamDesign = 5;

// ---------------------------------------------------------------------------

/// Basis order: Z1 Z2 Z3, X1 X2 X3, Y1 Y2 Y3, then exchange 12, 23, 31.
inline OperatorBasis test_system_basis(int qubits = 3) {
  if (qubits < 2 || qubits > 4) throw DomainError("test_system_basis: qubits must be in [2, 4]");
  OperatorBasis b;
  const auto add = [&](const ComplexMatrix& m, std::string label) {
    b.ops.push_back(HermitianOperator::trusted(m));
    b.labels.push_back(std::move(label));
  };
  for (int q = 0; q < qubits; ++q) add(ops::on_qubit(ops::pauli_z(), q, qubits), "Z" + std::to_string(q + 1));
  for (int q = 0; q < qubits; ++q) add(ops::on_qubit(ops::pauli_x(), q, qubits), "X" + std::to_string(q + 1));
  for (int q = 0; q < qubits; ++q) add(ops::on_qubit(ops::pauli_y(), q, qubits), "Y" + std::to_string(q + 1));
  // Nearest neighbours on a ring; for two qubits the single pair appears once.
  const int pairs = qubits == 2 ? 1 : qubits;
  for (int q = 0; q < pairs; ++q) {
    const int r = (q + 1) % qubits;
    add(ops::exchange(q, r, qubits), std::to_string(q + 1) + std::to_string(r + 1));
  }
  return b;
}

struct TrueSystem {
  int qubits = 3;
  std::uint64_t seed = 0;
  OperatorBasis basis;
  LinearMixParams truth;
  Eigen::VectorXd kappa, epsilon, eta;
  std::optional<double> decay;  // per-qubit amplitude-damping strength Gamma

  [[nodiscard]] int dim() const { return 1 << qubits; }
  [[nodiscard]] int drives() const { return static_cast<int>(truth.alpha.cols()); }

  /// Closed-system model in the same basis.
  [[nodiscard]] Model hamiltonian_model() const { return Model::linear_mix(basis, drives()); }

  /// Open model with per-qubit lowering operators.
  [[nodiscard]] Model lindblad_model(LindbladOptions options = {}) const {
    return hamiltonian_model().with_collapse(decay_operators(), options);
  }

  [[nodiscard]] std::vector<ComplexMatrix> decay_operators() const {
    std::vector<ComplexMatrix> out;
    for (int q = 0; q < qubits; ++q) out.push_back(ops::on_qubit(ops::lowering(), q, qubits));
    return out;
  }

  [[nodiscard]] ParameterVector omega() const { return flatten(truth); }

  /// Generating model and its parameters (open when a decay is set).
  [[nodiscard]] Model generating_model(LindbladOptions options = {}) const {
    return decay ? lindblad_model(options) : hamiltonian_model();
  }
  [[nodiscard]] ParameterVector generating_omega() const {
    if (!decay) return omega();
    ParameterVector w(omega().size() + qubits);
    w << omega(), Eigen::VectorXd::Constant(qubits, *decay);
    return w;
  }
};

/// kappa, epsilon, eta ~ U[0.5, 1.5] from `seed`; alpha = diag(kappa);
/// beta nonzero on the Z rows (epsilon) and the exchange rows (eta).
inline TrueSystem build_true_system(int qubits = 3, std::uint64_t seed = 20200101,
                                    std::optional<double> decay = std::nullopt) {
  TrueSystem sys;
  sys.qubits = qubits;
  sys.seed = seed;
  sys.basis = test_system_basis(qubits);
  const int m = sys.basis.size();
  const int pairs = m - 3 * qubits;
  auto rng = substream(seed, 0, kStreamTruth);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  sys.kappa.resize(m);
  sys.epsilon.resize(qubits);
  sys.eta.resize(pairs);
  for (int k = 0; k < m; ++k) sys.kappa(k) = u(rng);
  for (int q = 0; q < qubits; ++q) sys.epsilon(q) = u(rng);
  for (int q = 0; q < pairs; ++q) sys.eta(q) = u(rng);
  sys.truth.alpha = sys.kappa.asDiagonal();
  sys.truth.beta = Eigen::VectorXd::Zero(m);
  sys.truth.beta.head(qubits) = sys.epsilon;
  sys.truth.beta.tail(pairs) = sys.eta;
  if (decay) {
    if (!(*decay >= 0.0)) throw DomainError("build_true_system: decay must be >= 0");
    sys.decay = decay;
  }
  return sys;
}

// ---------------------------------------------------------------------------
// SPAM

struct SpamModel {
  double s = 0.0;

  void validate(int qubits) const {
    if (!(s >= 0.0) || !(1.0 - qubits * s > 0.0)) {
      throw DomainError("SpamModel: need 0 <= s < 1/Q (got s = " + std::to_string(s) + ")");
    }
  }
};

/// s rounded to a multiple of 2^-48. Every partial sum of the SPAM weights is
/// then representable, so columns and mixtures sum to exactly 1 in any order.
inline double dyadic_spam(double s) { return std::ldexp(std::round(std::ldexp(s, 48)), -48); }

/// (1 - Qs) I + s [Hamming(i, j) == 1].
inline Eigen::MatrixXd spam_confusion_matrix(int qubits, double s) {
  SpamModel{s}.validate(qubits);
  s = dyadic_spam(s);
  const int n = 1 << qubits;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int h = ops::hamming_distance(static_cast<unsigned>(i), static_cast<unsigned>(j));
      if (h == 0) m(i, j) = 1.0 - qubits * s;
      else if (h == 1) m(i, j) = s;
    }
  }
  return m;
}

/// Preparation mixture weights: (1 - Qs) on |0...0>, s on each single flip.
inline std::vector<std::pair<int, double>> spam_preparation(int qubits, double s) {
  s = dyadic_spam(s);
  std::vector<std::pair<int, double>> branches{{0, 1.0 - qubits * s}};
  if (s > 0.0) {
    for (int q = 0; q < qubits; ++q) branches.emplace_back(1 << (qubits - 1 - q), s);
  }
  return branches;
}

/// Populations the hardware would report for one pulse: the preparation
/// branches are propagated separately, mixed, then passed through the readout
/// confusion matrix.
inline Eigen::VectorXd true_probs(const TrueSystem& sys, const SpamModel& spam,
                                  const ControlPulse& pulse, LindbladOptions options = {}) {
  spam.validate(sys.qubits);
  const Model model = sys.generating_model(options);
  const ParameterVector w = sys.generating_omega();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(sys.dim());
  for (const auto& [index, weight] : spam_preparation(sys.qubits, spam.s)) {
    p += weight * predict_probs(model, w, pulse, index);
  }
  if (spam.s > 0.0) p = spam_confusion_matrix(sys.qubits, spam.s) * p;
  if (sys.decay) {
    // Explicit integrators can leave populations a hair below zero.
    if (p.minCoeff() < -kDefaultTolerances.negative_population) {
      throw IntegrationError("true_probs: population " + std::to_string(p.minCoeff()) +
                             " is negative beyond tolerance (increase the step count)");
    }
    p = p.cwiseMax(0.0);
    p /= p.sum();
  }
  return p;
}

// ---------------------------------------------------------------------------
// Sampling

inline void validate_probabilities(const Eigen::Ref<const Eigen::VectorXd>& p,
                                   const Tolerances& tol = kDefaultTolerances) {
  if (p.size() < 1 || !p.allFinite()) throw DomainError("probabilities: empty or non-finite");
  if ((p.array() < -tol.prob_sum).any()) throw DomainError("probabilities: negative entry");
  if (std::abs(p.sum() - 1.0) > tol.prob_sum) {
    throw DomainError("probabilities: entries sum to " + std::to_string(p.sum()));
  }
}

/// Multinomial draw by S sequential CDF inversions.
template <class Rng>
Eigen::VectorXi sample_measurements(const Eigen::Ref<const Eigen::VectorXd>& p, int shots,
                                    Rng& rng) {
  validate_probabilities(p);
  if (shots < 1) throw DomainError("sample_measurements: shots must be >= 1");
  const Eigen::Index n = p.size();
  std::vector<double> cdf(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    acc += std::max(0.0, p(k));
    cdf[k] = acc;
  }
  std::uniform_real_distribution<double> u(0.0, acc);
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(n);
  for (int s = 0; s < shots; ++s) {
    const double x = u(rng);
    Eigen::Index k = 0;
    while (k < n - 1 && x >= cdf[k]) ++k;
    // Never land on a zero-probability outcome through rounding at the edge.
    while (p(k) <= 0.0 && k > 0) --k;
    ++counts(k);
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Datasets

struct Dataset {
  std::uint64_t seed = 0;
  double duration = 1.0;
  int shots = 0;  // 0 encodes exact probabilities (S = infinity)
  double spam_s = 0.0;
  std::string system = "steady-q3";
  std::vector<ControlPulse> pulses;
  Eigen::MatrixXi counts;    // P x 2^Q, only when shots > 0
  Eigen::MatrixXd estimates;  // P x 2^Q empirical (or exact) populations

  [[nodiscard]] int size() const { return static_cast<int>(pulses.size()); }
  [[nodiscard]] bool exact() const { return shots == 0; }
  [[nodiscard]] int outcomes() const { return static_cast<int>(estimates.cols()); }

  void validate(const Tolerances& tol = kDefaultTolerances) const {
    if (pulses.empty()) throw DomainError("Dataset: no pulses");
    if (estimates.rows() != size()) throw DimensionError("Dataset: one observation row per pulse");
    for (int i = 0; i < size(); ++i) {
      if (std::abs(estimates.row(i).sum() - 1.0) > tol.prob_sum) {
        throw DomainError("Dataset: observation row " + std::to_string(i) + " does not sum to 1");
      }
    }
    if (!exact()) {
      if (counts.rows() != size() || counts.cols() != outcomes()) {
        throw DimensionError("Dataset: counts shape mismatch");
      }
      for (int i = 0; i < size(); ++i) {
        if (counts.row(i).sum() != shots) {
          throw DomainError("Dataset: counts row " + std::to_string(i) + " does not sum to S");
        }
      }
    }
  }
};

/// P pulses of i.i.d. N(0, 1) amplitudes with a per-pulse substream shared by
/// the amplitude draw and the shot sampling. `shots == 0` records exact
/// probabilities.
inline Dataset generate_dataset(const TrueSystem& sys, const SpamModel& spam, int pulses,
                                int shots, double duration, std::uint64_t seed,
                                LindbladOptions options = {},
                                std::uint64_t domain = kStreamPulses) {
  if (pulses < 1) throw DomainError("generate_dataset: P must be >= 1");
  if (shots < 0) throw DomainError("generate_dataset: S must be >= 1 (or 0 for exact)");
  spam.validate(sys.qubits);
  Dataset ds;
  ds.seed = seed;
  ds.duration = duration;
  ds.shots = shots;
  ds.spam_s = spam.s;
  ds.system = "steady-q" + std::to_string(sys.qubits) + "-seed" + std::to_string(sys.seed) +
              (sys.decay ? "-decay" + std::to_string(*sys.decay) : "");
  const int n = sys.dim();
  const int d = sys.drives();
  ds.estimates.resize(pulses, n);
  if (shots > 0) ds.counts.resize(pulses, n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < pulses; ++i) {
    auto rng = substream(seed, static_cast<std::uint64_t>(i), domain);
    Eigen::VectorXd amp(d);
    for (int l = 0; l < d; ++l) amp(l) = normal(rng);
    ds.pulses.push_back(ControlPulse::constant(amp, duration));
    const Eigen::VectorXd p = true_probs(sys, spam, ds.pulses.back(), options);
    if (shots == 0) {
      ds.estimates.row(i) = p.transpose();
    } else {
      const Eigen::VectorXi c = sample_measurements(p, shots, rng);
      ds.counts.row(i) = c.transpose();
      ds.estimates.row(i) = c.cast<double>().transpose() / shots;
    }
  }
  return ds;
}

/// Same truth, new observations for a caller-supplied pulse list.
inline Dataset measure_pulses(const TrueSystem& sys, const SpamModel& spam,
                              const std::vector<ControlPulse>& pulses, int shots,
                              std::uint64_t seed, LindbladOptions options = {}) {
  if (pulses.empty()) throw DomainError("measure_pulses: no pulses");
  Dataset ds;
  ds.seed = seed;
  ds.duration = pulses.front().duration;
  ds.shots = shots;
  ds.spam_s = spam.s;
  ds.pulses = pulses;
  const int n = sys.dim();
  ds.estimates.resize(static_cast<Eigen::Index>(pulses.size()), n);
  if (shots > 0) ds.counts.resize(static_cast<Eigen::Index>(pulses.size()), n);
  for (std::size_t i = 0; i < pulses.size(); ++i) {
    auto rng = substream(seed, i, kStreamPulses);
    const Eigen::VectorXd p = true_probs(sys, spam, pulses[i], options);
    const auto row = static_cast<Eigen::Index>(i);
    if (shots == 0) {
      ds.estimates.row(row) = p.transpose();
    } else {
      const Eigen::VectorXi c = sample_measurements(p, shots, rng);
      ds.counts.row(row) = c.transpose();
      ds.estimates.row(row) = c.cast<double>().transpose() / shots;
    }
  }
  return ds;
}

}  // namespace steady
