#pragma once

// Parameterized dynamical models: omega -> H(omega; d) (and optionally a
// Lindbladian), forward prediction of Born probabilities from |0...0>, and
// exact parameter gradients.
//
// Flat parameter layout (ParameterVector):
//   linear mix : alpha (M x D, row-major), then beta (M)
//   general    : for each drive k = 1..D the block of sigma_k, then the block
//                of h; a block is the symmetric part's upper triangle (i <= j,
//                row-major) followed by the antisymmetric part's strict upper
//                triangle (i < j, row-major), n^2 reals in total
//   open system: the Hamiltonian layout above, then one strength per
//                collapse operator

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "steady/constants.hpp"
#include "steady/errors.hpp"
#include "steady/lindblad.hpp"
#include "steady/linalg.hpp"

namespace steady {

using ParameterVector = Eigen::VectorXd;

struct OperatorBasis {
  std::vector<HermitianOperator> ops;
  std::vector<std::string> labels;

  [[nodiscard]] int size() const { return static_cast<int>(ops.size()); }
  [[nodiscard]] int dim() const { return ops.empty() ? 0 : ops.front().dim(); }

  void validate() const {
    if (ops.empty()) throw DomainError("OperatorBasis: needs at least one operator");
    if (labels.size() != ops.size()) throw DimensionError("OperatorBasis: one label per operator");
    for (const auto& op : ops) {
      if (op.dim() != dim()) throw DimensionError("OperatorBasis: operators differ in dimension");
    }
  }
};

struct LinearMixParams {
  Eigen::MatrixXd alpha;  // M x D drive mixing
  Eigen::VectorXd beta;   // M drift
};

struct GeneralParams {
  Eigen::MatrixXd h_sym, h_antisym;
  std::vector<Eigen::MatrixXd> sigma_sym, sigma_antisym;  // one pair per drive
};

struct LindbladParams {
  std::variant<LinearMixParams, GeneralParams> hamiltonian;
  std::vector<ComplexMatrix> collapse_ops;
  Eigen::VectorXd strengths;
};

/// Constant (one row) or piecewise-constant (Theta rows) drive amplitudes
/// applied for a total duration T; each row lasts T / Theta.
struct ControlPulse {
  Eigen::MatrixXd amplitudes;  // Theta x D
  double duration = 1.0;

  static ControlPulse constant(const Eigen::Ref<const Eigen::VectorXd>& d, double duration) {
    ControlPulse p;
    p.amplitudes = d.transpose();
    p.duration = duration;
    p.validate();
    return p;
  }

  static ControlPulse piecewise(Eigen::MatrixXd schedule, double duration) {
    ControlPulse p;
    p.amplitudes = std::move(schedule);
    p.duration = duration;
    p.validate();
    return p;
  }

  [[nodiscard]] int segments() const { return static_cast<int>(amplitudes.rows()); }
  [[nodiscard]] int drives() const { return static_cast<int>(amplitudes.cols()); }
  [[nodiscard]] bool is_constant() const { return segments() == 1; }
  [[nodiscard]] double segment_duration() const { return duration / segments(); }
  [[nodiscard]] Eigen::VectorXd segment(int s) const { return amplitudes.row(s).transpose(); }

  void validate() const {
    if (amplitudes.rows() < 1) throw DomainError("ControlPulse: needs at least one segment");
    if (!amplitudes.allFinite()) throw DomainError("ControlPulse: non-finite amplitude");
    if (!(duration > 0.0) || !std::isfinite(duration)) {
      throw DomainError("ControlPulse: duration must be positive");
    }
  }
};

enum class HamiltonianKind { LinearMix, General };

struct LindbladOptions {
  int steps_per_unit = 100;
  int min_steps = 100;
  Integrator method = Integrator::RK4;

  [[nodiscard]] int steps_for(double duration) const {
    return std::max(min_steps, static_cast<int>(std::ceil(steps_per_unit * duration - 1e-9)));
  }
};

class Model {
 public:
  static Model linear_mix(OperatorBasis basis, int drives) {
    basis.validate();
    if (drives < 1) throw DomainError("Model: needs at least one drive");
    if (basis.dim() > kMaxDim) throw DimensionError("Model: dimension exceeds 16");
    Model m;
    m.kind_ = HamiltonianKind::LinearMix;
    m.dim_ = basis.dim();
    m.drives_ = drives;
    m.basis_ = std::move(basis);
    return m;
  }

  static Model general(int dim, int drives) {
    if (dim < 1 || dim > kMaxDim) throw DimensionError("Model: dimension must be in [1, 16]");
    if (drives < 1) throw DomainError("Model: needs at least one drive");
    Model m;
    m.kind_ = HamiltonianKind::General;
    m.dim_ = dim;
    m.drives_ = drives;
    return m;
  }

  /// Same Hamiltonian family plus estimated strengths for fixed collapse operators.
  [[nodiscard]] Model with_collapse(std::vector<ComplexMatrix> collapse,
                                    LindbladOptions options = {}) const {
    Model m = *this;
    for (const auto& l : collapse) {
      if (l.rows() != dim_ || l.cols() != dim_) {
        throw DimensionError("Model: collapse operator has wrong dimension");
      }
    }
    auto superops = std::make_shared<std::vector<Eigen::MatrixXd>>();
    for (const auto& l : collapse) superops->push_back(dissipator_superop(l));
    m.collapse_ = std::move(collapse);
    m.dissipators_ = std::move(superops);
    if (kind_ == HamiltonianKind::LinearMix) {
      auto comms = std::make_shared<std::vector<Eigen::MatrixXd>>();
      for (const auto& a : basis_.ops) comms->push_back(commutator_superop(a.matrix()));
      m.commutators_ = std::move(comms);
    }
    m.lindblad_ = options;
    return m;
  }

  [[nodiscard]] HamiltonianKind kind() const { return kind_; }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] int drives() const { return drives_; }
  [[nodiscard]] const OperatorBasis& basis() const { return basis_; }
  [[nodiscard]] const std::vector<ComplexMatrix>& collapse_ops() const { return collapse_; }
  [[nodiscard]] bool is_open() const { return !collapse_.empty(); }
  [[nodiscard]] const LindbladOptions& lindblad_options() const { return lindblad_; }
  [[nodiscard]] const std::vector<Eigen::MatrixXd>& dissipator_superops() const {
    static const std::vector<Eigen::MatrixXd> empty;
    return dissipators_ ? *dissipators_ : empty;
  }

  /// Commutator superoperators of the basis operators (open linear-mix models).
  [[nodiscard]] const std::vector<Eigen::MatrixXd>* basis_commutators() const {
    return commutators_.get();
  }

  [[nodiscard]] int hamiltonian_parameter_count() const {
    return kind_ == HamiltonianKind::LinearMix ? basis_.size() * (drives_ + 1)
                                               : dim_ * dim_ * (drives_ + 1);
  }
  [[nodiscard]] int strength_offset() const { return hamiltonian_parameter_count(); }
  [[nodiscard]] int parameter_count() const {
    return hamiltonian_parameter_count() + static_cast<int>(collapse_.size());
  }

  void check_parameters(const ParameterVector& w) const {
    if (w.size() != parameter_count()) {
      throw DimensionError("Model: parameter vector has length " + std::to_string(w.size()) +
                           ", expected " + std::to_string(parameter_count()));
    }
  }

  void check_drive(const Eigen::Ref<const Eigen::VectorXd>& d) const {
    if (d.size() != drives_) {
      throw DimensionError("Model: drive vector has length " + std::to_string(d.size()) +
                           ", expected " + std::to_string(drives_));
    }
  }

  /// Coefficients a_k = sum_l alpha_kl d_l + beta_k (linear-mix models).
  [[nodiscard]] Eigen::VectorXd mix_coefficients(const ParameterVector& w,
                                                 const Eigen::Ref<const Eigen::VectorXd>& d) const {
    const int m = basis_.size();
    Eigen::VectorXd a(m);
    for (int k = 0; k < m; ++k) {
      double acc = w(m * drives_ + k);
      for (int l = 0; l < drives_; ++l) acc += w(k * drives_ + l) * d(l);
      a(k) = acc;
    }
    return a;
  }

  [[nodiscard]] HermitianOperator hamiltonian(const ParameterVector& w,
                                              const Eigen::Ref<const Eigen::VectorXd>& d) const {
    check_parameters(w);
    check_drive(d);
    ComplexMatrix h = ComplexMatrix::Zero(dim_, dim_);
    if (kind_ == HamiltonianKind::LinearMix) {
      const Eigen::VectorXd a = mix_coefficients(w, d);
      for (int k = 0; k < basis_.size(); ++k) h += a(k) * basis_.ops[k].matrix();
    } else {
      const int block = dim_ * dim_;
      for (int k = 0; k <= drives_; ++k) {
        const double coef = k < drives_ ? d(k) : 1.0;
        add_general_block(w.segment(k * block, block), coef, h);
      }
    }
    return HermitianOperator::trusted(std::move(h));
  }

  /// grad += dC/domega for a Hamiltonian cotangent Z with dC = Re tr(Z dH),
  /// where H = H(omega; d).
  void accumulate_hamiltonian_gradient(const ComplexMatrix& z,
                                       const Eigen::Ref<const Eigen::VectorXd>& d,
                                       Eigen::Ref<Eigen::VectorXd> grad) const {
    if (kind_ == HamiltonianKind::LinearMix) {
      const int m = basis_.size();
      Eigen::VectorXd za(m);
      for (int k = 0; k < m; ++k) {
        // Re tr(Z A_k) without forming the product.
        za(k) = (z.transpose().cwiseProduct(basis_.ops[k].matrix())).sum().real();
      }
      accumulate_mix_gradient(za, d, grad);
    } else {
      const int block = dim_ * dim_;
      for (int k = 0; k <= drives_; ++k) {
        const double coef = k < drives_ ? d(k) : 1.0;
        int idx = k * block;
        for (int i = 0; i < dim_; ++i) {
          for (int j = i; j < dim_; ++j) {
            const double g = (i == j) ? z(i, i).real() : (z(i, j) + z(j, i)).real();
            grad(idx++) += coef * g;
          }
        }
        for (int i = 0; i < dim_; ++i) {
          for (int j = i + 1; j < dim_; ++j) {
            grad(idx++) += coef * (cplx(0.0, 1.0) * (z(j, i) - z(i, j))).real();
          }
        }
      }
    }
  }

  /// grad += dC/domega given the cotangent of the mix coefficients a(omega; d).
  void accumulate_mix_gradient(const Eigen::Ref<const Eigen::VectorXd>& za,
                               const Eigen::Ref<const Eigen::VectorXd>& d,
                               Eigen::Ref<Eigen::VectorXd> grad) const {
    const int m = basis_.size();
    for (int k = 0; k < m; ++k) {
      for (int l = 0; l < drives_; ++l) grad(k * drives_ + l) += za(k) * d(l);
      grad(m * drives_ + k) += za(k);
    }
  }

  [[nodiscard]] std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    if (kind_ == HamiltonianKind::LinearMix) {
      for (int k = 0; k < basis_.size(); ++k) {
        for (int l = 0; l < drives_; ++l) {
          names.push_back("alpha[" + basis_.labels[k] + "," + std::to_string(l + 1) + "]");
        }
      }
      for (int k = 0; k < basis_.size(); ++k) names.push_back("beta[" + basis_.labels[k] + "]");
    } else {
      for (int k = 0; k <= drives_; ++k) {
        const std::string tag = k < drives_ ? "sigma" + std::to_string(k + 1) : "h";
        for (int i = 0; i < dim_; ++i)
          for (int j = i; j < dim_; ++j)
            names.push_back(tag + "_sym[" + std::to_string(i) + "," + std::to_string(j) + "]");
        for (int i = 0; i < dim_; ++i)
          for (int j = i + 1; j < dim_; ++j)
            names.push_back(tag + "_antisym[" + std::to_string(i) + "," + std::to_string(j) + "]");
      }
    }
    for (std::size_t c = 0; c < collapse_.size(); ++c) {
      names.push_back("c[" + std::to_string(c + 1) + "]");
    }
    return names;
  }

 private:
  void add_general_block(const Eigen::Ref<const Eigen::VectorXd>& blk, double coef,
                         ComplexMatrix& h) const {
    int idx = 0;
    for (int i = 0; i < dim_; ++i) {
      for (int j = i; j < dim_; ++j) {
        const double v = coef * blk(idx++);
        h(i, j) += v;
        if (i != j) h(j, i) += v;
      }
    }
    for (int i = 0; i < dim_; ++i) {
      for (int j = i + 1; j < dim_; ++j) {
        const double v = coef * blk(idx++);
        h(i, j) += cplx(0.0, v);
        h(j, i) -= cplx(0.0, v);
      }
    }
  }

  HamiltonianKind kind_ = HamiltonianKind::LinearMix;
  int dim_ = 0;
  int drives_ = 0;
  OperatorBasis basis_;
  std::vector<ComplexMatrix> collapse_;
  std::shared_ptr<const std::vector<Eigen::MatrixXd>> dissipators_;
  std::shared_ptr<const std::vector<Eigen::MatrixXd>> commutators_;
  LindbladOptions lindblad_;
};

// ---------------------------------------------------------------------------
// Structured <-> flat parameters.

inline ParameterVector flatten(const LinearMixParams& p) {
  const auto m = p.alpha.rows();
  const auto d = p.alpha.cols();
  if (p.beta.size() != m) throw DimensionError("flatten: beta length must equal alpha rows");
  ParameterVector w(m * d + m);
  for (Eigen::Index k = 0; k < m; ++k)
    for (Eigen::Index l = 0; l < d; ++l) w(k * d + l) = p.alpha(k, l);
  w.tail(m) = p.beta;
  return w;
}

inline LinearMixParams unflatten_linear_mix(const Eigen::Ref<const Eigen::VectorXd>& w, int m,
                                            int d) {
  if (w.size() < m * (d + 1)) throw DimensionError("unflatten_linear_mix: vector too short");
  LinearMixParams p;
  p.alpha.resize(m, d);
  for (int k = 0; k < m; ++k)
    for (int l = 0; l < d; ++l) p.alpha(k, l) = w(k * d + l);
  p.beta = w.segment(m * d, m);
  return p;
}

namespace detail {

inline void append_general_block(const Eigen::MatrixXd& sym, const Eigen::MatrixXd& anti,
                                 std::vector<double>& out, const Tolerances& tol) {
  const auto n = sym.rows();
  if (sym.cols() != n || anti.rows() != n || anti.cols() != n) {
    throw DimensionError("flatten: general blocks must be square with equal dims");
  }
  if ((sym - sym.transpose()).cwiseAbs().maxCoeff() > tol.symmetry ||
      (anti + anti.transpose()).cwiseAbs().maxCoeff() > tol.symmetry) {
    throw DomainError("flatten: general block parts must be symmetric / antisymmetric");
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) out.push_back(sym(i, j));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) out.push_back(anti(i, j));
}

inline void read_general_block(const double* src, int n, Eigen::MatrixXd& sym,
                               Eigen::MatrixXd& anti) {
  sym = Eigen::MatrixXd::Zero(n, n);
  anti = Eigen::MatrixXd::Zero(n, n);
  int idx = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) sym(i, j) = sym(j, i) = src[idx++];
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      anti(i, j) = src[idx++];
      anti(j, i) = -anti(i, j);
    }
}

}  // namespace detail

inline ParameterVector flatten(const GeneralParams& p, const Tolerances& tol = kDefaultTolerances) {
  if (p.sigma_sym.size() != p.sigma_antisym.size()) {
    throw DimensionError("flatten: sigma_sym and sigma_antisym differ in drive count");
  }
  std::vector<double> out;
  for (std::size_t k = 0; k < p.sigma_sym.size(); ++k) {
    detail::append_general_block(p.sigma_sym[k], p.sigma_antisym[k], out, tol);
  }
  detail::append_general_block(p.h_sym, p.h_antisym, out, tol);
  return Eigen::Map<const Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

inline GeneralParams unflatten_general(const Eigen::Ref<const Eigen::VectorXd>& w, int n, int d) {
  const int block = n * n;
  if (w.size() < block * (d + 1)) throw DimensionError("unflatten_general: vector too short");
  GeneralParams p;
  p.sigma_sym.resize(d);
  p.sigma_antisym.resize(d);
  for (int k = 0; k < d; ++k) {
    detail::read_general_block(w.data() + k * block, n, p.sigma_sym[k], p.sigma_antisym[k]);
  }
  detail::read_general_block(w.data() + d * block, n, p.h_sym, p.h_antisym);
  return p;
}

inline ParameterVector flatten(const LindbladParams& p) {
  if (static_cast<std::size_t>(p.strengths.size()) != p.collapse_ops.size()) {
    throw DimensionError("flatten: one strength per collapse operator");
  }
  if ((p.strengths.array() < 0.0).any()) throw DomainError("flatten: strengths must be >= 0");
  const ParameterVector h = std::visit([](const auto& hp) { return flatten(hp); }, p.hamiltonian);
  ParameterVector w(h.size() + p.strengths.size());
  w << h, p.strengths;
  return w;
}

inline LindbladParams unflatten_lindblad(const Model& model, const ParameterVector& w) {
  model.check_parameters(w);
  LindbladParams p;
  if (model.kind() == HamiltonianKind::LinearMix) {
    p.hamiltonian = unflatten_linear_mix(w, model.basis().size(), model.drives());
  } else {
    p.hamiltonian = unflatten_general(w, model.dim(), model.drives());
  }
  p.collapse_ops = model.collapse_ops();
  p.strengths = w.tail(static_cast<Eigen::Index>(model.collapse_ops().size()));
  return p;
}

// ---------------------------------------------------------------------------
// Hamiltonian assembly from structured parameters.

inline HermitianOperator hamiltonian_at(const LinearMixParams& p, const OperatorBasis& basis,
                                        const Eigen::Ref<const Eigen::VectorXd>& d) {
  basis.validate();
  if (p.alpha.rows() != basis.size() || p.beta.size() != basis.size()) {
    throw DimensionError("hamiltonian_at: alpha/beta rows must match the basis size");
  }
  if (p.alpha.cols() != d.size()) throw DimensionError("hamiltonian_at: drive length mismatch");
  const Eigen::VectorXd a = p.alpha * d + p.beta;
  ComplexMatrix h = ComplexMatrix::Zero(basis.dim(), basis.dim());
  for (int k = 0; k < basis.size(); ++k) h += a(k) * basis.ops[k].matrix();
  return HermitianOperator::trusted(std::move(h));
}

inline HermitianOperator hamiltonian_at(const GeneralParams& p,
                                        const Eigen::Ref<const Eigen::VectorXd>& d) {
  if (static_cast<Eigen::Index>(p.sigma_sym.size()) != d.size() ||
      p.sigma_antisym.size() != p.sigma_sym.size()) {
    throw DimensionError("hamiltonian_at: drive length mismatch");
  }
  Eigen::MatrixXd sym = p.h_sym;
  Eigen::MatrixXd anti = p.h_antisym;
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    sym += d(k) * p.sigma_sym[k];
    anti += d(k) * p.sigma_antisym[k];
  }
  return hermitian_from_parts(sym, anti);
}

// ---------------------------------------------------------------------------
// Forward evaluation with a reverse pass.

/// Forward evaluation of one pulse, retaining what the reverse pass needs.
/// `gradient(g)` returns d(g . p)/d omega for a cotangent g on the
/// probabilities; `jacobian()` stacks those for each basis vector g = e_k.
class PulseEvaluation {
 public:
  /// `initial` selects the computational-basis starting state (default |0...0>).
  PulseEvaluation(const Model& model, const ParameterVector& w, const ControlPulse& pulse,
                  int initial = 0)
      : model_(&model), w_(w), pulse_(pulse), initial_(initial) {
    model.check_parameters(w);
    if (initial < 0 || initial >= model.dim()) {
      throw DomainError("predict: initial basis state out of range");
    }
    pulse.validate();
    if (pulse.drives() != model.drives()) {
      throw DimensionError("predict: pulse drive count does not match the model");
    }
    if (model.is_open()) forward_open();
    else forward_closed();
  }

  [[nodiscard]] const Eigen::VectorXd& probs() const { return probs_; }
  /// Final pure state (closed models only).
  [[nodiscard]] const StateVector& state() const { return states_.back(); }
  /// Final density matrix (open models only).
  [[nodiscard]] ComplexMatrix density() const {
    return coords::to_hermitian(trajectory_.back().col(trajectory_.back().cols() - 1),
                                model_->dim());
  }

  [[nodiscard]] Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::VectorXd>& g) const {
    if (g.size() != model_->dim()) throw DimensionError("gradient: cotangent length mismatch");
    return model_->is_open() ? reverse_open(g) : reverse_closed(g);
  }

  [[nodiscard]] Eigen::MatrixXd jacobian() const {
    const int n = model_->dim();
    Eigen::MatrixXd jac(n, model_->parameter_count());
    for (int k = 0; k < n; ++k) {
      Eigen::VectorXd e = Eigen::VectorXd::Unit(n, k);
      jac.row(k) = gradient(e).transpose();
    }
    return jac;
  }

 private:
  void forward_closed() {
    const int n = model_->dim();
    states_.reserve(pulse_.segments() + 1);
    states_.push_back(basis_state(n, initial_));
    for (int s = 0; s < pulse_.segments(); ++s) {
      props_.emplace_back(model_->hamiltonian(w_, pulse_.segment(s)), pulse_.segment_duration());
      states_.push_back(props_.back().apply(states_.back()));
    }
    probs_ = states_.back().cwiseAbs2();
  }

  Eigen::VectorXd reverse_closed(const Eigen::Ref<const Eigen::VectorXd>& g) const {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(model_->parameter_count());
    // dC = 2 Re(w^T dpsi) with w = g o conj(psi).
    StateVector w = g.cast<cplx>().cwiseProduct(states_.back().conjugate());
    for (int s = pulse_.segments() - 1; s >= 0; --s) {
      const auto& prop = props_[s];
      const ComplexMatrix z = prop.frechet_adjoint(states_[s], w);
      model_->accumulate_hamiltonian_gradient(z, pulse_.segment(s), grad);
      if (s > 0) {
        // w <- U^T w = conj(V) diag(f) V^T w
        const auto& v = prop.eig().eigenvectors;
        StateVector t = v.transpose() * w;
        t.array() *= prop.phases().array();
        w = v.conjugate() * t;
      }
    }
    return grad;
  }

  void forward_open() {
    const int n = model_->dim();
    const auto& opts = model_->lindblad_options();
    const int total_steps = opts.steps_for(pulse_.duration);
    substeps_ = std::max(1, (total_steps + pulse_.segments() - 1) / pulse_.segments());
    const double h = pulse_.segment_duration() / substeps_;
    const auto& dissipators = model_->dissipator_superops();
    const Eigen::Index c0 = model_->strength_offset();

    const StateVector e0 = basis_state(n, initial_);
    Eigen::VectorXd r = coords::from_hermitian(e0 * e0.adjoint());
    for (int s = 0; s < pulse_.segments(); ++s) {
      Eigen::MatrixXd gen;
      if (const auto* comms = model_->basis_commutators()) {
        const Eigen::VectorXd a = model_->mix_coefficients(w_, pulse_.segment(s));
        gen = Eigen::MatrixXd::Zero(r.size(), r.size());
        for (std::size_t k = 0; k < comms->size(); ++k) {
          gen += a(static_cast<Eigen::Index>(k)) * (*comms)[k];
        }
      } else {
        gen = commutator_superop(model_->hamiltonian(w_, pulse_.segment(s)).matrix());
      }
      for (std::size_t i = 0; i < dissipators.size(); ++i) {
        gen += w_(c0 + static_cast<Eigen::Index>(i)) * dissipators[i];
      }
      maps_.emplace_back(std::move(gen), h, opts.method);
      Eigen::MatrixXd traj(r.size(), substeps_ + 1);
      traj.col(0) = r;
      const Eigen::MatrixXd& phi = maps_.back().phi();
      for (int k = 0; k < substeps_; ++k) {
        traj.col(k + 1).noalias() = phi * traj.col(k);
        if (!traj.col(k + 1).allFinite()) {
          throw IntegrationError("evolve_lindblad: non-finite state at segment " +
                                 std::to_string(s) + ", step " + std::to_string(k + 1) +
                                 " (reduce the step size)");
        }
      }
      r = traj.col(substeps_);
      trajectory_.push_back(std::move(traj));
    }
    probs_.resize(n);
    for (int i = 0; i < n; ++i) probs_(i) = r(i * n + i);
  }

  Eigen::VectorXd reverse_open(const Eigen::Ref<const Eigen::VectorXd>& g) const {
    const int n = model_->dim();
    const auto& dissipators = model_->dissipator_superops();
    const Eigen::Index c0 = model_->strength_offset();
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(model_->parameter_count());
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(n * n);
    for (int i = 0; i < n; ++i) lam(i * n + i) = g(i);

    for (int s = pulse_.segments() - 1; s >= 0; --s) {
      const auto& map = maps_[s];
      const Eigen::MatrixXd& traj = trajectory_[s];
      // Costates lam_{k+1} for k = 0..substeps-1, paired with states r_k.
      Eigen::MatrixXd costates(n * n, substeps_);
      for (int k = substeps_ - 1; k >= 0; --k) {
        costates.col(k) = lam;
        lam = map.phi().transpose() * lam;
      }
      const Eigen::MatrixXd g_phi = costates * traj.leftCols(substeps_).transpose();
      const Eigen::MatrixXd g_s = map.generator_cotangent(g_phi);
      if (const auto* comms = model_->basis_commutators()) {
        Eigen::VectorXd za(static_cast<Eigen::Index>(comms->size()));
        for (std::size_t k = 0; k < comms->size(); ++k) {
          za(static_cast<Eigen::Index>(k)) = g_s.cwiseProduct((*comms)[k]).sum();
        }
        model_->accumulate_mix_gradient(za, pulse_.segment(s), grad);
      } else {
        const ComplexMatrix z = commutator_superop_adjoint(g_s, n);
        model_->accumulate_hamiltonian_gradient(z, pulse_.segment(s), grad);
      }
      for (std::size_t i = 0; i < dissipators.size(); ++i) {
        grad(c0 + static_cast<Eigen::Index>(i)) += g_s.cwiseProduct(dissipators[i]).sum();
      }
    }
    return grad;
  }

  const Model* model_;
  ParameterVector w_;
  ControlPulse pulse_;
  int initial_ = 0;
  Eigen::VectorXd probs_;
  // closed
  std::vector<UnitaryPropagator> props_;
  std::vector<StateVector> states_;
  // open
  int substeps_ = 0;
  std::vector<StepMap> maps_;
  std::vector<Eigen::MatrixXd> trajectory_;
};

inline Eigen::VectorXd predict_probs(const Model& model, const ParameterVector& w,
                                     const ControlPulse& pulse, int initial = 0) {
  return PulseEvaluation(model, w, pulse, initial).probs();
}

struct ProbsWithGradient {
  Eigen::VectorXd probs;
  Eigen::MatrixXd grad;  // 2^Q x dim(omega), grad(k, l) = dp_k / domega_l
};

inline ProbsWithGradient predict_probs_grad(const Model& model, const ParameterVector& w,
                                            const ControlPulse& pulse) {
  PulseEvaluation ev(model, w, pulse);
  return {ev.probs(), ev.jacobian()};
}

/// Pure-state evolution of |0...0> under a piecewise-constant schedule
/// (Theta x D) of total duration T.
inline StateVector evolve_piecewise(const Model& model, const ParameterVector& w,
                                    const Eigen::MatrixXd& schedule, double duration) {
  if (model.is_open()) throw DomainError("evolve_piecewise: model has collapse operators");
  return PulseEvaluation(model, w, ControlPulse::piecewise(schedule, duration)).state();
}

/// Density matrix at time T under the master equation, integrated with
/// `steps` explicit steps in total (split evenly over the schedule rows).
inline ComplexMatrix evolve_lindblad(const Model& model, const ParameterVector& w,
                                     const Eigen::MatrixXd& schedule, double duration, int steps,
                                     Integrator method) {
  if (!model.is_open()) throw DomainError("evolve_lindblad: model has no collapse operators");
  if (steps < 1) throw DomainError("evolve_lindblad: steps must be >= 1");
  model.check_parameters(w);
  if ((w.tail(static_cast<Eigen::Index>(model.collapse_ops().size())).array() < 0.0).any()) {
    throw DomainError("evolve_lindblad: collapse strengths must be >= 0");
  }
  LindbladOptions opts;
  opts.min_steps = steps;
  opts.steps_per_unit = 0;
  opts.method = method;
  const Model m = model.with_collapse(model.collapse_ops(), opts);
  return PulseEvaluation(m, w, ControlPulse::piecewise(schedule, duration)).density();
}

// ---------------------------------------------------------------------------
// Derivatives with respect to the mix coefficients a (linear-mix, closed,
// constant pulse). Used by the Fisher design gradient.

struct MixDerivatives {
  Eigen::VectorXd probs;                // n
  Eigen::MatrixXd jac;                  // n x M, dp_k / da_m
  std::vector<Eigen::MatrixXd> hess;    // n entries of M x M, d^2 p_k / da_m da_m'
};

inline MixDerivatives mix_derivatives(const Model& model, const ParameterVector& w,
                                      const Eigen::Ref<const Eigen::VectorXd>& d, double duration,
                                      bool with_hessian = true,
                                      const Tolerances& tol = kDefaultTolerances) {
  if (model.kind() != HamiltonianKind::LinearMix || model.is_open()) {
    throw DomainError("mix_derivatives: requires a closed linear-mix model");
  }
  const int n = model.dim();
  const int m = model.basis().size();
  const UnitaryPropagator prop(model.hamiltonian(w, d), duration, tol);
  const auto& v = prop.eig().eigenvectors;
  const auto& lam = prop.eig().eigenvalues;
  const StateVector c = v.adjoint() * ground_state(n);
  const StateVector fc = prop.phases().cwiseProduct(c);
  const StateVector psi = v * fc;

  std::vector<ComplexMatrix> x(m);
  std::vector<StateVector> dpsi(m);
  for (int k = 0; k < m; ++k) {
    x[k] = v.adjoint() * model.basis().ops[k].matrix() * v;
    dpsi[k] = v * (prop.divided().cwiseProduct(x[k]) * c);
  }

  MixDerivatives out;
  out.probs = psi.cwiseAbs2();
  out.jac.resize(n, m);
  for (int k = 0; k < m; ++k) {
    out.jac.col(k) = 2.0 * (psi.conjugate().cwiseProduct(dpsi[k])).real();
  }
  if (!with_hessian) return out;

  // Second-order divided differences f[l_i, l_k, l_j].
  std::vector<cplx> f2(static_cast<std::size_t>(n) * n * n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        f2[(i * n + k) * n + j] = exp_second_divided_difference(lam(i), lam(k), lam(j), duration, tol);

  out.hess.assign(n, Eigen::MatrixXd::Zero(m, m));
  for (int a = 0; a < m; ++a) {
    for (int b = a; b < m; ++b) {
      StateVector y = StateVector::Zero(n);
      for (int i = 0; i < n; ++i) {
        cplx acc = 0.0;
        for (int k = 0; k < n; ++k) {
          for (int j = 0; j < n; ++j) {
            acc += f2[(i * n + k) * n + j] * (x[a](i, k) * x[b](k, j) + x[b](i, k) * x[a](k, j)) *
                   c(j);
          }
        }
        y(i) = acc;
      }
      const StateVector d2psi = v * y;
      for (int q = 0; q < n; ++q) {
        const double val =
            2.0 * (std::conj(dpsi[a](q)) * dpsi[b](q) + std::conj(psi(q)) * d2psi(q)).real();
        out.hess[q](a, b) = val;
        out.hess[q](b, a) = val;
      }
    }
  }
  return out;
}

}  // namespace steady
