#include <gtest/gtest.h>

#include "steady/mock_hardware.hpp"
#include "steady/models.hpp"
#include "test_util.hpp"

using namespace steady;
using steady::testing::fd_jacobian;
using steady::testing::random_hermitian;
using steady::testing::random_vector;
using steady::testing::taylor_unitary;

namespace {

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(1e-12, b.norm());
}

Model rabi_model() {
  OperatorBasis b;
  b.ops = {HermitianOperator::from_matrix(ops::pauli_x())};
  b.labels = {"X"};
  return Model::linear_mix(b, 1);
}

}  // namespace

TEST(Params, LinearMixRoundTrip) {
  std::mt19937_64 rng(1);
  LinearMixParams p;
  p.alpha = Eigen::MatrixXd::Random(4, 3);
  p.beta = Eigen::VectorXd::Random(4);
  const ParameterVector w = flatten(p);
  ASSERT_EQ(w.size(), 16);
  EXPECT_EQ(w(1), p.alpha(0, 1));  // alpha row-major first
  EXPECT_EQ(w(12), p.beta(0));
  const LinearMixParams q = unflatten_linear_mix(w, 4, 3);
  EXPECT_EQ(q.alpha, p.alpha);
  EXPECT_EQ(q.beta, p.beta);
}

TEST(Params, GeneralRoundTripAndHamiltonian) {
  std::mt19937_64 rng(2);
  const int n = 3, d = 2;
  const Model m = Model::general(n, d);
  ASSERT_EQ(m.parameter_count(), n * n * (d + 1));
  const ParameterVector w = random_vector(m.parameter_count(), rng);
  const GeneralParams gp = unflatten_general(w, n, d);
  EXPECT_LT((flatten(gp) - w).norm(), 1e-15);
  const Eigen::VectorXd drive = random_vector(d, rng);
  const ComplexMatrix h1 = m.hamiltonian(w, drive).matrix();
  const ComplexMatrix h2 = hamiltonian_at(gp, drive).matrix();
  EXPECT_LT((h1 - h2).norm(), 1e-14);
  EXPECT_LT((h1 - h1.adjoint()).norm(), 1e-15);
}

TEST(Params, LindbladFlattenChecksStrengths) {
  LindbladParams p;
  LinearMixParams h;
  h.alpha = Eigen::MatrixXd::Ones(1, 1);
  h.beta = Eigen::VectorXd::Zero(1);
  p.hamiltonian = h;
  p.collapse_ops = {ops::lowering()};
  p.strengths = Eigen::VectorXd::Constant(1, 0.2);
  EXPECT_EQ(flatten(p).size(), 3);
  p.strengths(0) = -1;
  EXPECT_THROW(flatten(p), DomainError);
}

TEST(Model, LinearMixHamiltonianMatchesStructured) {
  const TrueSystem sys = build_true_system();
  const Model m = sys.hamiltonian_model();
  std::mt19937_64 rng(3);
  const Eigen::VectorXd d = random_vector(sys.drives(), rng);
  const ComplexMatrix h1 = m.hamiltonian(sys.omega(), d).matrix();
  const ComplexMatrix h2 = hamiltonian_at(sys.truth, sys.basis, d).matrix();
  EXPECT_LT((h1 - h2).norm(), 1e-13);
  EXPECT_THROW(m.hamiltonian(sys.omega(), Eigen::VectorXd::Zero(3)), DimensionError);
  EXPECT_THROW(m.hamiltonian(ParameterVector::Zero(5), d), DimensionError);
  EXPECT_EQ(static_cast<int>(m.parameter_names().size()), m.parameter_count());
}

TEST(Predict, RabiFormula) {
  // H = d X, T: P1 = sin^2(d T).
  const Model m = rabi_model();
  ParameterVector w(2);
  w << 1.0, 0.0;
  for (double d : {0.2, 0.7, 1.9}) {
    for (double t : {0.5, 1.0, 3.0}) {
      const Eigen::VectorXd p = predict_probs(m, w, ControlPulse::constant(Eigen::VectorXd::Constant(1, d), t));
      EXPECT_NEAR(p(1), std::pow(std::sin(d * t), 2), 1e-14);
    }
  }
}

TEST(Predict, NormalizedAndNonNegative) {
  const TrueSystem sys = build_true_system();
  const Model m = sys.hamiltonian_model();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::VectorXd p =
        predict_probs(m, sys.omega(), ControlPulse::constant(random_vector(sys.drives(), rng, 2.0), 1.0));
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
  }
}

TEST(Predict, PiecewiseMatchesProductOfPropagators) {
  const TrueSystem sys = build_true_system(2, 17);
  const Model m = sys.hamiltonian_model();
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd sched = Eigen::MatrixXd::Random(4, sys.drives());
  const double t = 1.6;
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(4, 4);
  for (int s = 0; s < 4; ++s) {
    u = taylor_unitary(m.hamiltonian(sys.omega(), sched.row(s).transpose()).matrix(), t / 4) * u;
  }
  const Eigen::VectorXcd expect = u.col(0);
  const StateVector got = evolve_piecewise(m, sys.omega(), sched, t);
  EXPECT_LT((Eigen::VectorXcd(got) - expect).norm(), 1e-11);
}

TEST(Predict, RejectsBadInput) {
  const Model m = rabi_model();
  ParameterVector w(2);
  w << 1.0, 0.0;
  EXPECT_THROW(predict_probs(m, w, ControlPulse::constant(Eigen::VectorXd::Zero(2), 1.0)), DimensionError);
  EXPECT_THROW(predict_probs(m, w, ControlPulse::constant(Eigen::VectorXd::Zero(1), 1.0), 5), DomainError);
  ControlPulse bad = ControlPulse::constant(Eigen::VectorXd::Zero(1), 1.0);
  bad.amplitudes(0, 0) = std::nan("");
  EXPECT_ANY_THROW(predict_probs(m, w, bad));
}

TEST(Gradient, LinearMixMatchesFiniteDifference) {
  const TrueSystem sys = build_true_system();
  const Model m = sys.hamiltonian_model();
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const ParameterVector w = sys.omega() + random_vector(m.parameter_count(), rng, 0.1);
    const ControlPulse pulse = ControlPulse::constant(random_vector(sys.drives(), rng), 1.0);
    EXPECT_LT(rel_err(PulseEvaluation(m, w, pulse).jacobian(), fd_jacobian(m, w, pulse)), 1e-6);
  }
}

TEST(Gradient, PiecewiseMatchesFiniteDifference) {
  const TrueSystem sys = build_true_system(2, 3);
  const Model m = sys.hamiltonian_model();
  std::mt19937_64 rng(7);
  const ControlPulse pulse = ControlPulse::piecewise(Eigen::MatrixXd::Random(3, sys.drives()), 1.5);
  const ParameterVector w = sys.omega();
  EXPECT_LT(rel_err(PulseEvaluation(m, w, pulse).jacobian(), fd_jacobian(m, w, pulse)), 1e-6);
}

TEST(Gradient, GeneralMatchesFiniteDifference) {
  std::mt19937_64 rng(8);
  const Model m = Model::general(4, 2);
  for (int trial = 0; trial < 3; ++trial) {
    const ParameterVector w = random_vector(m.parameter_count(), rng, 0.5);
    const ControlPulse pulse = ControlPulse::constant(random_vector(2, rng), 1.0);
    EXPECT_LT(rel_err(PulseEvaluation(m, w, pulse).jacobian(), fd_jacobian(m, w, pulse)), 1e-6);
  }
}

TEST(Gradient, LindbladMatchesFiniteDifference) {
  const TrueSystem sys = build_true_system(2, 4, 0.1);
  LindbladOptions opts;
  opts.steps_per_unit = 40;
  opts.min_steps = 40;
  const Model m = sys.lindblad_model(opts);
  std::mt19937_64 rng(9);
  const ParameterVector w = sys.generating_omega() + 0.05 * Eigen::VectorXd::Ones(m.parameter_count());
  const ControlPulse pulse = ControlPulse::piecewise(Eigen::MatrixXd::Random(2, sys.drives()), 1.0);
  EXPECT_LT(rel_err(PulseEvaluation(m, w, pulse).jacobian(), fd_jacobian(m, w, pulse)), 1e-6);
}

TEST(Gradient, CotangentIsLinear) {
  const TrueSystem sys = build_true_system();
  const Model m = sys.hamiltonian_model();
  std::mt19937_64 rng(10);
  const PulseEvaluation ev(m, sys.omega(), ControlPulse::constant(random_vector(sys.drives(), rng), 1.0));
  const Eigen::VectorXd g = random_vector(8, rng);
  EXPECT_LT((ev.gradient(g) - ev.jacobian().transpose() * g).norm(), 1e-12);
  EXPECT_THROW(ev.gradient(Eigen::VectorXd::Zero(3)), DimensionError);
}

TEST(MixDerivatives, JacobianAndHessianMatchFiniteDifference) {
  const TrueSystem sys = build_true_system(2, 12);
  const Model m = sys.hamiltonian_model();
  std::mt19937_64 rng(11);
  const Eigen::VectorXd d = random_vector(sys.drives(), rng);
  const ParameterVector w = sys.omega();
  const MixDerivatives md = mix_derivatives(m, w, d, 1.2);
  const int nb = m.basis().size();
  const int nd = m.drives();
  // Perturbing beta_k shifts a_k alone.
  const double h = 1e-5;
  for (int k = 0; k < nb; ++k) {
    ParameterVector wp = w, wm = w;
    wp(nb * nd + k) += h;
    wm(nb * nd + k) -= h;
    const MixDerivatives p = mix_derivatives(m, wp, d, 1.2);
    const MixDerivatives q = mix_derivatives(m, wm, d, 1.2);
    const Eigen::VectorXd fd = (p.probs - q.probs) / (2 * h);
    EXPECT_LT((md.jac.col(k) - fd).norm(), 1e-8);
    for (int s = 0; s < m.dim(); ++s) {
      const Eigen::VectorXd fdh = (p.jac.row(s) - q.jac.row(s)).transpose() / (2 * h);
      EXPECT_LT((md.hess[s].col(k) - fdh).norm(), 1e-7);
    }
  }
}
