#include "watermark/lti.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace watermark {

namespace {

constexpr double kEigenGapTol = 1e-8;
constexpr double kRankTol = 1e-10;

void require(bool cond, const char* msg) {
  if (!cond) {
    throw std::invalid_argument(msg);
  }
}

bool symmetric_pd(const Matrix& M) {
  if (M.rows() != M.cols()) {
    return false;
  }
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, M.cwiseAbs().maxCoeff())) {
    return false;
  }
  Eigen::LLT<Matrix> llt(symmetrized(M));
  return llt.info() == Eigen::Success;
}

Index numerical_rank(const Matrix& M) {
  Eigen::JacobiSVD<Matrix> svd(M);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) {
    return 0;
  }
  const double cutoff = kRankTol * sv[0];
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > cutoff) {
      ++rank;
    }
  }
  return rank;
}

}  // namespace

void LinearSystem::validate() const {
  require(A.rows() == A.cols() && A.rows() >= 1, "LinearSystem: A must be square");
  require(B.rows() == A.rows() && B.cols() >= 1, "LinearSystem: B must be n x p");
  require(C.cols() == A.rows() && C.rows() >= 1, "LinearSystem: C must be m x n");
  require(Q.rows() == A.rows() && Q.cols() == A.rows(), "LinearSystem: Q must be n x n");
  require(R.rows() == C.rows() && R.cols() == C.rows(), "LinearSystem: R must be m x m");
  if (!symmetric_pd(Q)) {
    throw std::invalid_argument("LinearSystem: Q must be symmetric positive definite");
  }
  if (!symmetric_pd(R)) {
    throw std::invalid_argument("LinearSystem: R must be symmetric positive definite");
  }
  if (spectral_radius(A) >= 1.0) {
    throw std::invalid_argument("LinearSystem: unstable system (spectral radius >= 1)");
  }
}

Matrix solve_discrete_lyapunov(const Matrix& A, const Matrix& Q) {
  require(A.rows() == A.cols(), "solve_discrete_lyapunov: A must be square");
  require(Q.rows() == A.rows() && Q.cols() == A.cols(),
          "solve_discrete_lyapunov: Q must match A");
  if (spectral_radius(A) >= 1.0) {
    throw std::runtime_error("solve_discrete_lyapunov: unstable system");
  }

  const double tol = 1e-10 * std::max(1.0, Q.norm());
  Matrix sigma = symmetrized(Q);
  Matrix power = A;  // A^{2^j}
  // Doubling: after step j, sigma = sum_{t<2^j} A^t Q A^T^t.
  for (int iter = 0; iter < 200; ++iter) {
    const Matrix residual = sigma - A * sigma * A.transpose() - Q;
    if (residual.norm() <= tol) {
      return symmetrized(sigma);
    }
    sigma = symmetrized(sigma + power * sigma * power.transpose());
    power = power * power;
    if (!sigma.allFinite()) {
      break;
    }
  }
  throw std::runtime_error("solve_discrete_lyapunov: unstable system");
}

Matrix steady_output_cov(const LinearSystem& sys) {
  const Matrix sigma = solve_discrete_lyapunov(sys.A, sys.Q);
  return symmetrized(sys.C * sigma * sys.C.transpose() + sys.R);
}

SimState initial_state(const LinearSystem& sys, std::uint64_t seed, bool steady_start) {
  // Cholesky when PD; symmetric root as the PSD fallback (zero-noise tests).
  auto factor = [](const Matrix& M) {
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() == Eigen::Success) {
      return Matrix(llt.matrixL());
    }
    return sym_sqrt(M);
  };
  SimState st;
  st.seed = seed;
  st.k = 0;
  st.process_noise = GaussianStream(derive_seed(seed, 0));
  st.measurement_noise = GaussianStream(derive_seed(seed, 1));
  st.q_identity = sys.Q.isIdentity(1e-14);
  st.r_identity = sys.R.isIdentity(1e-14);
  st.Lq = st.q_identity ? Matrix() : factor(sys.Q);
  st.Lr = st.r_identity ? Matrix() : factor(sys.R);
  if (steady_start) {
    const Matrix sigma = solve_discrete_lyapunov(sys.A, sys.Q);
    st.x = sym_sqrt(sigma) * st.process_noise.next_vector(sys.n());
  } else {
    st.x = Vector::Zero(sys.n());
  }
  return st;
}

Vector simulate_step(const LinearSystem& sys, SimState& state, const Vector& phi) {
  if (phi.size() != sys.p()) {
    throw std::invalid_argument("simulate_step: phi dimension mismatch");
  }
  if (state.x.size() != sys.n()) {
    throw std::invalid_argument("simulate_step: state dimension mismatch");
  }
  Vector v = state.measurement_noise.next_vector(sys.m());
  if (!state.r_identity) {
    v = state.Lr * v;
  }
  const Vector y = sys.C * state.x + v;

  Vector w = state.process_noise.next_vector(sys.n());
  if (!state.q_identity) {
    w = state.Lq * w;
  }
  state.x = sys.A * state.x + sys.B * phi + w;
  state.k += 1;
  return y;
}

std::vector<Matrix> markov_parameters(const LinearSystem& sys, int tau_max) {
  require(tau_max >= 0, "markov_parameters: tau_max must be >= 0");
  std::vector<Matrix> h;
  h.reserve(static_cast<std::size_t>(tau_max) + 1);
  Matrix cak = sys.C;  // C A^tau
  for (int tau = 0; tau <= tau_max; ++tau) {
    h.push_back(cak * sys.B);
    if (tau < tau_max) {
      cak = cak * sys.A;
    }
  }
  return h;
}

ModalDecomposition modal_decomposition(const LinearSystem& sys) {
  Eigen::EigenSolver<Matrix> eig(sys.A);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("modal_decomposition: eigendecomposition failed");
  }
  const CVector lambdas_raw = eig.eigenvalues();
  if (min_pairwise_gap(lambdas_raw) < kEigenGapTol) {
    throw std::runtime_error("modal_decomposition: degenerate spectrum");
  }

  const CMatrix P = eig.eigenvectors();
  const CMatrix CP = sys.C.cast<Complex>() * P;
  const CMatrix PinvB = P.lu().solve(sys.B.cast<Complex>());

  const auto order = canonical_modal_order(lambdas_raw);
  ModalDecomposition modal;
  modal.lambdas.resize(lambdas_raw.size());
  modal.residues.reserve(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const Index i = order[pos];
    modal.lambdas[static_cast<Index>(pos)] = lambdas_raw[i];
    modal.residues.push_back(CP.col(i) * PinvB.row(i));
  }
  return modal;
}

StructuralReport structural_checks(const LinearSystem& sys) {
  StructuralReport report;
  const Index n = sys.n();

  report.spectral_radius = spectral_radius(sys.A);
  report.stable = report.spectral_radius < 1.0;

  Matrix obs(sys.m() * n, n);
  Matrix block = sys.C;
  for (Index i = 0; i < n; ++i) {
    obs.middleRows(i * sys.m(), sys.m()) = block;
    block = block * sys.A;
  }
  report.observable = numerical_rank(obs) == n;

  Matrix ctrl(n, sys.p() * n);
  Matrix cblock = sys.B;
  for (Index i = 0; i < n; ++i) {
    ctrl.middleCols(i * sys.p(), sys.p()) = cblock;
    cblock = sys.A * cblock;
  }
  report.controllable = numerical_rank(ctrl) == n;

  const CVector lambdas = sys.A.eigenvalues();
  report.min_eigen_gap = n > 1 ? min_pairwise_gap(lambdas)
                               : std::numeric_limits<double>::infinity();
  report.distinct_spectrum = report.min_eigen_gap >= kEigenGapTol;
  return report;
}

LinearSystem random_stable_system(int n, int m, int p, std::uint64_t seed, double rho_max) {
  require(n >= 1 && m >= 1 && p >= 1, "random_stable_system: dimensions must be >= 1");
  require(rho_max > 0.0 && rho_max < 1.0, "random_stable_system: rho_max must be in (0,1)");

  GaussianStream stream(derive_seed(seed, 0x5157));
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Matrix A(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        A(i, j) = stream.next();
      }
    }
    const double rho0 = spectral_radius(A);
    if (rho0 == 0.0) {
      continue;
    }
    const double target = rho_max * (0.7 + 0.3 * stream.next_uniform());
    A *= target / rho0;

    Matrix B(n, p), C(m, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < p; ++j) {
        B(i, j) = stream.next();
      }
    }
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < n; ++j) {
        C(i, j) = stream.next();
      }
    }

    LinearSystem sys{A, B, C, Matrix::Identity(n, n), Matrix::Identity(m, m), seed};
    const StructuralReport report = structural_checks(sys);
    if (report.all_pass() && report.spectral_radius <= rho_max) {
      return sys;
    }
  }
  throw std::runtime_error("random_stable_system: generation failed");
}

}  // namespace watermark
