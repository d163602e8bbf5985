#pragma once

#include <cstdint>
#include <vector>

#include "watermark/rng.hpp"
#include "watermark/types.hpp"

namespace watermark {

/// Discrete-time plant x_{k+1} = A x_k + B phi_k + w_k, y_k = C x_k + v_k,
/// with w ~ N(0, Q) and v ~ N(0, R).
struct LinearSystem {
  Matrix A;  // n x n state transition
  Matrix B;  // n x p watermark input gain
  Matrix C;  // m x n output map
  Matrix Q;  // n x n process-noise covariance
  Matrix R;  // m x m measurement-noise covariance
  std::uint64_t seed = 0;  // generator seed, 0 for handcrafted systems

  Index n() const { return A.rows(); }
  Index m() const { return C.rows(); }
  Index p() const { return B.cols(); }

  /// Dimension consistency, symmetry/PD of Q and R, strict stability.
  /// Throws std::invalid_argument on violation.
  void validate() const;
};

/// Mutable simulation state. Copyable, so a run can be forked; each instance
/// must be driven by one thread at a time.
struct SimState {
  Vector x;
  std::int64_t k = 0;
  std::uint64_t seed = 0;
  GaussianStream process_noise;
  GaussianStream measurement_noise;
  // Cached Cholesky factors of Q and R (identity flagged to skip the matvec).
  Matrix Lq, Lr;
  bool q_identity = false, r_identity = false;
};

/// Expansion H_tau = sum_i lambda_i^tau Omega_i over the distinct eigenvalues
/// of A. Eigenvalues are in canonical order: descending modulus, ties broken
/// by ascending phase. Conjugate eigenvalues carry conjugate residues.
struct ModalDecomposition {
  CVector lambdas;               // length n
  std::vector<CMatrix> residues; // n matrices, each m x p
};

struct StructuralReport {
  bool stable = false;
  bool observable = false;
  bool controllable = false;
  bool distinct_spectrum = false;
  double spectral_radius = 0.0;
  double min_eigen_gap = 0.0;
  bool all_pass() const { return stable && observable && controllable && distinct_spectrum; }
};

/// Solves Sigma = A Sigma A^T + Q by fixed-point iteration with doubling.
/// Accepts only solutions with residual <= 1e-10 * max(1, ||Q||_F); throws
/// std::runtime_error("unstable system") when rho(A) >= 1 or the iteration
/// fails to converge.
Matrix solve_discrete_lyapunov(const Matrix& A, const Matrix& Q);

/// Steady-state output covariance W = C Sigma C^T + R with phi == 0.
Matrix steady_output_cov(const LinearSystem& sys);

/// Fresh state at time 0. With steady_start the initial state is drawn from
/// N(0, Sigma), matching a plant that has been running without watermark.
SimState initial_state(const LinearSystem& sys, std::uint64_t seed, bool steady_start = false);

/// Emits y_k = C x_k + v_k for the current state, then advances
/// x_{k+1} = A x_k + B phi_k + w_k. Per tick the measurement stream is drawn
/// first (m values), then the process stream (n values).
Vector simulate_step(const LinearSystem& sys, SimState& state, const Vector& phi);

/// [H_0, ..., H_tau_max] with H_tau = C A^tau B.
std::vector<Matrix> markov_parameters(const LinearSystem& sys, int tau_max);

/// Eigen-decomposes A and forms the residues Omega_i. Throws
/// std::runtime_error("degenerate spectrum") when the minimum pairwise
/// eigenvalue gap is below 1e-8.
ModalDecomposition modal_decomposition(const LinearSystem& sys);

/// Rank tests on the stacked observability / controllability matrices;
/// singular values above 1e-10 * sigma_max count toward rank.
StructuralReport structural_checks(const LinearSystem& sys);

/// Deterministic random plant: spectral radius <= rho_max, Q = R = I,
/// regenerated until structural_checks passes. Throws std::runtime_error
/// ("generation failed") when the retry budget is exhausted.
LinearSystem random_stable_system(int n, int m, int p, std::uint64_t seed, double rho_max = 0.9);

}  // namespace watermark
