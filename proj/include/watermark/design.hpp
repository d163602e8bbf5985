#pragma once

#include <utility>

#include "watermark/lti.hpp"
#include "watermark/types.hpp"

namespace watermark {

/// Quadratic performance weights on [y; phi]. The assembled block matrix must
/// be positive definite and yphi = phiy^T.
struct CostWeights {
  Matrix yy;      // m x m
  Matrix yphi;    // m x p
  Matrix phiy;    // p x m
  Matrix phiphi;  // p x p

  static CostWeights identity(Index m, Index p);
  Matrix assembled() const;
  /// phiphi - phiy * yy^{-1} * yphi, the floor of the cost matrix X.
  Matrix schur_complement() const;
  void validate() const;
};

/// The pair (P, X) defining the watermark design problem:
/// maximize tr(U P) subject to tr(U X) <= delta, U >= 0.
struct DesignPair {
  Matrix P;  // p x p, PSD detection gain
  Matrix X;  // p x p, PD cost
};

struct OptimalWatermark {
  Matrix U;                      // p x p, rank one
  Vector direction;              // z with U = z z^T and z^T X z = delta
  double gain = 0.0;             // top generalized eigenvalue of (P, X)
  bool unique_maximizer = true;  // false when the top eigen-gap is < 1e-8 * gain
};

/// Steady covariance of the watermark response,
/// sum_{i,j} Omega_i U Omega_j^T / (1 - lambda_i lambda_j).
/// Throws std::runtime_error("divergent series") when |lambda_i lambda_j| >= 1.
Matrix steady_watermark_cov(const ModalDecomposition& modal, const Matrix& U);

/// Expected KL divergence between the attacked and nominal output
/// distributions: tr(Ucal Wcal^{-1}) - 0.5 * logdet(I + Ucal Wcal^{-1}).
double expected_kl(const Matrix& Ucal, const Matrix& Wcal);

/// (lower, upper) with lower = tr/2 and upper = tr - 0.5*log(1 + tr),
/// tr = tr(Ucal Wcal^{-1}). Always lower <= expected_kl <= upper.
std::pair<double, double> kl_bounds(const Matrix& Ucal, const Matrix& Wcal);

/// Closed-form P and X from a modal expansion (works for estimates too).
DesignPair design_matrices(const CVector& lambdas, const std::vector<CMatrix>& residues,
                           const Matrix& Wcal, const CostWeights& weights);
DesignPair design_matrices(const ModalDecomposition& modal, const Matrix& Wcal,
                           const CostWeights& weights);

/// Rank-one maximizer U = z z^T of tr(U P) under tr(U X) = delta, via the
/// generalized eigenproblem P z = lambda X z reduced symmetrically through the
/// Cholesky factor of X. The sign of z is canonicalized (first entry of
/// non-negligible magnitude made positive).
OptimalWatermark optimal_watermark(const DesignPair& dp, double delta);

struct LqgCost {
  double base = 0.0;    // J0 = tr(X_yy Wcal), watermark independent
  double excess = 0.0;  // delta J = tr(X S), equals tr(U X) at any U
  double total() const { return base + excess; }
};

/// LQG cost split J = J0 + delta J for watermark covariance U.
LqgCost lqg_cost(const Matrix& U, const ModalDecomposition& modal, const Matrix& Wcal,
                 const CostWeights& weights);

}  // namespace watermark
