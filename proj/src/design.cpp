#include "watermark/design.hpp"

#include <cmath>
#include <stdexcept>

namespace watermark {

namespace {

void check_series_convergent(const CVector& lambdas) {
  for (Index i = 0; i < lambdas.size(); ++i) {
    for (Index j = i; j < lambdas.size(); ++j) {
      if (std::abs(lambdas[i] * lambdas[j]) >= 1.0) {
        throw std::runtime_error("design: divergent series (|lambda_i lambda_j| >= 1)");
      }
    }
  }
}

/// sum_{i,j} Omega_i^T M Omega_j / (1 - lambda_i lambda_j), the closed form of
/// sum_tau H_tau^T M H_tau. Transposes (not adjoints) throughout; the
/// conjugate-paired family makes the total real.
CMatrix pair_sum_left(const CVector& lambdas, const std::vector<CMatrix>& residues,
                      const CMatrix& M) {
  const Index p = residues.front().cols();
  CMatrix acc = CMatrix::Zero(p, p);
  for (Index i = 0; i < lambdas.size(); ++i) {
    const CMatrix left = residues[static_cast<std::size_t>(i)].transpose() * M;
    for (Index j = 0; j < lambdas.size(); ++j) {
      acc += left * residues[static_cast<std::size_t>(j)] / (1.0 - lambdas[i] * lambdas[j]);
    }
  }
  return acc;
}

}  // namespace

CostWeights CostWeights::identity(Index m, Index p) {
  return CostWeights{Matrix::Identity(m, m), Matrix::Zero(m, p), Matrix::Zero(p, m),
                     Matrix::Identity(p, p)};
}

Matrix CostWeights::assembled() const {
  const Index m = yy.rows();
  const Index p = phiphi.rows();
  Matrix X(m + p, m + p);
  X.topLeftCorner(m, m) = yy;
  X.topRightCorner(m, p) = yphi;
  X.bottomLeftCorner(p, m) = phiy;
  X.bottomRightCorner(p, p) = phiphi;
  return X;
}

Matrix CostWeights::schur_complement() const {
  return symmetrized(phiphi - phiy * Eigen::LLT<Matrix>(yy).solve(yphi));
}

void CostWeights::validate() const {
  if (yy.rows() != yy.cols() || phiphi.rows() != phiphi.cols() ||
      yphi.rows() != yy.rows() || yphi.cols() != phiphi.rows() ||
      phiy.rows() != phiphi.rows() || phiy.cols() != yy.rows()) {
    throw std::invalid_argument("CostWeights: inconsistent block dimensions");
  }
  if ((phiy - yphi.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("CostWeights: phiy must equal yphi^T");
  }
  if (min_eigenvalue(assembled()) <= 0.0) {
    throw std::invalid_argument("CostWeights: assembled block matrix must be positive definite");
  }
}

Matrix steady_watermark_cov(const ModalDecomposition& modal, const Matrix& U) {
  check_series_convergent(modal.lambdas);
  const Index m = modal.residues.front().rows();
  const CMatrix Uc = U.cast<Complex>();
  CMatrix acc = CMatrix::Zero(m, m);
  for (Index i = 0; i < modal.lambdas.size(); ++i) {
    const CMatrix left = modal.residues[static_cast<std::size_t>(i)] * Uc;
    for (Index j = 0; j < modal.lambdas.size(); ++j) {
      acc += left * modal.residues[static_cast<std::size_t>(j)].transpose() /
             (1.0 - modal.lambdas[i] * modal.lambdas[j]);
    }
  }
  return symmetrized(realified(acc));
}

double expected_kl(const Matrix& Ucal, const Matrix& Wcal) {
  Eigen::LLT<Matrix> llt(symmetrized(Wcal));
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("expected_kl: Wcal must be positive definite");
  }
  // Similarity-transform to the symmetric L^{-1} Ucal L^{-T}; its eigenvalues
  // are those of Ucal Wcal^{-1}.
  const Matrix L = llt.matrixL();
  const Matrix half = L.triangularView<Eigen::Lower>().solve(symmetrized(Ucal));
  const Matrix M = symmetrized(L.triangularView<Eigen::Lower>().solve(Matrix(half.transpose())));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(M);
  double trace = 0.0;
  double logdet = 0.0;
  for (Index i = 0; i < eig.eigenvalues().size(); ++i) {
    const double mu = std::max(eig.eigenvalues()[i], 0.0);
    trace += mu;
    logdet += std::log1p(mu);
  }
  return trace - 0.5 * logdet;
}

std::pair<double, double> kl_bounds(const Matrix& Ucal, const Matrix& Wcal) {
  Eigen::LLT<Matrix> llt(symmetrized(Wcal));
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("kl_bounds: Wcal must be positive definite");
  }
  const double trace = llt.solve(symmetrized(Ucal)).trace();
  return {0.5 * trace, trace - 0.5 * std::log1p(trace)};
}

DesignPair design_matrices(const CVector& lambdas, const std::vector<CMatrix>& residues,
                           const Matrix& Wcal, const CostWeights& weights) {
  check_series_convergent(lambdas);
  Eigen::LLT<Matrix> llt(symmetrized(Wcal));
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("design_matrices: Wcal must be positive definite");
  }
  const Index m = residues.front().rows();
  const Index p = residues.front().cols();

  const CMatrix Winv = llt.solve(Matrix::Identity(m, m)).cast<Complex>();
  DesignPair dp;
  dp.P = symmetrized(realified(pair_sum_left(lambdas, residues, Winv)));

  CMatrix H0 = CMatrix::Zero(m, p);
  for (const auto& omega : residues) {
    H0 += omega;
  }
  CMatrix Xc = pair_sum_left(lambdas, residues, weights.yy.cast<Complex>());
  Xc += H0.transpose() * weights.yphi.cast<Complex>();
  Xc += weights.phiy.cast<Complex>() * H0;
  Xc += weights.phiphi.cast<Complex>();
  dp.X = symmetrized(realified(Xc));
  return dp;
}

DesignPair design_matrices(const ModalDecomposition& modal, const Matrix& Wcal,
                           const CostWeights& weights) {
  return design_matrices(modal.lambdas, modal.residues, Wcal, weights);
}

OptimalWatermark optimal_watermark(const DesignPair& dp, double delta) {
  if (delta <= 0.0) {
    throw std::invalid_argument("optimal_watermark: delta must be positive");
  }
  const Index p = dp.X.rows();
  Eigen::LLT<Matrix> llt(symmetrized(dp.X));
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("optimal_watermark: X must be positive definite");
  }
  const Matrix L = llt.matrixL();
  // Symmetric reduction of P z = lambda X z: solve L^{-1} P L^{-T} v = lambda v.
  const Matrix half = L.triangularView<Eigen::Lower>().solve(symmetrized(dp.P));
  const Matrix reduced = symmetrized(L.triangularView<Eigen::Lower>().solve(Matrix(half.transpose())));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(reduced);
  const Index top = p - 1;  // ascending order

  OptimalWatermark out;
  out.gain = eig.eigenvalues()[top];
  if (p > 1) {
    const double gap = eig.eigenvalues()[top] - eig.eigenvalues()[top - 1];
    out.unique_maximizer = gap >= 1e-8 * std::abs(out.gain);
  }

  // Back-substitute and scale to z^T X z = delta; v is unit so
  // z = L^{-T} v has z^T X z = 1 before scaling.
  Vector z = L.transpose().triangularView<Eigen::Upper>().solve(Vector(eig.eigenvectors().col(top)));
  z *= std::sqrt(delta);
  for (Index i = 0; i < z.size(); ++i) {
    if (std::abs(z[i]) > 1e-12 * z.norm()) {
      if (z[i] < 0.0) {
        z = -z;
      }
      break;
    }
  }
  out.direction = z;
  out.U = z * z.transpose();
  return out;
}

LqgCost lqg_cost(const Matrix& U, const ModalDecomposition& modal, const Matrix& Wcal,
                 const CostWeights& weights) {
  LqgCost cost;
  cost.base = (weights.yy * Wcal).trace();

  const Matrix Ucal = steady_watermark_cov(modal, U);
  CMatrix H0c = CMatrix::Zero(modal.residues.front().rows(), modal.residues.front().cols());
  for (const auto& omega : modal.residues) {
    H0c += omega;
  }
  const Matrix H0 = realified(H0c);

  const Index m = Ucal.rows();
  const Index p = U.rows();
  Matrix S(m + p, m + p);
  S.topLeftCorner(m, m) = Ucal;
  S.topRightCorner(m, p) = H0 * U;
  S.bottomLeftCorner(p, m) = U * H0.transpose();
  S.bottomRightCorner(p, p) = U;
  cost.excess = (weights.assembled() * S).trace();
  return cost;
}

}  // namespace watermark
