#include "watermark/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace watermark {

double spectral_radius(const Matrix& A) {
  if (A.rows() != A.cols()) {
    throw std::invalid_argument("spectral_radius: matrix must be square");
  }
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix realified(const CMatrix& M, double tol) {
  if (M.size() == 0) {
    return M.real();
  }
  const double residue = M.imag().cwiseAbs().maxCoeff();
  if (residue > tol) {
    throw std::runtime_error("realified: imaginary residue " + std::to_string(residue) +
                             " exceeds tolerance");
  }
  return M.real();
}

Matrix sym_sqrt(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(M));
  Vector d = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix psd_floor(const Matrix& M, double floor_eig) {
  Matrix S = symmetrized(M);
  // Fast path: LLT of S - floor*I succeeding certifies eigmin >= floor.
  Eigen::LLT<Matrix> llt(S - floor_eig * Matrix::Identity(S.rows(), S.cols()));
  if (llt.info() == Eigen::Success) {
    return S;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
  Vector d = eig.eigenvalues().cwiseMax(floor_eig);
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

double min_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(sym));
  return eig.eigenvalues().minCoeff();
}

std::vector<Index> canonical_modal_order(const CVector& lambdas) {
  std::vector<Index> idx(static_cast<std::size_t>(lambdas.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    const double ma = std::abs(lambdas[a]);
    const double mb = std::abs(lambdas[b]);
    if (ma != mb) {
      return ma > mb;
    }
    return std::arg(lambdas[a]) < std::arg(lambdas[b]);
  });
  return idx;
}

double min_pairwise_gap(const CVector& lambdas) {
  double gap = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < lambdas.size(); ++i) {
    for (Index j = i + 1; j < lambdas.size(); ++j) {
      gap = std::min(gap, std::abs(lambdas[i] - lambdas[j]));
    }
  }
  return gap;
}

}  // namespace watermark
