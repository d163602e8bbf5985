#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace watermark {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;
using Eigen::Index;

inline Matrix symmetrized(const Matrix& M) { return 0.5 * (M + M.transpose()); }

/// Largest |eigenvalue| of a real square matrix.
double spectral_radius(const Matrix& A);

/// Real part of M, after checking that every imaginary entry is below tol in
/// magnitude. Throws std::runtime_error otherwise.
Matrix realified(const CMatrix& M, double tol = 1e-9);

/// Symmetric PSD square root via eigendecomposition (negative dust clamped to zero).
Matrix sym_sqrt(const Matrix& M);

/// Projects a symmetric matrix onto the cone {eigenvalues >= floor_eig}.
/// A Cholesky probe detects the common case where M already clears the floor,
/// in which case M is returned untouched.
Matrix psd_floor(const Matrix& M, double floor_eig = 1e-8);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& sym);

/// Index permutation putting eigenvalues in canonical order: descending
/// modulus, ties broken by ascending phase.
std::vector<Index> canonical_modal_order(const CVector& lambdas);

/// Minimum pairwise distance between the entries (infinity for size < 2).
double min_pairwise_gap(const CVector& lambdas);

}  // namespace watermark
