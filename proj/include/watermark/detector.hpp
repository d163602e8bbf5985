#pragma once

#include <span>
#include <vector>

#include "watermark/lti.hpp"
#include "watermark/types.hpp"

namespace watermark {

/// Tracks the accumulated watermark response gamma_k = sum_t C A^t B phi_{k-t}
/// through its modal recursion gamma_{k,i} = lambda_i gamma_{k-1,i} + Omega_i phi_k.
/// Single-owner mutable; the statistic at time k must be computed before
/// update() is called with phi_k.
class ResponseState {
 public:
  ResponseState() = default;
  ResponseState(CVector lambdas, std::vector<CMatrix> residues);

  /// Swaps in new recursion coefficients, keeping the accumulators.
  void set_coefficients(CVector lambdas, std::vector<CMatrix> residues);

  void update(const Vector& phi);
  void reset();

  /// Reinstates checkpointed accumulators; gamma is recomputed from them.
  void restore_components(std::vector<CVector> components);

  const Vector& gamma() const { return gamma_; }
  const std::vector<CVector>& components() const { return components_; }

 private:
  CVector lambdas_;
  std::vector<CMatrix> residues_;
  std::vector<CVector> components_;
  Vector gamma_;
};

/// Immutable detector parameters; Cholesky factors are cached at construction.
class DetectorModel {
 public:
  DetectorModel() = default;
  DetectorModel(Matrix Wcal, Matrix Ucal, double zeta);

  const Matrix& Wcal() const { return Wcal_; }
  const Matrix& Ucal() const { return Ucal_; }
  double zeta() const { return zeta_; }

  /// g = (y - gamma)^T Wcal^{-1} (y - gamma) - y^T (Wcal + Ucal)^{-1} y.
  double np_statistic(const Vector& y, const Vector& gamma) const;

 private:
  Matrix Wcal_, Ucal_;
  double zeta_ = 0.0;
  Eigen::LLT<Matrix> W_llt_, WU_llt_;
};

double np_statistic(const Vector& y, const Vector& gamma, const DetectorModel& model);

/// Alarm iff g >= zeta (the boundary rejects).
inline bool decide(double g, double zeta) { return g >= zeta; }

/// zeta = J / 0.9.
double threshold_from_cost(double lqg_total);

/// (1 - alpha) sample quantile of a no-attack statistic trace; alpha = 0
/// returns the maximum. Throws std::invalid_argument on an empty trace.
double threshold_from_quantile(std::span<const double> g_trace, double alpha);

}  // namespace watermark
