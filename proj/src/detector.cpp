#include "watermark/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace watermark {

ResponseState::ResponseState(CVector lambdas, std::vector<CMatrix> residues) {
  set_coefficients(std::move(lambdas), std::move(residues));
  reset();
}

void ResponseState::set_coefficients(CVector lambdas, std::vector<CMatrix> residues) {
  if (static_cast<std::size_t>(lambdas.size()) != residues.size()) {
    throw std::invalid_argument("ResponseState: one residue per eigenvalue required");
  }
  lambdas_ = std::move(lambdas);
  residues_ = std::move(residues);
  const Index m = residues_.empty() ? 0 : residues_.front().rows();
  if (components_.size() != residues_.size() ||
      (!components_.empty() && components_.front().size() != m)) {
    reset();
  }
}

void ResponseState::reset() {
  const Index m = residues_.empty() ? 0 : residues_.front().rows();
  components_.assign(residues_.size(), CVector::Zero(m));
  gamma_ = Vector::Zero(m);
}

void ResponseState::update(const Vector& phi) {
  const Index m = gamma_.size();
  CVector total = CVector::Zero(m);
  for (std::size_t i = 0; i < components_.size(); ++i) {
    components_[i] = lambdas_[static_cast<Index>(i)] * components_[i] + residues_[i] * phi;
    total += components_[i];
  }
  gamma_ = total.real();
}

void ResponseState::restore_components(std::vector<CVector> components) {
  if (components.size() != residues_.size()) {
    throw std::invalid_argument("ResponseState: component count mismatch");
  }
  components_ = std::move(components);
  const Index m = residues_.empty() ? 0 : residues_.front().rows();
  CVector total = CVector::Zero(m);
  for (const auto& c : components_) {
    total += c;
  }
  gamma_ = total.real();
}

DetectorModel::DetectorModel(Matrix Wcal, Matrix Ucal, double zeta)
    : Wcal_(symmetrized(std::move(Wcal))), Ucal_(symmetrized(std::move(Ucal))), zeta_(zeta) {
  W_llt_.compute(Wcal_);
  WU_llt_.compute(Wcal_ + Ucal_);
  if (W_llt_.info() != Eigen::Success || WU_llt_.info() != Eigen::Success) {
    throw std::runtime_error("DetectorModel: covariances must be positive definite");
  }
}

double DetectorModel::np_statistic(const Vector& y, const Vector& gamma) const {
  const Vector r = y - gamma;
  return r.dot(W_llt_.solve(r)) - y.dot(WU_llt_.solve(y));
}

double np_statistic(const Vector& y, const Vector& gamma, const DetectorModel& model) {
  return model.np_statistic(y, gamma);
}

double threshold_from_cost(double lqg_total) { return lqg_total / 0.9; }

double threshold_from_quantile(std::span<const double> g_trace, double alpha) {
  if (g_trace.empty()) {
    throw std::invalid_argument("threshold_from_quantile: empty calibration trace");
  }
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::invalid_argument("threshold_from_quantile: alpha must be in [0,1]");
  }
  std::vector<double> sorted(g_trace.begin(), g_trace.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<std::ptrdiff_t>(sorted.size());
  // Nearest-rank (1 - alpha) quantile; alpha = 0 picks the maximum.
  std::ptrdiff_t idx =
      static_cast<std::ptrdiff_t>(std::ceil((1.0 - alpha) * static_cast<double>(n))) - 1;
  idx = std::clamp<std::ptrdiff_t>(idx, 0, n - 1);
  return sorted[static_cast<std::size_t>(idx)];
}

}  // namespace watermark
