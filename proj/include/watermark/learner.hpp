#pragma once

#include <cstdint>
#include <vector>

#include "watermark/design.hpp"
#include "watermark/detector.hpp"
#include "watermark/rng.hpp"
#include "watermark/types.hpp"

namespace watermark {

struct LearnerConfig {
  int n_model = 2;  // model order: the true n, or n' < n in reduced-order mode
  int m = 2;        // output dimension
  int p = 2;        // watermark dimension
  double delta = 10.0;
  double beta = 1.0 / 3.0;    // exploration exponent, must be < 1
  int redesign_interval = 100;
  CostWeights weights;        // defaults to identity blocks when left empty
  bool keep_logs = false;     // retain (y, phi, U) per tick for batch recomputation

  void validate() const;
};

/// Current parameter estimates, all sized by n_model.
struct ModelEstimate {
  CVector lambdas;
  std::vector<CMatrix> residues;
  Matrix Wcal;      // PD-projected noise covariance estimate
  DesignPair dp;    // design pair built on the estimates
  bool identified = false;
};

struct RedesignRecord {
  std::int64_t k = 0;        // samples ingested when the redesign ran
  bool identified = false;
  double exploration = 0.0;  // coefficient of the identity term in U
  Matrix U_star;             // exploitation part
  Matrix U;                  // covariance in force after the redesign
  CVector lambdas;
};

struct TickLog {
  Vector y, phi;
  Matrix U;
};

/// Least-squares fit of the monic characteristic polynomial coefficients
/// alpha_0..alpha_{n-1} from the stacked Hankel blocks of H_hat
/// (H_hat = [H_0 .. H_{3n-2}] estimates). Throws std::runtime_error
/// ("insufficient excitation") when the system is rank deficient
/// (condition > 1e12).
Vector estimate_char_poly(const std::vector<Matrix>& H_hat);

/// Roots of x^n + alpha_{n-1} x^{n-1} + ... + alpha_0 via companion-matrix
/// eigenvalues; near-conjugates are averaged into exact pairs and the result
/// is in canonical order (descending modulus, ascending phase).
CVector poly_roots(const Vector& alpha);

/// Least-squares residue fit against the Vandermonde system built from the
/// eigenvalue estimates; conjugate symmetry is enforced on the result. Throws
/// std::runtime_error("degenerate spectrum") when eigenvalues nearly coincide.
std::vector<CMatrix> estimate_residues(const CVector& lambdas, const std::vector<Matrix>& H_hat);

/// Streaming identification, watermark redesign and plug-in detection.
///
/// Per-tick contract: generate_watermark() -> (plant step) -> np_statistic()
/// -> ingest(). redesign() runs between ticks, typically every
/// redesign_interval samples. Copyable value type; one thread at a time.
class Learner {
 public:
  Learner() = default;
  Learner(LearnerConfig cfg, std::uint64_t seed);

  /// phi_k = U_k^{1/2} zeta_k; records (phi, U^{-1}) for the running sums.
  Vector generate_watermark();

  /// Plug-in statistic g_k: the noise covariance estimate installed by the
  /// last redesign plus the live response-covariance recursion. Call before
  /// ingest each tick.
  double np_statistic(const Vector& y) const;

  /// Folds y_k into every running sum and advances the response recursion.
  /// Throws std::logic_error when called without a prior generate_watermark.
  void ingest(const Vector& y);

  /// Runs the identification chain and the covariance update
  /// U <- U_star + delta / k^beta * I. A failed identification leaves the
  /// exploitation part untouched and refreshes only the exploration term.
  /// Returns whether identification succeeded.
  bool redesign();

  /// Installs external parameter estimates (warm start or exact-parameter
  /// tests); does not touch the watermark covariance.
  void set_model_estimate(CVector lambdas, std::vector<CMatrix> residues, Matrix Wcal);

  // -- views ------------------------------------------------------------
  std::int64_t samples() const { return k_; }
  const LearnerConfig& config() const { return cfg_; }
  const Matrix& watermark_cov() const { return U_; }
  const Matrix& exploit_cov() const { return U_star_; }
  double exploration_coef() const { return explore_coef_; }
  const ModelEstimate& model() const { return model_; }
  const ResponseState& response() const { return response_; }
  const std::vector<RedesignRecord>& redesign_log() const { return redesign_log_; }
  const std::vector<TickLog>& logs() const { return logs_; }

  /// H_{k,tau} = S_tau / (k+1) for tau = 0..3n-2 (zeros before any sample).
  std::vector<Matrix> markov_estimates() const;
  /// W_k = (Y_sum - sum_t Ucal_t) / (k+1), symmetrized and PD-floored.
  Matrix noise_cov_estimate() const;
  /// Ucal_k = sum_ij Ucal_{k,ij}, realified and PSD-projected.
  Matrix response_cov_estimate() const;

  bool operator==(const Learner&) const;

 private:
  friend struct LearnerSerde;  // checkpoint io

  void set_watermark_cov(const Matrix& U);
  void rebuild_pair_feed();

  LearnerConfig cfg_;
  GaussianStream stream_;
  std::int64_t k_ = 0;  // samples ingested
  bool awaiting_ingest_ = false;

  std::vector<Matrix> markov_sums_;   // 3n-1 running sums S_tau
  Matrix output_sum_;                 // sum_t y_t y_t^T
  std::vector<CMatrix> resp_pairs_;   // n^2 accumulators Ucal_{k,ij}, row major
  Matrix resp_cum_;                   // sum_t Ucal_t (realified)
  std::vector<Complex> pair_decay_;   // cached lambda_i lambda_j
  std::vector<CMatrix> pair_feed_;    // cached Omega_i U Omega_j^T

  Matrix U_star_;        // exploitation part of U
  double explore_coef_ = 0.0;
  Matrix U_, U_sqrt_, U_inv_;

  // ring of recent watermarks, indexed by absolute tick (slot = t % capacity)
  std::vector<Vector> ring_phi_;
  std::vector<Eigen::RowVectorXd> ring_weighted_;  // (U_t^{-1} phi_t)^T
  std::vector<std::int64_t> ring_time_;

  ModelEstimate model_;
  ResponseState response_;

  std::vector<RedesignRecord> redesign_log_;
  std::vector<TickLog> logs_;
};

}  // namespace watermark
