#include "watermark/learner.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace watermark {

namespace {

constexpr double kEigenGapTol = 1e-8;
constexpr double kModulusClamp = 0.999;

template <typename Derived>
bool same(const Eigen::MatrixBase<Derived>& a, const Eigen::MatrixBase<Derived>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 || (a.array() == b.array()).all());
}

}  // namespace

void LearnerConfig::validate() const {
  if (n_model < 1 || m < 1 || p < 1) {
    throw std::invalid_argument("LearnerConfig: dimensions must be >= 1");
  }
  if (delta <= 0.0) {
    throw std::invalid_argument("LearnerConfig: delta must be positive");
  }
  if (beta < 0.0 || beta >= 1.0) {
    throw std::invalid_argument("LearnerConfig: beta must lie in [0, 1)");
  }
  if (redesign_interval < 1) {
    throw std::invalid_argument("LearnerConfig: redesign_interval must be >= 1");
  }
  weights.validate();
  if (weights.yy.rows() != m || weights.phiphi.rows() != p) {
    throw std::invalid_argument("LearnerConfig: cost weights sized for wrong (m, p)");
  }
}

// -- identification pieces ---------------------------------------------------

Vector estimate_char_poly(const std::vector<Matrix>& H_hat) {
  if (H_hat.size() < 2 || H_hat.size() % 3 != 2) {
    throw std::invalid_argument("estimate_char_poly: expected 3n-1 Markov estimates");
  }
  const int n = (static_cast<int>(H_hat.size()) + 1) / 3;
  const Index m = H_hat.front().rows();
  const Index p = H_hat.front().cols();
  const Index block = m * p;

  Matrix M((2 * n - 1) * block, n);
  Vector b((2 * n - 1) * block);
  for (int r = 0; r < 2 * n - 1; ++r) {
    for (int c = 0; c < n; ++c) {
      M.block(r * block, c, block, 1) =
          Eigen::Map<const Vector>(H_hat[static_cast<std::size_t>(r + c)].data(), block);
    }
    b.segment(r * block, block) =
        -Eigen::Map<const Vector>(H_hat[static_cast<std::size_t>(n + r)].data(), block);
  }

  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv[n - 1] <= 0.0 || sv[0] / sv[n - 1] > 1e12) {
    throw std::runtime_error("estimate_char_poly: insufficient excitation");
  }
  return svd.solve(b);
}

CVector poly_roots(const Vector& alpha) {
  const Index n = alpha.size();
  if (n == 0) {
    return CVector();
  }
  CVector roots(n);
  if (n == 1) {
    roots[0] = Complex(-alpha[0], 0.0);
    return roots;
  }
  Matrix companion = Matrix::Zero(n, n);
  companion.diagonal(-1).setOnes();
  companion.col(n - 1) = -alpha;
  Eigen::EigenSolver<Matrix> solver(companion, false);
  roots = solver.eigenvalues();

  // Average near-conjugates into exact pairs (real Schur already delivers
  // exact ones; this guards downstream symmetry against rounding).
  std::vector<bool> done(static_cast<std::size_t>(n), false);
  for (Index i = 0; i < n; ++i) {
    if (done[static_cast<std::size_t>(i)] || roots[i].imag() == 0.0) {
      done[static_cast<std::size_t>(i)] = true;
      continue;
    }
    Index best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (j == i || done[static_cast<std::size_t>(j)]) {
        continue;
      }
      const double dist = std::abs(roots[j] - std::conj(roots[i]));
      if (dist < best_dist) {
        best_dist = dist;
        best = j;
      }
    }
    if (best >= 0 && best_dist < 1e-6 * (1.0 + std::abs(roots[i]))) {
      const Complex z = 0.5 * (roots[i] + std::conj(roots[best]));
      roots[i] = z;
      roots[best] = std::conj(z);
      done[static_cast<std::size_t>(best)] = true;
    }
    done[static_cast<std::size_t>(i)] = true;
  }

  const auto order = canonical_modal_order(roots);
  CVector sorted(n);
  for (Index i = 0; i < n; ++i) {
    sorted[i] = roots[order[static_cast<std::size_t>(i)]];
  }
  return sorted;
}

std::vector<CMatrix> estimate_residues(const CVector& lambdas, const std::vector<Matrix>& H_hat) {
  const Index n = lambdas.size();
  if (n == 0 || H_hat.empty()) {
    throw std::invalid_argument("estimate_residues: empty inputs");
  }
  if (min_pairwise_gap(lambdas) < kEigenGapTol) {
    throw std::runtime_error("estimate_residues: degenerate spectrum");
  }
  const Index rows = static_cast<Index>(H_hat.size());
  const Index m = H_hat.front().rows();
  const Index p = H_hat.front().cols();

  CMatrix V(rows, n);
  V.row(0).setOnes();
  for (Index r = 1; r < rows; ++r) {
    for (Index i = 0; i < n; ++i) {
      V(r, i) = V(r - 1, i) * lambdas[i];
    }
  }
  CMatrix rhs(rows, m * p);
  for (Index r = 0; r < rows; ++r) {
    rhs.row(r) =
        Eigen::Map<const Vector>(H_hat[static_cast<std::size_t>(r)].data(), m * p).transpose();
  }
  const CMatrix sol = V.colPivHouseholderQr().solve(rhs);  // n x (m p)

  std::vector<CMatrix> residues(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    CMatrix omega(m, p);
    for (Index b = 0; b < p; ++b) {
      for (Index a = 0; a < m; ++a) {
        omega(a, b) = sol(i, a + b * m);
      }
    }
    residues[static_cast<std::size_t>(i)] = std::move(omega);
  }

  // Conjugate symmetry: zero the dust on real modes, average conjugate pairs.
  std::vector<bool> done(static_cast<std::size_t>(n), false);
  for (Index i = 0; i < n; ++i) {
    if (done[static_cast<std::size_t>(i)]) {
      continue;
    }
    if (lambdas[i].imag() == 0.0) {
      residues[static_cast<std::size_t>(i)] =
          residues[static_cast<std::size_t>(i)].real().cast<Complex>();
      done[static_cast<std::size_t>(i)] = true;
      continue;
    }
    for (Index j = i + 1; j < n; ++j) {
      if (!done[static_cast<std::size_t>(j)] &&
          std::abs(lambdas[j] - std::conj(lambdas[i])) < 1e-9) {
        const CMatrix avg = 0.5 * (residues[static_cast<std::size_t>(i)] +
                                   residues[static_cast<std::size_t>(j)].conjugate());
        residues[static_cast<std::size_t>(i)] = avg;
        residues[static_cast<std::size_t>(j)] = avg.conjugate();
        done[static_cast<std::size_t>(j)] = true;
        break;
      }
    }
    done[static_cast<std::size_t>(i)] = true;
  }
  return residues;
}

// -- Learner ------------------------------------------------------------------

Learner::Learner(LearnerConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.weights.yy.size() == 0) {
    cfg_.weights = CostWeights::identity(cfg_.m, cfg_.p);
  }
  cfg_.validate();
  stream_ = GaussianStream(derive_seed(seed, 0x4C));

  const int n = cfg_.n_model;
  const Index m = cfg_.m;
  const Index p = cfg_.p;

  markov_sums_.assign(static_cast<std::size_t>(3 * n - 1), Matrix::Zero(m, p));
  output_sum_ = Matrix::Zero(m, m);
  resp_pairs_.assign(static_cast<std::size_t>(n) * n, CMatrix::Zero(m, m));
  resp_cum_ = Matrix::Zero(m, m);
  pair_decay_.assign(static_cast<std::size_t>(n) * n, Complex(0.0, 0.0));
  pair_feed_.assign(static_cast<std::size_t>(n) * n, CMatrix::Zero(m, m));

  const std::size_t cap = static_cast<std::size_t>(3 * n);
  ring_phi_.assign(cap, Vector::Zero(p));
  ring_weighted_.assign(cap, Eigen::RowVectorXd::Zero(p));
  ring_time_.assign(cap, -1);

  model_.lambdas = CVector::Zero(n);
  model_.residues.assign(static_cast<std::size_t>(n), CMatrix::Zero(m, p));
  model_.Wcal = Matrix::Identity(m, m);
  model_.identified = false;
  response_ = ResponseState(model_.lambdas, model_.residues);

  U_star_ = Matrix::Zero(p, p);
  explore_coef_ = cfg_.delta;  // delta / 1^beta before any sample
  set_watermark_cov(explore_coef_ * Matrix::Identity(p, p));
}

Vector Learner::generate_watermark() {
  if (awaiting_ingest_) {
    throw std::logic_error("Learner::generate_watermark: previous tick not ingested");
  }
  const Vector phi = U_sqrt_ * stream_.next_vector(cfg_.p);
  const std::size_t slot = static_cast<std::size_t>(k_ % static_cast<std::int64_t>(ring_phi_.size()));
  ring_phi_[slot] = phi;
  ring_weighted_[slot] = (U_inv_ * phi).transpose();
  ring_time_[slot] = k_;
  awaiting_ingest_ = true;
  return phi;
}

double Learner::np_statistic(const Vector& y) const {
  // Wcal comes from the last redesign; Ucal is the live recursion state.
  const Matrix& What = model_.Wcal;
  const Matrix Uhat = response_cov_estimate();
  Eigen::LLT<Matrix> w_llt(What);
  Eigen::LLT<Matrix> wu_llt(What + Uhat);
  const Vector r = y - response_.gamma();
  return r.dot(w_llt.solve(r)) - y.dot(wu_llt.solve(y));
}

void Learner::ingest(const Vector& y) {
  if (!awaiting_ingest_) {
    throw std::logic_error("Learner::ingest: generate_watermark must run first each tick");
  }
  if (y.size() != cfg_.m) {
    throw std::invalid_argument("Learner::ingest: output dimension mismatch");
  }
  const auto cap = static_cast<std::int64_t>(ring_phi_.size());
  const std::size_t lags = markov_sums_.size();  // 3n - 1
  for (std::size_t tau = 0; tau < lags; ++tau) {
    const std::int64_t t = k_ - 1 - static_cast<std::int64_t>(tau);
    if (t < 0) {
      break;
    }
    const auto slot = static_cast<std::size_t>(t % cap);
    markov_sums_[tau] += y * ring_weighted_[slot];
  }
  output_sum_ += y * y.transpose();

  // Accumulate sum_t Ucal_t with the pre-advance value (Ucal_0 = 0), then
  // advance the pair recursion with the covariance in force at this tick.
  CMatrix tick_sum = CMatrix::Zero(cfg_.m, cfg_.m);
  for (const auto& pair : resp_pairs_) {
    tick_sum += pair;
  }
  resp_cum_ += tick_sum.real();
  for (std::size_t idx = 0; idx < resp_pairs_.size(); ++idx) {
    resp_pairs_[idx] *= pair_decay_[idx];
    resp_pairs_[idx] += pair_feed_[idx];
  }

  const auto slot_now = static_cast<std::size_t>(k_ % cap);
  response_.update(ring_phi_[slot_now]);
  if (cfg_.keep_logs) {
    logs_.push_back(TickLog{y, ring_phi_[slot_now], U_});
  }
  k_ += 1;
  awaiting_ingest_ = false;
}

std::vector<Matrix> Learner::markov_estimates() const {
  const double scale = 1.0 / static_cast<double>(std::max<std::int64_t>(k_, 1));
  std::vector<Matrix> h;
  h.reserve(markov_sums_.size());
  for (const auto& sum : markov_sums_) {
    h.push_back(sum * scale);
  }
  return h;
}

Matrix Learner::noise_cov_estimate() const {
  if (k_ == 0) {
    return psd_floor(Matrix::Zero(cfg_.m, cfg_.m));
  }
  const double scale = 1.0 / static_cast<double>(k_);
  return psd_floor(symmetrized((output_sum_ - resp_cum_) * scale));
}

Matrix Learner::response_cov_estimate() const {
  CMatrix acc = CMatrix::Zero(cfg_.m, cfg_.m);
  for (const auto& pair : resp_pairs_) {
    acc += pair;
  }
  return psd_floor(symmetrized(acc.real()), 0.0);
}

void Learner::set_model_estimate(CVector lambdas, std::vector<CMatrix> residues, Matrix Wcal) {
  if (lambdas.size() != cfg_.n_model ||
      residues.size() != static_cast<std::size_t>(cfg_.n_model)) {
    throw std::invalid_argument("Learner::set_model_estimate: expected n_model modes");
  }
  for (const auto& omega : residues) {
    if (omega.rows() != cfg_.m || omega.cols() != cfg_.p) {
      throw std::invalid_argument("Learner::set_model_estimate: residue dimension mismatch");
    }
  }
  model_.lambdas = std::move(lambdas);
  model_.residues = std::move(residues);
  model_.Wcal = psd_floor(std::move(Wcal));
  model_.identified = true;
  response_.set_coefficients(model_.lambdas, model_.residues);
  const int n = cfg_.n_model;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      pair_decay_[static_cast<std::size_t>(i) * n + j] = model_.lambdas[i] * model_.lambdas[j];
    }
  }
  rebuild_pair_feed();
}

void Learner::rebuild_pair_feed() {
  const int n = cfg_.n_model;
  const CMatrix Uc = U_.cast<Complex>();
  for (int i = 0; i < n; ++i) {
    const CMatrix left = model_.residues[static_cast<std::size_t>(i)] * Uc;
    for (int j = 0; j < n; ++j) {
      pair_feed_[static_cast<std::size_t>(i) * n + j] =
          left * model_.residues[static_cast<std::size_t>(j)].transpose();
    }
  }
}

void Learner::set_watermark_cov(const Matrix& U) {
  U_ = symmetrized(U);
  U_sqrt_ = sym_sqrt(U_);
  Eigen::LLT<Matrix> llt(U_);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("Learner: watermark covariance must stay positive definite");
  }
  U_inv_ = llt.solve(Matrix::Identity(cfg_.p, cfg_.p));
  rebuild_pair_feed();
}

bool Learner::redesign() {
  RedesignRecord rec;
  rec.k = k_;
  bool ok = false;
  if (k_ > 0) {
    try {
      const auto H = markov_estimates();
      const Vector alpha = estimate_char_poly(H);
      CVector lambdas = poly_roots(alpha);
      for (Index i = 0; i < lambdas.size(); ++i) {
        const double modulus = std::abs(lambdas[i]);
        if (modulus >= 1.0) {
          lambdas[i] *= kModulusClamp / modulus;
        }
      }
      auto residues = estimate_residues(lambdas, H);
      const Matrix What = noise_cov_estimate();
      set_model_estimate(std::move(lambdas), std::move(residues), What);
      model_.dp = design_matrices(model_.lambdas, model_.residues, model_.Wcal, cfg_.weights);
      U_star_ = optimal_watermark(model_.dp, cfg_.delta).U;
      ok = true;
    } catch (const std::exception&) {
      ok = false;  // keep the previous exploitation part
    }
  }
  explore_coef_ = cfg_.delta / std::pow(static_cast<double>(std::max<std::int64_t>(k_, 1)), cfg_.beta);
  set_watermark_cov(U_star_ + explore_coef_ * Matrix::Identity(cfg_.p, cfg_.p));

  rec.identified = ok;
  rec.exploration = explore_coef_;
  rec.U_star = U_star_;
  rec.U = U_;
  if (ok) {
    rec.lambdas = model_.lambdas;
  }
  redesign_log_.push_back(std::move(rec));
  return ok;
}

bool Learner::operator==(const Learner& other) const {
  auto cfg_equal = [&] {
    return cfg_.n_model == other.cfg_.n_model && cfg_.m == other.cfg_.m && cfg_.p == other.cfg_.p &&
           cfg_.delta == other.cfg_.delta && cfg_.beta == other.cfg_.beta &&
           cfg_.redesign_interval == other.cfg_.redesign_interval &&
           cfg_.keep_logs == other.cfg_.keep_logs && same(cfg_.weights.yy, other.cfg_.weights.yy) &&
           same(cfg_.weights.yphi, other.cfg_.weights.yphi) &&
           same(cfg_.weights.phiy, other.cfg_.weights.phiy) &&
           same(cfg_.weights.phiphi, other.cfg_.weights.phiphi);
  };
  if (!cfg_equal() || !(stream_ == other.stream_) || k_ != other.k_ ||
      awaiting_ingest_ != other.awaiting_ingest_ || explore_coef_ != other.explore_coef_) {
    return false;
  }
  if (markov_sums_.size() != other.markov_sums_.size() ||
      resp_pairs_.size() != other.resp_pairs_.size() || ring_time_ != other.ring_time_ ||
      pair_decay_ != other.pair_decay_) {
    return false;
  }
  for (std::size_t i = 0; i < markov_sums_.size(); ++i) {
    if (!same(markov_sums_[i], other.markov_sums_[i])) {
      return false;
    }
  }
  for (std::size_t i = 0; i < resp_pairs_.size(); ++i) {
    if (!same(resp_pairs_[i], other.resp_pairs_[i]) || !same(pair_feed_[i], other.pair_feed_[i])) {
      return false;
    }
  }
  for (std::size_t i = 0; i < ring_phi_.size(); ++i) {
    if (!same(ring_phi_[i], other.ring_phi_[i]) ||
        !same(ring_weighted_[i], other.ring_weighted_[i])) {
      return false;
    }
  }
  if (!same(output_sum_, other.output_sum_) || !same(resp_cum_, other.resp_cum_) ||
      !same(U_star_, other.U_star_) || !same(U_, other.U_) || !same(U_sqrt_, other.U_sqrt_) ||
      !same(U_inv_, other.U_inv_)) {
    return false;
  }
  if (!same(model_.lambdas, other.model_.lambdas) || !same(model_.Wcal, other.model_.Wcal) ||
      model_.identified != other.model_.identified || !same(model_.dp.P, other.model_.dp.P) ||
      !same(model_.dp.X, other.model_.dp.X)) {
    return false;
  }
  for (std::size_t i = 0; i < model_.residues.size(); ++i) {
    if (!same(model_.residues[i], other.model_.residues[i])) {
      return false;
    }
  }
  if (!same(response_.gamma(), other.response_.gamma()) ||
      response_.components().size() != other.response_.components().size()) {
    return false;
  }
  for (std::size_t i = 0; i < response_.components().size(); ++i) {
    if (!same(response_.components()[i], other.response_.components()[i])) {
      return false;
    }
  }
  return redesign_log_.size() == other.redesign_log_.size() && logs_.size() == other.logs_.size();
}

}  // namespace watermark
