#include "watermark/learner.hpp"

#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "watermark/design.hpp"
#include "watermark/io.hpp"

using namespace watermark;

namespace {

LearnerConfig config_for(const LinearSystem& sys, double delta = 10.0) {
  LearnerConfig cfg;
  cfg.n_model = static_cast<int>(sys.n());
  cfg.m = static_cast<int>(sys.m());
  cfg.p = static_cast<int>(sys.p());
  cfg.delta = delta;
  return cfg;
}

/// Drives plant + learner with the standard tick contract.
struct ClosedLoop {
  LinearSystem sys;
  Learner learner;
  SimState sim;

  ClosedLoop(const LinearSystem& system, LearnerConfig cfg, std::uint64_t seed)
      : sys(system),
        learner(cfg, derive_seed(seed, 2)),
        sim(initial_state(system, derive_seed(seed, 0), true)) {}

  void run(std::int64_t steps, bool redesigns = true) {
    for (std::int64_t t = 0; t < steps; ++t) {
      const Vector phi = learner.generate_watermark();
      const Vector y = simulate_step(sys, sim, phi);
      learner.ingest(y);
      if (redesigns && learner.samples() % learner.config().redesign_interval == 0) {
        learner.redesign();
      }
    }
  }
};

}  // namespace

TEST_CASE("watermark generation") {
  const LinearSystem sys = random_stable_system(2, 2, 2, 5, 0.9);
  SUBCASE("covariance scale shows up as an exact factor on the draws") {
    Learner one(config_for(sys, 1.0), 7);   // U = 1 * I before any redesign
    Learner four(config_for(sys, 4.0), 7);  // U = 4 * I, same zeta stream
    for (int k = 0; k < 10; ++k) {
      const Vector a = one.generate_watermark();
      const Vector b = four.generate_watermark();
      CHECK((b - 2.0 * a).norm() <= 1e-12);
      one.ingest(Vector::Zero(2));
      four.ingest(Vector::Zero(2));
    }
  }
  SUBCASE("sample covariance approaches U") {
    Learner learner(config_for(sys, 3.0), 11);
    Matrix acc = Matrix::Zero(2, 2);
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) {
      const Vector phi = learner.generate_watermark();
      acc += phi * phi.transpose();
      learner.ingest(Vector::Zero(2));
    }
    acc /= static_cast<double>(draws);
    CHECK((acc - learner.watermark_cov()).norm() / learner.watermark_cov().norm() <= 0.05);
  }
  SUBCASE("tick sequencing is enforced") {
    Learner learner(config_for(sys), 3);
    CHECK_THROWS_AS(learner.ingest(Vector::Zero(2)), std::logic_error);
    learner.generate_watermark();
    CHECK_THROWS_AS(learner.generate_watermark(), std::logic_error);
    learner.ingest(Vector::Zero(2));
    CHECK(learner.samples() == 1);
  }
}

TEST_CASE("ingest builds the running correlations") {
  const LinearSystem sys = random_stable_system(2, 2, 2, 5, 0.9);
  SUBCASE("first sample hits only negative lags") {
    Learner learner(config_for(sys), 3);
    learner.generate_watermark();
    learner.ingest(Vector::Ones(2));
    for (const auto& h : learner.markov_estimates()) {
      CHECK(h.norm() == 0.0);
    }
  }
  SUBCASE("synthetic lag-2 feed concentrates on H_1") {
    LearnerConfig cfg = config_for(sys, 1.0);  // U stays I (no redesigns)
    Learner learner(cfg, 13);
    std::vector<Vector> history;
    const int steps = 10000;
    for (int t = 0; t < steps; ++t) {
      const Vector phi = learner.generate_watermark();
      history.push_back(phi);
      const Vector y = t >= 2 ? history[static_cast<std::size_t>(t - 2)] : Vector::Zero(2);
      learner.ingest(y);
    }
    const auto h = learner.markov_estimates();
    CHECK((h[1] - Matrix::Identity(2, 2)).norm() <= 0.05);
    CHECK(h[0].norm() <= 0.05);
  }
  SUBCASE("streaming sums equal the batch recomputation") {
    LearnerConfig cfg = config_for(sys);
    cfg.keep_logs = true;
    ClosedLoop loop(sys, cfg, 17);
    loop.run(500);
    const auto& logs = loop.learner.logs();
    const auto k = static_cast<double>(loop.learner.samples());
    const auto h = loop.learner.markov_estimates();
    for (std::size_t tau = 0; tau < h.size(); ++tau) {
      Matrix batch = Matrix::Zero(2, 2);
      for (std::size_t t = 0; t < logs.size(); ++t) {
        const std::ptrdiff_t lag = static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(tau) - 1;
        if (lag < 0) {
          continue;
        }
        const auto& past = logs[static_cast<std::size_t>(lag)];
        batch += logs[t].y * (past.U.inverse() * past.phi).transpose();
      }
      batch /= k;
      CHECK((batch - h[tau]).norm() <= 1e-10);
    }
  }
}

TEST_CASE("characteristic polynomial least squares") {
  SUBCASE("n = 1 single relation") {
    const Matrix H0 = Matrix::Constant(1, 1, 2.0);
    const double lambda = 0.6;
    const std::vector<Matrix> h{H0, lambda * H0};
    const Vector alpha = estimate_char_poly(h);
    CHECK(alpha.size() == 1);
    CHECK(alpha[0] == doctest::Approx(-lambda).epsilon(1e-10));
  }
  SUBCASE("exact data recovers the characteristic polynomial") {
    for (std::uint64_t seed : {2ULL, 9ULL, 31ULL}) {
      const LinearSystem sys = random_stable_system(2, 2, 2, seed, 0.9);
      const auto h = markov_parameters(sys, 4);
      const Vector alpha = estimate_char_poly(h);
      // x^2 + a1 x + a0 with a1 = -tr(A), a0 = det(A)
      CHECK(alpha[1] == doctest::Approx(-sys.A.trace()).epsilon(1e-8));
      CHECK(alpha[0] == doctest::Approx(sys.A.determinant()).epsilon(1e-8));
    }
  }
  SUBCASE("small data perturbations move the fit only slightly") {
    const LinearSystem sys = random_stable_system(2, 2, 2, 9, 0.9);
    auto h = markov_parameters(sys, 4);
    const Vector alpha_star = estimate_char_poly(h);
    GaussianStream stream(3);
    for (auto& block : h) {
      for (Index i = 0; i < block.rows(); ++i) {
        for (Index j = 0; j < block.cols(); ++j) {
          block(i, j) += 1e-6 * stream.next();
        }
      }
    }
    CHECK((estimate_char_poly(h) - alpha_star).norm() <= 1e-3);
  }
  SUBCASE("zero data is insufficient excitation") {
    const std::vector<Matrix> h(5, Matrix::Zero(2, 2));
    CHECK_THROWS_WITH_AS(estimate_char_poly(h), doctest::Contains("insufficient excitation"),
                         std::runtime_error);
  }
}

TEST_CASE("polynomial roots via the companion matrix") {
  SUBCASE("factored quadratic") {
    Vector alpha(2);
    alpha << 0.1, -0.7;  // x^2 - 0.7x + 0.1 = (x - 0.5)(x - 0.2)
    const CVector roots = poly_roots(alpha);
    CHECK(roots[0].real() == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(roots[1].real() == doctest::Approx(0.2).epsilon(1e-10));
    CHECK(std::abs(roots[0].imag()) <= 1e-12);
  }
  SUBCASE("complex pair") {
    Vector alpha(2);
    alpha << 0.72, -1.2;  // x^2 - 1.2x + 0.72 -> 0.6 +- 0.6i
    const CVector roots = poly_roots(alpha);
    CHECK(roots[0] == std::conj(roots[1]));
    CHECK(std::abs(roots[0].real() - 0.6) <= 1e-10);
    CHECK(std::abs(std::abs(roots[0].imag()) - 0.6) <= 1e-10);
  }
  SUBCASE("every root satisfies the residual bound") {
    GaussianStream stream(21);
    for (int trial = 0; trial < 20; ++trial) {
      const Index n = 1 + trial % 5;
      Vector alpha = stream.next_vector(n);
      const CVector roots = poly_roots(alpha);
      for (Index i = 0; i < n; ++i) {
        Complex value = std::pow(roots[i], static_cast<int>(n));
        for (Index j = 0; j < n; ++j) {
          value += alpha[j] * std::pow(roots[i], static_cast<int>(j));
        }
        CHECK(std::abs(value) <= 1e-8 * (1.0 + alpha.cwiseAbs().sum()));
      }
    }
  }
}

TEST_CASE("Vandermonde residue fit") {
  SUBCASE("exact data reproduces the modal residues") {
    for (std::uint64_t seed : {3ULL, 19ULL, 57ULL}) {
      const LinearSystem sys = random_stable_system(3, 2, 2, seed, 0.9);
      const auto modal = modal_decomposition(sys);
      const auto h = markov_parameters(sys, 7);
      const auto residues = estimate_residues(modal.lambdas, h);
      for (std::size_t i = 0; i < residues.size(); ++i) {
        CHECK((residues[i] - modal.residues[i]).cwiseAbs().maxCoeff() <= 1e-8);
      }
    }
  }
  SUBCASE("n = 1 closed-form projection") {
    const double lambda = 0.4;
    const Matrix H0 = Matrix::Constant(1, 1, 1.5);
    std::vector<Matrix> h;
    double num = 0.0, den = 0.0;
    for (int tau = 0; tau < 2; ++tau) {
      h.push_back(std::pow(lambda, tau) * H0);
      num += std::pow(lambda, tau) * h.back()(0, 0);
      den += std::pow(lambda, 2 * tau);
    }
    const auto residues = estimate_residues(CVector::Constant(1, Complex(lambda, 0.0)), h);
    CHECK(residues[0](0, 0).real() == doctest::Approx(num / den).epsilon(1e-10));
  }
  SUBCASE("residues sum to the fitted H_0") {
    const LinearSystem sys = random_stable_system(3, 2, 2, 23, 0.9);
    const auto modal = modal_decomposition(sys);
    const auto h = markov_parameters(sys, 7);
    const auto residues = estimate_residues(modal.lambdas, h);
    CMatrix sum = CMatrix::Zero(2, 2);
    for (const auto& omega : residues) {
      sum += omega;
    }
    CHECK((realified(sum, 1e-7) - h[0]).norm() <= 1e-8);
  }
  SUBCASE("near-coincident eigenvalues are rejected") {
    CVector lambdas(2);
    lambdas << Complex(0.5, 0.0), Complex(0.5 + 1e-10, 0.0);
    const std::vector<Matrix> h(5, Matrix::Identity(2, 2));
    CHECK_THROWS_WITH_AS(estimate_residues(lambdas, h), doctest::Contains("degenerate spectrum"),
                         std::runtime_error);
  }
}

TEST_CASE("noise covariance estimate") {
  const LinearSystem sys = random_stable_system(2, 2, 2, 5, 0.9);
  SUBCASE("with zero watermark response it equals the sample covariance") {
    Learner learner(config_for(sys), 3);
    GaussianStream stream(8);
    Matrix acc = Matrix::Zero(2, 2);
    for (int t = 0; t < 200; ++t) {
      learner.generate_watermark();
      const Vector y = stream.next_vector(2);
      acc += y * y.transpose();
      learner.ingest(y);  // residues are still zero, so nothing is subtracted
    }
    CHECK((learner.noise_cov_estimate() - acc / 200.0).norm() <= 1e-12);
  }
  SUBCASE("scalar response recursion converges geometrically") {
    LinearSystem scalar;
    scalar.A = Matrix::Constant(1, 1, 0.5);
    scalar.B = Matrix::Identity(1, 1);
    scalar.C = Matrix::Identity(1, 1);
    scalar.Q = Matrix::Identity(1, 1);
    scalar.R = Matrix::Identity(1, 1);
    Learner learner(config_for(scalar, 2.0), 3);  // U = 2 is held fixed
    learner.set_model_estimate(CVector::Constant(1, Complex(0.5, 0.0)),
                               {CMatrix::Constant(1, 1, Complex(1.5, 0.0))},
                               Matrix::Identity(1, 1));
    for (int t = 0; t < 200; ++t) {
      learner.generate_watermark();
      learner.ingest(Vector::Zero(1));
    }
    const double expected = 1.5 * 2.0 * 1.5 / (1.0 - 0.25);
    CHECK(learner.response_cov_estimate()(0, 0) == doctest::Approx(expected).epsilon(1e-6));
  }
  SUBCASE("long closed-loop run approaches the true output noise covariance") {
    ClosedLoop loop(sys, config_for(sys), 29);
    loop.run(100000);
    const Matrix Wcal = steady_output_cov(sys);
    CHECK((loop.learner.noise_cov_estimate() - Wcal).norm() / Wcal.norm() <= 0.1);
  }
}

TEST_CASE("redesign updates the watermark covariance") {
  const LinearSystem sys = random_stable_system(2, 2, 2, 5, 0.9);
  SUBCASE("without data only the exploration term appears") {
    Learner learner(config_for(sys), 3);
    CHECK_FALSE(learner.redesign());
    CHECK((learner.watermark_cov() - 10.0 * Matrix::Identity(2, 2)).norm() <= 1e-12);
    CHECK_FALSE(learner.model().identified);
  }
  SUBCASE("with exact sums the exploitation part is the exact optimum") {
    const auto modal = modal_decomposition(sys);
    const Matrix Wcal = steady_output_cov(sys);
    const Matrix exact_U =
        optimal_watermark(design_matrices(modal, Wcal, CostWeights::identity(2, 2)), 10.0).U;
    const auto h = markov_parameters(sys, 4);

    Learner learner(config_for(sys), 3);
    const std::int64_t K = 1000;
    nlohmann::json doc = nlohmann::json::parse(learner_to_json(learner));
    doc["k"] = K;
    for (std::size_t tau = 0; tau < 5; ++tau) {
      for (Index i = 0; i < 2; ++i) {
        for (Index j = 0; j < 2; ++j) {
          doc["markov_sums"][tau][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
              static_cast<double>(K) * h[tau](i, j);
        }
      }
    }
    for (Index i = 0; i < 2; ++i) {
      for (Index j = 0; j < 2; ++j) {
        doc["output_sum"][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            static_cast<double>(K) * Wcal(i, j);
      }
    }
    Learner injected = learner_from_json(doc.dump());
    CHECK(injected.redesign());
    const double explore = 10.0 / std::pow(static_cast<double>(K), 1.0 / 3.0);
    CHECK((injected.exploit_cov() - exact_U).norm() <= 1e-6);
    CHECK((injected.watermark_cov() - exact_U).norm() ==
          doctest::Approx(explore * std::sqrt(2.0)).epsilon(1e-6));
  }
  SUBCASE("closed loop obeys the exploration floor and exploitation cap") {
    const Matrix cap = 10.0 * CostWeights::identity(2, 2).schur_complement().inverse();
    ClosedLoop loop(sys, config_for(sys), 41);
    int redesigns = 0;
    for (int t = 0; t < 3000; ++t) {
      const Vector phi = loop.learner.generate_watermark();
      const Vector y = simulate_step(loop.sys, loop.sim, phi);
      loop.learner.ingest(y);
      if (loop.learner.samples() % 100 == 0 && loop.learner.redesign()) {
        ++redesigns;
        // the budget constraint is tight against the design pair in force now
        const double budget =
            (loop.learner.exploit_cov() * loop.learner.model().dp.X).trace();
        CHECK(budget <= 10.0 * (1.0 + 1e-8));
        CHECK(min_eigenvalue(cap - loop.learner.exploit_cov()) >= -1e-8);
      }
    }
    CHECK(redesigns > 20);
    for (const auto& rec : loop.learner.redesign_log()) {
      CHECK(min_eigenvalue(rec.U) >=
            10.0 / std::pow(static_cast<double>(rec.k) + 1.0, 1.0 / 3.0) - 1e-9);
    }
  }
}

TEST_CASE("online statistic") {
  const LinearSystem sys = random_stable_system(2, 2, 2, 5, 0.9);
  SUBCASE("zero output and zero prediction give zero") {
    Learner learner(config_for(sys), 3);
    CHECK(learner.np_statistic(Vector::Zero(2)) == doctest::Approx(0.0));
  }
  SUBCASE("matches the exact-parameter detector evaluated at the estimates") {
    ClosedLoop loop(sys, config_for(sys), 47);
    loop.run(2000);
    GaussianStream stream(5);
    const Vector y = stream.next_vector(2);
    const DetectorModel plug_in(loop.learner.model().Wcal, loop.learner.response_cov_estimate(),
                                0.0);
    CHECK(loop.learner.np_statistic(y) ==
          doctest::Approx(plug_in.np_statistic(y, loop.learner.response().gamma()))
              .epsilon(1e-12));
  }
}

TEST_CASE("learner checkpoints restore bit-identical state") {
  const LinearSystem sys = random_stable_system(2, 2, 2, 5, 0.9);
  LearnerConfig cfg = config_for(sys);
  cfg.keep_logs = true;
  ClosedLoop loop(sys, cfg, 53);
  loop.run(350);

  const std::string text = learner_to_json(loop.learner);
  Learner restored = learner_from_json(text);
  CHECK(restored == loop.learner);

  // Identical continuations, including the watermark stream.
  ClosedLoop fresh(sys, cfg, 53);
  fresh.learner = restored;
  fresh.sim = loop.sim;
  for (int t = 0; t < 120; ++t) {
    const Vector phi_a = loop.learner.generate_watermark();
    const Vector phi_b = fresh.learner.generate_watermark();
    CHECK((phi_a - phi_b).norm() == 0.0);
    const Vector y_a = simulate_step(loop.sys, loop.sim, phi_a);
    const Vector y_b = simulate_step(fresh.sys, fresh.sim, phi_b);
    CHECK((y_a - y_b).norm() == 0.0);
    loop.learner.ingest(y_a);
    fresh.learner.ingest(y_b);
    if (loop.learner.samples() % 100 == 0) {
      loop.learner.redesign();
      fresh.learner.redesign();
    }
  }
  CHECK(fresh.learner == loop.learner);
}

TEST_CASE("exact-data identification chain") {
  for (std::uint64_t seed : {7ULL, 8ULL, 9ULL, 10ULL}) {
    const int n = 1 + static_cast<int>(seed % 4);
    const LinearSystem sys = random_stable_system(n, 2, 2, seed, 0.9);
    const auto modal = modal_decomposition(sys);
    const auto h = markov_parameters(sys, 3 * n - 2);

    const Vector alpha = estimate_char_poly(h);
    const CVector lambdas = poly_roots(alpha);
    const auto residues = estimate_residues(lambdas, h);
    for (Index i = 0; i < lambdas.size(); ++i) {
      CHECK(std::abs(lambdas[i] - modal.lambdas[i]) <= 1e-7);
      CHECK((residues[static_cast<std::size_t>(i)] - modal.residues[static_cast<std::size_t>(i)])
                .cwiseAbs()
                .maxCoeff() <= 1e-7);
    }
  }
}
