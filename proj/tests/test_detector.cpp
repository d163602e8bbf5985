#include "watermark/detector.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "watermark/design.hpp"
#include "watermark/rng.hpp"

using namespace watermark;

TEST_CASE("response recursion tracks the convolution") {
  SUBCASE("all-zero watermarks keep gamma at zero") {
    const auto modal = modal_decomposition(random_stable_system(3, 2, 2, 3, 0.9));
    ResponseState response(modal.lambdas, modal.residues);
    for (int k = 0; k < 10; ++k) {
      response.update(Vector::Zero(2));
      CHECK(response.gamma().norm() == 0.0);
    }
  }
  SUBCASE("memoryless plant remembers one step") {
    LinearSystem sys;
    sys.A = Matrix::Zero(1, 1);
    sys.B = Matrix::Ones(1, 2);
    sys.C = Matrix::Ones(2, 1);
    sys.Q = Matrix::Identity(1, 1);
    sys.R = Matrix::Identity(2, 2);
    const auto modal = modal_decomposition(sys);
    ResponseState response(modal.lambdas, modal.residues);
    Vector phi(2);
    phi << 1.0, 2.0;
    response.update(phi);
    const Matrix H0 = sys.C * sys.B;
    CHECK((response.gamma() - H0 * phi).norm() <= 1e-12);
    response.update(Vector::Zero(2));
    CHECK(response.gamma().norm() <= 1e-12);
  }
  SUBCASE("50 seeded steps match the direct convolution") {
    const LinearSystem sys = random_stable_system(3, 2, 2, 19, 0.9);
    const auto modal = modal_decomposition(sys);
    ResponseState response(modal.lambdas, modal.residues);
    GaussianStream stream(4);
    std::vector<Vector> phis;
    for (int k = 0; k < 50; ++k) {
      phis.push_back(stream.next_vector(2));
      response.update(phis.back());
      const Vector expected = oracles::convolution_response(sys, phis);
      CHECK((response.gamma() - expected).norm() <= 1e-9);
    }
  }
}

TEST_CASE("Neyman-Pearson statistic") {
  SUBCASE("all-zero inputs give zero") {
    const DetectorModel model(Matrix::Identity(2, 2), Matrix::Identity(2, 2), 1.0);
    CHECK(model.np_statistic(Vector::Zero(2), Vector::Zero(2)) == doctest::Approx(0.0));
  }
  SUBCASE("scalar plug-in values") {
    const DetectorModel model(Matrix::Identity(1, 1), Matrix::Identity(1, 1), 0.0);
    Vector y(1), gamma(1);
    y << 2.0;
    gamma << 0.0;
    CHECK(model.np_statistic(y, gamma) == doctest::Approx(2.0));
    gamma << 2.0;
    CHECK(model.np_statistic(y, gamma) == doctest::Approx(-2.0));
  }
  SUBCASE("invariant under orthogonal output coordinates") {
    GaussianStream stream(12);
    for (int trial = 0; trial < 20; ++trial) {
      Matrix G(3, 3);
      for (Index i = 0; i < 3; ++i) {
        for (Index j = 0; j < 3; ++j) {
          G(i, j) = stream.next();
        }
      }
      const Matrix T = Eigen::HouseholderQR<Matrix>(G).householderQ();
      Matrix Wcal = G * G.transpose() + 0.5 * Matrix::Identity(3, 3);
      Matrix Ucal = Matrix::Identity(3, 3);
      Ucal(0, 0) = 2.0;
      const Vector y = stream.next_vector(3);
      const Vector gamma = stream.next_vector(3);
      const DetectorModel base(Wcal, Ucal, 0.0);
      const DetectorModel rotated(T * Wcal * T.transpose(), T * Ucal * T.transpose(), 0.0);
      CHECK(rotated.np_statistic(T * y, T * gamma) ==
            doctest::Approx(base.np_statistic(y, gamma)).epsilon(1e-9));
    }
  }
  SUBCASE("singular covariance is rejected") {
    CHECK_THROWS_AS(DetectorModel(Matrix::Zero(2, 2), Matrix::Identity(2, 2), 0.0),
                    std::runtime_error);
  }
}

TEST_CASE("decision rule") {
  CHECK_FALSE(decide(0.0, 1.0));
  CHECK(decide(2.0, 2.0));  // the boundary rejects
  CHECK_FALSE(decide(-2.0, 0.0));
}

TEST_CASE("threshold calibration") {
  SUBCASE("cost-ratio rule") { CHECK(threshold_from_cost(9.0) == doctest::Approx(10.0)); }
  SUBCASE("extreme quantile picks the maximum") {
    const std::vector<double> trace{-1.0, 0.0, 3.0};
    CHECK(threshold_from_quantile(trace, 0.0) == doctest::Approx(3.0));
  }
  SUBCASE("empty trace throws") {
    const std::vector<double> empty;
    CHECK_THROWS_AS(threshold_from_quantile(empty, 0.1), std::invalid_argument);
  }
  SUBCASE("quantile is self-consistent at alpha = 0.05") {
    GaussianStream stream(33);
    std::vector<double> calibration(10000);
    for (auto& g : calibration) {
      g = stream.next();
    }
    const double zeta = threshold_from_quantile(calibration, 0.05);
    int alarms = 0;
    const int fresh = 10000;
    for (int i = 0; i < fresh; ++i) {
      if (decide(stream.next(), zeta)) {
        ++alarms;
      }
    }
    const double rate = static_cast<double>(alarms) / fresh;
    CHECK(rate == doctest::Approx(0.05).epsilon(0.2));  // 0.05 +- 0.01
  }
}

TEST_CASE("statistic separates live from replayed outputs") {
  const LinearSystem sys = random_stable_system(2, 2, 2, 61, 0.9);
  const auto modal = modal_decomposition(sys);
  const Matrix Wcal = steady_output_cov(sys);
  const auto dp = design_matrices(modal, Wcal, CostWeights::identity(2, 2));
  const Matrix U = optimal_watermark(dp, 10.0).U;
  const Matrix Ucal = steady_watermark_cov(modal, U);
  const DetectorModel model(Wcal, Ucal, 0.0);
  const Matrix U_sqrt = sym_sqrt(U);

  // Two independent watermarked runs; judging run b's outputs against run a's
  // response reproduces replayed statistics with a large offset.
  SimState sim_a = initial_state(sys, 101, true);
  SimState sim_b = initial_state(sys, 202, true);
  GaussianStream wm_a(303), wm_b(404);
  ResponseState resp_a(modal.lambdas, modal.residues);

  const int steps = 100000;
  double mean_h0 = 0.0, mean_h1 = 0.0;
  for (int k = 0; k < steps; ++k) {
    const Vector phi_a = U_sqrt * wm_a.next_vector(2);
    const Vector phi_b = U_sqrt * wm_b.next_vector(2);
    const Vector y_a = simulate_step(sys, sim_a, phi_a);
    const Vector y_b = simulate_step(sys, sim_b, phi_b);
    mean_h0 += model.np_statistic(y_a, resp_a.gamma());
    mean_h1 += model.np_statistic(y_b, resp_a.gamma());
    resp_a.update(phi_a);
  }
  mean_h0 /= steps;
  mean_h1 /= steps;

  const double kl_lower = 0.5 * Eigen::LLT<Matrix>(Wcal).solve(Ucal).trace();
  CHECK(mean_h1 - mean_h0 >= kl_lower);
}
