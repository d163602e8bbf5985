#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "watermark/attack.hpp"
#include "watermark/design.hpp"
#include "watermark/detector.hpp"
#include "watermark/learner.hpp"
#include "watermark/lti.hpp"

namespace watermark {

enum class Mode { known_params, online_learning, reduced_order };
enum class ThresholdMode { lqg_ratio, empirical_quantile };

struct GeneratorSpec {
  int n = 2, m = 2, p = 2;
  std::uint64_t seed = 1;
  double rho_max = 0.9;
};

struct AttackSpec {
  std::int64_t record_start = 1;
  std::int64_t record_len = 100;
  std::int64_t replay_start = 101;
};

struct ScenarioConfig {
  std::optional<LinearSystem> system;     // explicit plant ...
  GeneratorSpec generator;                // ... or generated from these parameters
  Mode mode = Mode::known_params;
  std::int64_t horizon = 300;             // scored window length
  std::int64_t warmup = -1;               // -1: 1000 known / 100000 learning
  std::optional<AttackSpec> attack;
  double delta = 10.0;
  double beta = 1.0 / 3.0;
  int redesign_interval = 100;
  int n_model = -1;                       // reduced model order; -1 means full
  std::optional<CostWeights> weights;     // cost blocks X; identity when absent
  ThresholdMode threshold = ThresholdMode::lqg_ratio;
  double quantile_alpha = 0.01;
  std::int64_t calibration_len = 10000;   // empirical_quantile only
  int monte_carlo = 1;
  std::uint64_t master_seed = 42;         // noise/watermark streams
  bool eval_exact = false;                // parallel exact-parameter traces
  std::string out_dir;

  std::int64_t effective_warmup() const;
  int effective_n_model(int true_n) const;
  void validate() const;
};

struct RunArtifacts {
  // per-step traces for replica 0
  std::vector<double> g_trace;
  std::vector<std::uint8_t> alarms;
  std::vector<double> g_exact_trace;                  // eval_exact runs only
  std::vector<std::pair<std::int64_t, double>> u_error_trace;  // per redesign
  std::vector<RedesignRecord> redesigns;              // replica 0, learning modes
  // across replicas
  std::vector<std::vector<double>> replica_g;         // monte_carlo traces
  std::vector<double> detection_rate;                 // per-step alarm frequency

  double zeta = 0.0;
  LqgCost cost;          // exact-design cost (J0, delta J)
  Matrix exact_U;        // optimal covariance of the resolved plant
  LinearSystem resolved; // the plant actually simulated
};

/// Runs the configured study. Monte Carlo replicas execute in parallel
/// (WATERMARK_THREADS overrides the worker count); aggregation is a
/// fixed-order single-threaded reduction, so results do not depend on
/// scheduling.
RunArtifacts run_scenario(const ScenarioConfig& cfg);

/// rate_k = fraction of replicas with g_k >= zeta.
std::vector<double> detection_rate(const std::vector<std::vector<double>>& replica_g, double zeta);

/// Writes g_trace.csv, u_error.csv, detection_rate.csv and manifest.json
/// under out_dir (plus SVG plots when emit_plots). Returns the manifest path.
std::string emit(const RunArtifacts& artifacts, const ScenarioConfig& cfg,
                 const std::string& out_dir, bool emit_plots = false);

}  // namespace watermark
