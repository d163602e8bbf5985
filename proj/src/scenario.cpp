#include "watermark/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "watermark/io.hpp"
#include "watermark/plot.hpp"

namespace watermark {

namespace {

// stream labels under the per-replica seed
constexpr std::uint64_t kPlantStream = 0;
constexpr std::uint64_t kWatermarkStream = 1;
constexpr std::uint64_t kLearnerStream = 2;
constexpr std::uint64_t kCalibrationReplica = 0xCA11Bu;

struct ReplicaResult {
  std::vector<double> g;
  std::vector<std::uint8_t> alarms;
  std::vector<double> g_exact;
  std::vector<std::pair<std::int64_t, double>> u_error;
  std::vector<RedesignRecord> redesigns;
};

int worker_count(int replicas) {
  unsigned workers = std::thread::hardware_concurrency();
  if (workers == 0) {
    workers = 1;
  }
  if (const char* env = std::getenv("WATERMARK_THREADS")) {
    const long requested = std::strtol(env, nullptr, 10);
    if (requested >= 1) {
      workers = static_cast<unsigned>(requested);
    }
  }
  return static_cast<int>(std::min<unsigned>(workers, static_cast<unsigned>(std::max(replicas, 1))));
}

struct StudyContext {
  LinearSystem sys;
  ModalDecomposition modal;
  Matrix Wcal;
  CostWeights weights;
  Matrix exact_U;
  Matrix exact_Ucal;
  LqgCost cost;
  double zeta = 0.0;
};

ReplicaResult run_replica(const ScenarioConfig& cfg, const StudyContext& ctx,
                          std::uint64_t replica_seed, bool detailed, bool with_attack) {
  ReplicaResult out;
  const std::int64_t warmup = cfg.effective_warmup();
  const std::int64_t horizon = cfg.horizon;
  out.g.reserve(static_cast<std::size_t>(horizon));
  out.alarms.reserve(static_cast<std::size_t>(horizon));

  SimState sim = initial_state(ctx.sys, derive_seed(replica_seed, kPlantStream), true);
  std::optional<ReplayAttacker> attacker;
  if (with_attack && cfg.attack) {
    attacker.emplace(cfg.attack->record_start, cfg.attack->record_len, cfg.attack->replay_start);
  }

  const DetectorModel exact_model(ctx.Wcal, ctx.exact_Ucal, ctx.zeta);

  if (cfg.mode == Mode::known_params) {
    GaussianStream wm_stream(derive_seed(replica_seed, kWatermarkStream));
    const Matrix U_sqrt = sym_sqrt(ctx.exact_U);
    ResponseState response(ctx.modal.lambdas, ctx.modal.residues);
    for (std::int64_t k = -warmup; k < horizon; ++k) {
      const Vector phi = U_sqrt * wm_stream.next_vector(ctx.sys.p());
      const Vector y_live = simulate_step(ctx.sys, sim, phi);
      const Vector y = (attacker && k >= 0) ? attacker->process(k, y_live) : y_live;
      if (k >= 0) {
        const double g = exact_model.np_statistic(y, response.gamma());
        out.g.push_back(g);
        out.alarms.push_back(decide(g, ctx.zeta) ? 1 : 0);
      }
      response.update(phi);
    }
    return out;
  }

  // online_learning / reduced_order
  LearnerConfig lcfg;
  lcfg.n_model = cfg.effective_n_model(static_cast<int>(ctx.sys.n()));
  lcfg.m = static_cast<int>(ctx.sys.m());
  lcfg.p = static_cast<int>(ctx.sys.p());
  lcfg.delta = cfg.delta;
  lcfg.beta = cfg.beta;
  lcfg.redesign_interval = cfg.redesign_interval;
  lcfg.weights = ctx.weights;
  Learner learner(lcfg, derive_seed(replica_seed, kLearnerStream));

  ResponseState exact_response;
  if (cfg.eval_exact) {
    exact_response = ResponseState(ctx.modal.lambdas, ctx.modal.residues);
  }

  for (std::int64_t k = -warmup; k < horizon; ++k) {
    const Vector phi = learner.generate_watermark();
    const Vector y_live = simulate_step(ctx.sys, sim, phi);
    const Vector y = (attacker && k >= 0) ? attacker->process(k, y_live) : y_live;
    if (k >= 0) {
      const double g = learner.np_statistic(y);
      out.g.push_back(g);
      out.alarms.push_back(decide(g, ctx.zeta) ? 1 : 0);
      if (cfg.eval_exact) {
        out.g_exact.push_back(exact_model.np_statistic(y, exact_response.gamma()));
      }
    }
    learner.ingest(y);
    if (cfg.eval_exact) {
      exact_response.update(phi);
    }
    if (learner.samples() % cfg.redesign_interval == 0) {
      learner.redesign();
      if (detailed) {
        out.u_error.emplace_back(learner.samples(),
                                 (learner.watermark_cov() - ctx.exact_U).norm());
      }
    }
  }
  if (detailed) {
    out.redesigns = learner.redesign_log();
  }
  return out;
}

StudyContext build_context(const ScenarioConfig& cfg) {
  StudyContext ctx;
  if (cfg.system) {
    ctx.sys = *cfg.system;
    ctx.sys.validate();
  } else {
    ctx.sys = random_stable_system(cfg.generator.n, cfg.generator.m, cfg.generator.p,
                                   cfg.generator.seed, cfg.generator.rho_max);
  }
  ctx.modal = modal_decomposition(ctx.sys);
  ctx.Wcal = steady_output_cov(ctx.sys);
  ctx.weights = cfg.weights ? *cfg.weights : CostWeights::identity(ctx.sys.m(), ctx.sys.p());
  ctx.weights.validate();
  const DesignPair dp = design_matrices(ctx.modal, ctx.Wcal, ctx.weights);
  ctx.exact_U = optimal_watermark(dp, cfg.delta).U;
  ctx.exact_Ucal = steady_watermark_cov(ctx.modal, ctx.exact_U);
  ctx.cost = lqg_cost(ctx.exact_U, ctx.modal, ctx.Wcal, ctx.weights);
  return ctx;
}

}  // namespace

std::int64_t ScenarioConfig::effective_warmup() const {
  if (warmup >= 0) {
    return warmup;
  }
  return mode == Mode::known_params ? 1000 : 100000;
}

int ScenarioConfig::effective_n_model(int true_n) const {
  if (mode == Mode::reduced_order) {
    return n_model >= 1 ? n_model : true_n;
  }
  return true_n;
}

void ScenarioConfig::validate() const {
  if (horizon < 0) {
    throw std::invalid_argument("ScenarioConfig: horizon must be >= 0");
  }
  if (delta <= 0.0 || beta < 0.0 || beta >= 1.0) {
    throw std::invalid_argument("ScenarioConfig: need delta > 0 and beta in [0, 1)");
  }
  if (redesign_interval < 1) {
    throw std::invalid_argument("ScenarioConfig: redesign_interval must be >= 1");
  }
  if (monte_carlo < 1) {
    throw std::invalid_argument("ScenarioConfig: monte_carlo must be >= 1");
  }
  if (mode == Mode::reduced_order && n_model < 1) {
    throw std::invalid_argument("ScenarioConfig: reduced_order needs n_model >= 1");
  }
  if (attack) {
    if (attack->record_start < 0 || attack->record_len < 1 ||
        attack->replay_start < attack->record_start) {
      throw std::invalid_argument("ScenarioConfig: malformed attack window");
    }
    if (horizon <= attack->replay_start + attack->record_len) {
      throw std::invalid_argument("ScenarioConfig: horizon must extend past the replay window");
    }
  }
}

RunArtifacts run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  StudyContext ctx = build_context(cfg);

  if (cfg.threshold == ThresholdMode::lqg_ratio) {
    ctx.zeta = threshold_from_cost(ctx.cost.total());
  } else {
    // No-attack calibration run on a dedicated replica seed.
    ScenarioConfig calib = cfg;
    calib.attack.reset();
    calib.horizon = cfg.calibration_len;
    ctx.zeta = 0.0;
    const ReplicaResult trace = run_replica(
        calib, ctx, derive_seed(cfg.master_seed, kCalibrationReplica), false, false);
    ctx.zeta = threshold_from_quantile(trace.g, cfg.quantile_alpha);
  }

  const int replicas = cfg.monte_carlo;
  std::vector<ReplicaResult> results(static_cast<std::size_t>(replicas));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(replicas));
  const int workers = worker_count(replicas);
  std::atomic<int> next{0};
  auto body = [&] {
    while (true) {
      const int r = next.fetch_add(1);
      if (r >= replicas) {
        return;
      }
      try {
        results[static_cast<std::size_t>(r)] =
            run_replica(cfg, ctx, derive_seed(cfg.master_seed, static_cast<std::uint64_t>(r)),
                        r == 0, true);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back(body);
    }
    for (auto& th : pool) {
      th.join();
    }
  }
  for (const auto& err : errors) {
    if (err) {
      std::rethrow_exception(err);
    }
  }

  RunArtifacts artifacts;
  artifacts.zeta = ctx.zeta;
  artifacts.cost = ctx.cost;
  artifacts.exact_U = ctx.exact_U;
  artifacts.resolved = ctx.sys;
  artifacts.g_trace = results[0].g;
  artifacts.alarms = results[0].alarms;
  artifacts.g_exact_trace = results[0].g_exact;
  artifacts.u_error_trace = results[0].u_error;
  artifacts.redesigns = results[0].redesigns;
  artifacts.replica_g.reserve(results.size());
  for (auto& res : results) {
    artifacts.replica_g.push_back(std::move(res.g));
  }
  artifacts.detection_rate = detection_rate(artifacts.replica_g, ctx.zeta);
  return artifacts;
}

std::vector<double> detection_rate(const std::vector<std::vector<double>>& replica_g,
                                   double zeta) {
  if (replica_g.empty()) {
    throw std::invalid_argument("detection_rate: empty replica set");
  }
  const std::size_t len = replica_g.front().size();
  for (const auto& g : replica_g) {
    if (g.size() != len) {
      throw std::invalid_argument("detection_rate: traces must have equal length");
    }
  }
  std::vector<double> rate(len, 0.0);
  for (const auto& g : replica_g) {
    for (std::size_t k = 0; k < len; ++k) {
      if (decide(g[k], zeta)) {
        rate[k] += 1.0;
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(replica_g.size());
  for (auto& r : rate) {
    r *= scale;
  }
  return rate;
}

std::string emit(const RunArtifacts& artifacts, const ScenarioConfig& cfg,
                 const std::string& out_dir, bool emit_plots) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string mode = [&] {
    switch (cfg.mode) {
      case Mode::known_params: return "known_params";
      case Mode::online_learning: return "online_learning";
      case Mode::reduced_order: return "reduced_order";
    }
    return "unknown";
  }();

  // g_trace.csv: k, g, alarm, mode (replica 0)
  {
    std::string text = "k,g,alarm,mode\n";
    for (std::size_t k = 0; k < artifacts.g_trace.size(); ++k) {
      text += std::to_string(k) + ',' + format_double(artifacts.g_trace[k]) + ',' +
              (artifacts.alarms[k] ? "1" : "0") + ',' + mode + '\n';
    }
    write_file((fs::path(out_dir) / "g_trace.csv").string(), text);
  }
  // u_error.csv: k, frobenius_error
  {
    std::string text = "k,frobenius_error\n";
    for (const auto& [k, err] : artifacts.u_error_trace) {
      text += std::to_string(k) + ',' + format_double(err) + '\n';
    }
    write_file((fs::path(out_dir) / "u_error.csv").string(), text);
  }
  // detection_rate.csv: k, rate
  {
    std::string text = "k,rate\n";
    for (std::size_t k = 0; k < artifacts.detection_rate.size(); ++k) {
      text += std::to_string(k) + ',' + format_double(artifacts.detection_rate[k]) + '\n';
    }
    write_file((fs::path(out_dir) / "detection_rate.csv").string(), text);
  }

  nlohmann::json manifest;
  manifest["config"] = nlohmann::json::parse(config_to_json(cfg));
  manifest["resolved_system"] = nlohmann::json::parse(system_to_json(artifacts.resolved));
  manifest["zeta"] = artifacts.zeta;
  manifest["lqg_cost"] = {{"base", artifacts.cost.base}, {"excess", artifacts.cost.excess}};
  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  write_file(manifest_path, manifest.dump(2));

  if (emit_plots) {
    std::vector<double> ks(artifacts.g_trace.size());
    for (std::size_t k = 0; k < ks.size(); ++k) {
      ks[k] = static_cast<double>(k);
    }
    write_svg_plot((fs::path(out_dir) / "g_trace.svg").string(), "detector statistic",
                   {{"g", ks, artifacts.g_trace}});
    std::vector<double> kr(artifacts.detection_rate.size());
    for (std::size_t k = 0; k < kr.size(); ++k) {
      kr[k] = static_cast<double>(k);
    }
    write_svg_plot((fs::path(out_dir) / "detection_rate.svg").string(), "detection rate",
                   {{"rate", kr, artifacts.detection_rate}});
  }
  return manifest_path;
}

}  // namespace watermark
