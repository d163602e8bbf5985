#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "watermark/design.hpp"
#include "watermark/io.hpp"
#include "watermark/scenario.hpp"

namespace {

using namespace watermark;
using nlohmann::json;

json mat_json(const Matrix& M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < M.cols(); ++j) {
      row.push_back(M(i, j));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

json vec_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) {
    out.push_back(v[i]);
  }
  return out;
}

Vector vec_from(const json& arr) {
  Vector v(static_cast<Index>(arr.size()));
  for (Index i = 0; i < v.size(); ++i) {
    v[i] = arr[i].get<double>();
  }
  return v;
}

struct CommonFlags {
  std::string config_path;
  std::string system_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> horizon;
  std::optional<std::int64_t> warmup;
  std::optional<double> delta;
  std::optional<double> beta;
  std::optional<int> replicas;
  std::optional<int> n_model;
  bool no_attack = false;
  bool plots = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "scenario config or manifest JSON");
  cmd->add_option("--system", flags.system_path, "plant JSON (overrides config)");
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_option("--seed", flags.seed, "master seed override");
  cmd->add_option("--horizon", flags.horizon, "scored window length");
  cmd->add_option("--warmup", flags.warmup, "steps before the scored window");
  cmd->add_option("--delta", flags.delta, "LQG excess-cost budget");
  cmd->add_option("--beta", flags.beta, "exploration exponent");
  cmd->add_option("--replicas", flags.replicas, "Monte Carlo replica count");
  cmd->add_option("--n-model", flags.n_model, "reduced model order");
  cmd->add_flag("--no-attack", flags.no_attack, "drop the attack window");
  cmd->add_flag("--plots", flags.plots, "emit SVG plots next to the CSVs");
}

ScenarioConfig resolve_config(const CommonFlags& flags, Mode default_mode, bool default_attack) {
  ScenarioConfig cfg;
  if (!flags.config_path.empty()) {
    cfg = load_config(flags.config_path);
  } else {
    cfg.mode = default_mode;
    if (default_attack) {
      cfg.attack = AttackSpec{};
    }
  }
  if (!flags.system_path.empty()) {
    cfg.system = load_system(flags.system_path);
  }
  if (flags.seed) cfg.master_seed = *flags.seed;
  if (flags.horizon) cfg.horizon = *flags.horizon;
  if (flags.warmup) cfg.warmup = *flags.warmup;
  if (flags.delta) cfg.delta = *flags.delta;
  if (flags.beta) cfg.beta = *flags.beta;
  if (flags.replicas) cfg.monte_carlo = *flags.replicas;
  if (flags.n_model) cfg.n_model = *flags.n_model;
  if (flags.no_attack) cfg.attack.reset();
  return cfg;
}

int run_and_emit(const ScenarioConfig& cfg, const CommonFlags& flags) {
  const RunArtifacts artifacts = run_scenario(cfg);
  const std::string manifest = emit(artifacts, cfg, flags.out_dir, flags.plots);
  std::cout << "zeta " << format_double(artifacts.zeta) << "\n"
            << "lqg_cost " << format_double(artifacts.cost.total()) << "\n"
            << "manifest " << manifest << "\n";
  if (!artifacts.detection_rate.empty() && cfg.attack) {
    double pre = 0.0, post = 0.0;
    std::int64_t npre = 0, npost = 0;
    for (std::size_t k = 0; k < artifacts.detection_rate.size(); ++k) {
      const auto kk = static_cast<std::int64_t>(k);
      if (kk < cfg.attack->replay_start) {
        pre += artifacts.detection_rate[k];
        ++npre;
      } else if (kk < cfg.attack->replay_start + cfg.attack->record_len) {
        post += artifacts.detection_rate[k];
        ++npost;
      }
    }
    if (npre > 0 && npost > 0) {
      std::cout << "pre_attack_rate " << format_double(pre / static_cast<double>(npre)) << "\n"
                << "post_attack_rate " << format_double(post / static_cast<double>(npost)) << "\n";
    }
  }
  return 0;
}

int cmd_design(const CommonFlags& flags, const GeneratorSpec& gen, double delta,
               const std::string& out_path) {
  LinearSystem sys;
  if (!flags.system_path.empty()) {
    sys = load_system(flags.system_path);
  } else {
    sys = random_stable_system(gen.n, gen.m, gen.p, gen.seed, gen.rho_max);
  }
  const ModalDecomposition modal = modal_decomposition(sys);
  const Matrix Wcal = steady_output_cov(sys);
  const CostWeights weights = CostWeights::identity(sys.m(), sys.p());
  const DesignPair dp = design_matrices(modal, Wcal, weights);
  const OptimalWatermark opt = optimal_watermark(dp, delta);
  const Matrix Ucal = steady_watermark_cov(modal, opt.U);
  const LqgCost cost = lqg_cost(opt.U, modal, Wcal, weights);
  const auto bounds = kl_bounds(Ucal, Wcal);

  json doc;
  doc["system"] = json::parse(system_to_json(sys));
  doc["U"] = mat_json(opt.U);
  doc["direction"] = vec_json(opt.direction);
  doc["gain"] = opt.gain;
  doc["unique_maximizer"] = opt.unique_maximizer;
  doc["P"] = mat_json(dp.P);
  doc["X"] = mat_json(dp.X);
  doc["Wcal"] = mat_json(Wcal);
  doc["Ucal"] = mat_json(Ucal);
  doc["lqg"] = {{"base", cost.base}, {"excess", cost.excess}, {"total", cost.total()}};
  doc["zeta"] = threshold_from_cost(cost.total());
  doc["expected_kl"] = expected_kl(Ucal, Wcal);
  doc["kl_bounds"] = {bounds.first, bounds.second};
  const std::string text = doc.dump(2);
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    write_file(out_path, text);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_learn(const CommonFlags& flags, std::int64_t steps, std::int64_t checkpoint_every,
              const std::string& resume_path) {
  namespace fs = std::filesystem;
  fs::create_directories(flags.out_dir);

  ScenarioConfig cfg = resolve_config(flags, Mode::online_learning, false);
  LinearSystem sys;
  Learner learner;
  SimState sim;
  std::int64_t start_tick = 0;

  if (!resume_path.empty()) {
    const json doc = json::parse(read_file(resume_path));
    sys = system_from_json(doc.at("system").dump());
    learner = learner_from_json(doc.at("learner").dump());
    sim = initial_state(sys, doc.at("sim_seed").get<std::uint64_t>(), false);
    sim.x = vec_from(doc.at("sim_x"));
    sim.k = doc.at("sim_k").get<std::int64_t>();
    sim.process_noise = GaussianStream::deserialize(doc.at("process_noise").get<std::string>());
    sim.measurement_noise =
        GaussianStream::deserialize(doc.at("measurement_noise").get<std::string>());
    start_tick = learner.samples();
    std::cout << "resumed at k=" << start_tick << "\n";
  } else {
    if (cfg.system) {
      sys = *cfg.system;
      sys.validate();
    } else {
      sys = random_stable_system(cfg.generator.n, cfg.generator.m, cfg.generator.p,
                                 cfg.generator.seed, cfg.generator.rho_max);
    }
    LearnerConfig lcfg;
    lcfg.n_model = cfg.effective_n_model(static_cast<int>(sys.n()));
    lcfg.m = static_cast<int>(sys.m());
    lcfg.p = static_cast<int>(sys.p());
    lcfg.delta = cfg.delta;
    lcfg.beta = cfg.beta;
    lcfg.redesign_interval = cfg.redesign_interval;
    lcfg.weights = CostWeights::identity(sys.m(), sys.p());
    learner = Learner(lcfg, derive_seed(cfg.master_seed, 2));
    sim = initial_state(sys, derive_seed(cfg.master_seed, 0), true);
  }

  const ModalDecomposition modal = modal_decomposition(sys);
  const Matrix Wcal = steady_output_cov(sys);
  const CostWeights weights = CostWeights::identity(sys.m(), sys.p());
  const Matrix exact_U = optimal_watermark(design_matrices(modal, Wcal, weights), cfg.delta).U;

  auto checkpoint = [&](std::int64_t tick) {
    json doc;
    doc["system"] = json::parse(system_to_json(sys));
    doc["learner"] = json::parse(learner_to_json(learner));
    doc["sim_seed"] = sim.seed;
    doc["sim_x"] = vec_json(sim.x);
    doc["sim_k"] = sim.k;
    doc["process_noise"] = sim.process_noise.serialize();
    doc["measurement_noise"] = sim.measurement_noise.serialize();
    const std::string path =
        (fs::path(flags.out_dir) / ("checkpoint_" + std::to_string(tick) + ".json")).string();
    write_file(path, doc.dump());
    std::cout << "checkpoint " << path << "\n";
  };

  std::string u_error_csv = "k,frobenius_error\n";
  for (std::int64_t tick = start_tick; tick < start_tick + steps; ++tick) {
    const Vector phi = learner.generate_watermark();
    const Vector y = simulate_step(sys, sim, phi);
    learner.ingest(y);
    if (learner.samples() % cfg.redesign_interval == 0) {
      learner.redesign();
      u_error_csv += std::to_string(learner.samples()) + ',' +
                     format_double((learner.watermark_cov() - exact_U).norm()) + '\n';
    }
    if (checkpoint_every > 0 && learner.samples() % checkpoint_every == 0) {
      checkpoint(learner.samples());
    }
  }
  checkpoint(learner.samples());
  write_file((fs::path(flags.out_dir) / "u_error.csv").string(), u_error_csv);
  std::cout << "final_u_error "
            << format_double((learner.watermark_cov() - exact_U).norm()) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"physical watermarking for replay-attack detection"};
  app.require_subcommand(1);

  CommonFlags design_flags;
  GeneratorSpec design_gen;
  double design_delta = 10.0;
  std::string design_out;
  auto* design = app.add_subcommand("design", "exact-parameter watermark and detector design");
  design->add_option("--system", design_flags.system_path, "plant JSON");
  design->add_option("--n", design_gen.n, "state dimension");
  design->add_option("--m", design_gen.m, "output dimension");
  design->add_option("--p", design_gen.p, "watermark dimension");
  design->add_option("--gen-seed", design_gen.seed, "plant generator seed");
  design->add_option("--rho-max", design_gen.rho_max, "spectral radius bound");
  design->add_option("--delta", design_delta, "LQG excess-cost budget");
  design->add_option("--out", design_out, "write the design JSON here instead of stdout");

  CommonFlags sim_flags;
  auto* simulate = app.add_subcommand("simulate", "single seeded run with optional replay attack");
  add_common(simulate, sim_flags);

  CommonFlags learn_flags;
  std::int64_t learn_steps = 100000;
  std::int64_t checkpoint_every = 0;
  std::string resume_path;
  auto* learn = app.add_subcommand("learn", "long learning run with checkpoints");
  add_common(learn, learn_flags);
  learn->add_option("--steps", learn_steps, "ticks to run");
  learn->add_option("--checkpoint-every", checkpoint_every, "checkpoint cadence (0 = end only)");
  learn->add_option("--resume", resume_path, "resume from a checkpoint file");

  CommonFlags mc_flags;
  auto* montecarlo = app.add_subcommand("montecarlo", "detection-rate study across replicas");
  add_common(montecarlo, mc_flags);

  CommonFlags red_flags;
  auto* reduced = app.add_subcommand("reduced", "reduced-order learning study");
  add_common(reduced, red_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (design->parsed()) {
      return cmd_design(design_flags, design_gen, design_delta, design_out);
    }
    if (simulate->parsed()) {
      ScenarioConfig cfg = resolve_config(sim_flags, Mode::known_params, true);
      cfg.monte_carlo = sim_flags.replicas.value_or(1);
      return run_and_emit(cfg, sim_flags);
    }
    if (learn->parsed()) {
      return cmd_learn(learn_flags, learn_steps, checkpoint_every, resume_path);
    }
    if (montecarlo->parsed()) {
      ScenarioConfig cfg = resolve_config(mc_flags, Mode::known_params, true);
      if (!mc_flags.replicas) {
        cfg.monte_carlo = 500;
      }
      return run_and_emit(cfg, mc_flags);
    }
    if (reduced->parsed()) {
      ScenarioConfig cfg = resolve_config(red_flags, Mode::reduced_order, true);
      if (red_flags.config_path.empty()) {
        cfg.generator = GeneratorSpec{100, 5, 5, 7, 0.9};
        if (!red_flags.n_model) {
          cfg.n_model = 5;
        }
        if (!red_flags.warmup) {
          cfg.warmup = 50000;
        }
      }
      return run_and_emit(cfg, red_flags);
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
