#include "watermark/io.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace watermark {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
    }
  }
}

json mat_to_json(const Matrix& M) {
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

Matrix mat_from_json(const json& rows, const std::string& where) {
  if (!rows.is_array() || rows.empty() || !rows[0].is_array()) {
    throw std::invalid_argument(where + ": expected a nested array");
  }
  const auto r = static_cast<Index>(rows.size());
  const auto c = static_cast<Index>(rows[0].size());
  Matrix M(r, c);
  for (Index i = 0; i < r; ++i) {
    if (static_cast<Index>(rows[i].size()) != c) {
      throw std::invalid_argument(where + ": ragged rows");
    }
    for (Index j = 0; j < c; ++j) {
      M(i, j) = rows[i][j].get<double>();
    }
  }
  return M;
}

json vec_to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) {
    out.push_back(v[i]);
  }
  return out;
}

Vector vec_from_json(const json& arr) {
  Vector v(static_cast<Index>(arr.size()));
  for (Index i = 0; i < v.size(); ++i) {
    v[i] = arr[i].get<double>();
  }
  return v;
}

json cmat_to_json(const CMatrix& M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < M.cols(); ++j) {
      row.push_back(json::array({M(i, j).real(), M(i, j).imag()}));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

CMatrix cmat_from_json(const json& rows) {
  const auto r = static_cast<Index>(rows.size());
  const auto c = r > 0 ? static_cast<Index>(rows[0].size()) : 0;
  CMatrix M(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) {
      M(i, j) = Complex(rows[i][j][0].get<double>(), rows[i][j][1].get<double>());
    }
  }
  return M;
}

json cvec_to_json(const CVector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) {
    out.push_back(json::array({v[i].real(), v[i].imag()}));
  }
  return out;
}

CVector cvec_from_json(const json& arr) {
  CVector v(static_cast<Index>(arr.size()));
  for (Index i = 0; i < v.size(); ++i) {
    v[i] = Complex(arr[i][0].get<double>(), arr[i][1].get<double>());
  }
  return v;
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::known_params: return "known_params";
    case Mode::online_learning: return "online_learning";
    case Mode::reduced_order: return "reduced_order";
  }
  throw std::logic_error("mode_name: unhandled mode");
}

Mode mode_from_name(const std::string& name) {
  if (name == "known_params") return Mode::known_params;
  if (name == "online_learning") return Mode::online_learning;
  if (name == "reduced_order") return Mode::reduced_order;
  throw std::invalid_argument("config: unknown mode '" + name + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open file: " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write file: " + path);
  }
  out << content;
}

// -- plant documents ---------------------------------------------------------

std::string system_to_json(const LinearSystem& sys) {
  json doc;
  doc["A"] = mat_to_json(sys.A);
  doc["B"] = mat_to_json(sys.B);
  doc["C"] = mat_to_json(sys.C);
  doc["Q"] = mat_to_json(sys.Q);
  doc["R"] = mat_to_json(sys.R);
  doc["seed"] = sys.seed;
  return doc.dump(2);
}

LinearSystem system_from_json(const std::string& text) {
  const json doc = json::parse(text);
  reject_unknown_keys(doc, {"A", "B", "C", "Q", "R", "seed"}, "system");
  LinearSystem sys;
  sys.A = mat_from_json(doc.at("A"), "system.A");
  sys.B = mat_from_json(doc.at("B"), "system.B");
  sys.C = mat_from_json(doc.at("C"), "system.C");
  sys.Q = mat_from_json(doc.at("Q"), "system.Q");
  sys.R = mat_from_json(doc.at("R"), "system.R");
  sys.seed = doc.value("seed", std::uint64_t{0});
  sys.validate();
  return sys;
}

void save_system(const LinearSystem& sys, const std::string& path) {
  write_file(path, system_to_json(sys));
}

LinearSystem load_system(const std::string& path) { return system_from_json(read_file(path)); }

// -- scenario configs ---------------------------------------------------------

std::string config_to_json(const ScenarioConfig& cfg) {
  json doc;
  doc["mode"] = mode_name(cfg.mode);
  if (cfg.system) {
    doc["system"] = json::parse(system_to_json(*cfg.system));
  }
  doc["generator"] = {{"n", cfg.generator.n},       {"m", cfg.generator.m},
                      {"p", cfg.generator.p},       {"seed", cfg.generator.seed},
                      {"rho_max", cfg.generator.rho_max}};
  doc["horizon"] = cfg.horizon;
  doc["warmup"] = cfg.warmup;
  if (cfg.attack) {
    doc["attack"] = {{"record_start", cfg.attack->record_start},
                     {"record_len", cfg.attack->record_len},
                     {"replay_start", cfg.attack->replay_start}};
  }
  doc["delta"] = cfg.delta;
  doc["beta"] = cfg.beta;
  doc["redesign_interval"] = cfg.redesign_interval;
  doc["n_model"] = cfg.n_model;
  if (cfg.weights) {
    doc["weights"] = {{"yy", mat_to_json(cfg.weights->yy)},
                      {"yphi", mat_to_json(cfg.weights->yphi)},
                      {"phiy", mat_to_json(cfg.weights->phiy)},
                      {"phiphi", mat_to_json(cfg.weights->phiphi)}};
  }
  doc["threshold"] = cfg.threshold == ThresholdMode::lqg_ratio ? "lqg_ratio" : "empirical_quantile";
  doc["quantile_alpha"] = cfg.quantile_alpha;
  doc["calibration_len"] = cfg.calibration_len;
  doc["monte_carlo"] = cfg.monte_carlo;
  doc["master_seed"] = cfg.master_seed;
  doc["eval_exact"] = cfg.eval_exact;
  doc["out_dir"] = cfg.out_dir;
  return doc.dump(2);
}

namespace {

ScenarioConfig config_from_json_obj(const json& doc) {
  reject_unknown_keys(doc,
                      {"mode", "system", "generator", "horizon", "warmup", "attack", "delta",
                       "beta", "redesign_interval", "n_model", "weights", "threshold",
                       "quantile_alpha", "calibration_len", "monte_carlo", "master_seed",
                       "eval_exact", "out_dir"},
                      "config");
  ScenarioConfig cfg;
  if (doc.contains("mode")) {
    cfg.mode = mode_from_name(doc.at("mode").get<std::string>());
  }
  if (doc.contains("system") && !doc.at("system").is_null()) {
    cfg.system = system_from_json(doc.at("system").dump());
  }
  if (doc.contains("generator")) {
    const json& g = doc.at("generator");
    reject_unknown_keys(g, {"n", "m", "p", "seed", "rho_max"}, "config.generator");
    cfg.generator.n = g.value("n", cfg.generator.n);
    cfg.generator.m = g.value("m", cfg.generator.m);
    cfg.generator.p = g.value("p", cfg.generator.p);
    cfg.generator.seed = g.value("seed", cfg.generator.seed);
    cfg.generator.rho_max = g.value("rho_max", cfg.generator.rho_max);
  }
  cfg.horizon = doc.value("horizon", cfg.horizon);
  cfg.warmup = doc.value("warmup", cfg.warmup);
  if (doc.contains("attack") && !doc.at("attack").is_null()) {
    const json& a = doc.at("attack");
    reject_unknown_keys(a, {"record_start", "record_len", "replay_start"}, "config.attack");
    AttackSpec attack;
    attack.record_start = a.value("record_start", attack.record_start);
    attack.record_len = a.value("record_len", attack.record_len);
    attack.replay_start = a.value("replay_start", attack.replay_start);
    cfg.attack = attack;
  }
  cfg.delta = doc.value("delta", cfg.delta);
  cfg.beta = doc.value("beta", cfg.beta);
  cfg.redesign_interval = doc.value("redesign_interval", cfg.redesign_interval);
  cfg.n_model = doc.value("n_model", cfg.n_model);
  if (doc.contains("weights") && !doc.at("weights").is_null()) {
    const json& w = doc.at("weights");
    reject_unknown_keys(w, {"yy", "yphi", "phiy", "phiphi"}, "config.weights");
    CostWeights weights;
    weights.yy = mat_from_json(w.at("yy"), "config.weights.yy");
    weights.yphi = mat_from_json(w.at("yphi"), "config.weights.yphi");
    weights.phiy = mat_from_json(w.at("phiy"), "config.weights.phiy");
    weights.phiphi = mat_from_json(w.at("phiphi"), "config.weights.phiphi");
    weights.validate();
    cfg.weights = weights;
  }
  if (doc.contains("threshold")) {
    const std::string name = doc.at("threshold").get<std::string>();
    if (name == "lqg_ratio") {
      cfg.threshold = ThresholdMode::lqg_ratio;
    } else if (name == "empirical_quantile") {
      cfg.threshold = ThresholdMode::empirical_quantile;
    } else {
      throw std::invalid_argument("config: unknown threshold mode '" + name + "'");
    }
  }
  cfg.quantile_alpha = doc.value("quantile_alpha", cfg.quantile_alpha);
  cfg.calibration_len = doc.value("calibration_len", cfg.calibration_len);
  cfg.monte_carlo = doc.value("monte_carlo", cfg.monte_carlo);
  cfg.master_seed = doc.value("master_seed", cfg.master_seed);
  cfg.eval_exact = doc.value("eval_exact", cfg.eval_exact);
  cfg.out_dir = doc.value("out_dir", cfg.out_dir);
  return cfg;
}

}  // namespace

ScenarioConfig config_from_json(const std::string& text) {
  json doc = json::parse(text);
  // A manifest wraps the config; accept both forms.
  if (doc.contains("config")) {
    return config_from_json_obj(doc.at("config"));
  }
  return config_from_json_obj(doc);
}

ScenarioConfig load_config(const std::string& path) { return config_from_json(read_file(path)); }

// -- learner checkpoints -------------------------------------------------------

struct LearnerSerde {
  static json save(const Learner& l) {
    json doc;
    const LearnerConfig& cfg = l.cfg_;
    doc["config"] = {{"n_model", cfg.n_model},
                     {"m", cfg.m},
                     {"p", cfg.p},
                     {"delta", cfg.delta},
                     {"beta", cfg.beta},
                     {"redesign_interval", cfg.redesign_interval},
                     {"keep_logs", cfg.keep_logs},
                     {"weights_yy", mat_to_json(cfg.weights.yy)},
                     {"weights_yphi", mat_to_json(cfg.weights.yphi)},
                     {"weights_phiy", mat_to_json(cfg.weights.phiy)},
                     {"weights_phiphi", mat_to_json(cfg.weights.phiphi)}};
    doc["stream"] = l.stream_.serialize();
    doc["k"] = l.k_;
    doc["awaiting_ingest"] = l.awaiting_ingest_;
    doc["markov_sums"] = json::array();
    for (const auto& s : l.markov_sums_) {
      doc["markov_sums"].push_back(mat_to_json(s));
    }
    doc["output_sum"] = mat_to_json(l.output_sum_);
    doc["resp_pairs"] = json::array();
    for (const auto& m : l.resp_pairs_) {
      doc["resp_pairs"].push_back(cmat_to_json(m));
    }
    doc["resp_cum"] = mat_to_json(l.resp_cum_);
    doc["pair_decay"] = json::array();
    for (const auto& z : l.pair_decay_) {
      doc["pair_decay"].push_back(json::array({z.real(), z.imag()}));
    }
    doc["U_star"] = mat_to_json(l.U_star_);
    doc["explore_coef"] = l.explore_coef_;
    doc["U"] = mat_to_json(l.U_);
    doc["ring_phi"] = json::array();
    doc["ring_weighted"] = json::array();
    for (std::size_t i = 0; i < l.ring_phi_.size(); ++i) {
      doc["ring_phi"].push_back(vec_to_json(l.ring_phi_[i]));
      doc["ring_weighted"].push_back(vec_to_json(l.ring_weighted_[i].transpose()));
    }
    doc["ring_time"] = l.ring_time_;
    doc["model"] = {{"lambdas", cvec_to_json(l.model_.lambdas)},
                    {"Wcal", mat_to_json(l.model_.Wcal)},
                    {"identified", l.model_.identified}};
    doc["model"]["residues"] = json::array();
    for (const auto& omega : l.model_.residues) {
      doc["model"]["residues"].push_back(cmat_to_json(omega));
    }
    if (l.model_.dp.P.size() > 0) {
      doc["model"]["dp_P"] = mat_to_json(l.model_.dp.P);
      doc["model"]["dp_X"] = mat_to_json(l.model_.dp.X);
    }
    doc["response_components"] = json::array();
    for (const auto& c : l.response_.components()) {
      doc["response_components"].push_back(cvec_to_json(c));
    }
    doc["redesign_log"] = json::array();
    for (const auto& rec : l.redesign_log_) {
      doc["redesign_log"].push_back({{"k", rec.k},
                                     {"identified", rec.identified},
                                     {"exploration", rec.exploration},
                                     {"U_star", mat_to_json(rec.U_star)},
                                     {"U", mat_to_json(rec.U)},
                                     {"lambdas", cvec_to_json(rec.lambdas)}});
    }
    doc["logs"] = json::array();
    for (const auto& log : l.logs_) {
      doc["logs"].push_back({{"y", vec_to_json(log.y)},
                             {"phi", vec_to_json(log.phi)},
                             {"U", mat_to_json(log.U)}});
    }
    return doc;
  }

  static Learner load(const json& doc) {
    const json& jc = doc.at("config");
    LearnerConfig cfg;
    cfg.n_model = jc.at("n_model").get<int>();
    cfg.m = jc.at("m").get<int>();
    cfg.p = jc.at("p").get<int>();
    cfg.delta = jc.at("delta").get<double>();
    cfg.beta = jc.at("beta").get<double>();
    cfg.redesign_interval = jc.at("redesign_interval").get<int>();
    cfg.keep_logs = jc.at("keep_logs").get<bool>();
    cfg.weights.yy = mat_from_json(jc.at("weights_yy"), "checkpoint.weights");
    cfg.weights.yphi = mat_from_json(jc.at("weights_yphi"), "checkpoint.weights");
    cfg.weights.phiy = mat_from_json(jc.at("weights_phiy"), "checkpoint.weights");
    cfg.weights.phiphi = mat_from_json(jc.at("weights_phiphi"), "checkpoint.weights");

    Learner l(cfg, 0);
    l.stream_ = GaussianStream::deserialize(doc.at("stream").get<std::string>());
    l.k_ = doc.at("k").get<std::int64_t>();
    l.awaiting_ingest_ = doc.at("awaiting_ingest").get<bool>();
    l.markov_sums_.clear();
    for (const auto& s : doc.at("markov_sums")) {
      l.markov_sums_.push_back(mat_from_json(s, "checkpoint.markov_sums"));
    }
    l.output_sum_ = mat_from_json(doc.at("output_sum"), "checkpoint.output_sum");
    l.resp_pairs_.clear();
    for (const auto& m : doc.at("resp_pairs")) {
      l.resp_pairs_.push_back(cmat_from_json(m));
    }
    l.resp_cum_ = mat_from_json(doc.at("resp_cum"), "checkpoint.resp_cum");
    l.pair_decay_.clear();
    for (const auto& z : doc.at("pair_decay")) {
      l.pair_decay_.emplace_back(z[0].get<double>(), z[1].get<double>());
    }
    l.U_star_ = mat_from_json(doc.at("U_star"), "checkpoint.U_star");
    l.explore_coef_ = doc.at("explore_coef").get<double>();
    const auto& ring_phi = doc.at("ring_phi");
    const auto& ring_weighted = doc.at("ring_weighted");
    for (std::size_t i = 0; i < ring_phi.size(); ++i) {
      l.ring_phi_[i] = vec_from_json(ring_phi[i]);
      l.ring_weighted_[i] = vec_from_json(ring_weighted[i]).transpose();
    }
    l.ring_time_ = doc.at("ring_time").get<std::vector<std::int64_t>>();

    const json& jm = doc.at("model");
    l.model_.lambdas = cvec_from_json(jm.at("lambdas"));
    l.model_.residues.clear();
    for (const auto& omega : jm.at("residues")) {
      l.model_.residues.push_back(cmat_from_json(omega));
    }
    l.model_.Wcal = mat_from_json(jm.at("Wcal"), "checkpoint.Wcal");
    l.model_.identified = jm.at("identified").get<bool>();
    if (jm.contains("dp_P")) {
      l.model_.dp.P = mat_from_json(jm.at("dp_P"), "checkpoint.dp_P");
      l.model_.dp.X = mat_from_json(jm.at("dp_X"), "checkpoint.dp_X");
    }
    // Rebuild the derived caches from the restored primaries, then reinstate
    // the response accumulators.
    l.response_.set_coefficients(l.model_.lambdas, l.model_.residues);
    l.set_watermark_cov(mat_from_json(doc.at("U"), "checkpoint.U"));
    std::vector<CVector> comps;
    for (const auto& c : doc.at("response_components")) {
      comps.push_back(cvec_from_json(c));
    }
    l.response_.restore_components(std::move(comps));

    for (const auto& rec : doc.at("redesign_log")) {
      RedesignRecord r;
      r.k = rec.at("k").get<std::int64_t>();
      r.identified = rec.at("identified").get<bool>();
      r.exploration = rec.at("exploration").get<double>();
      r.U_star = mat_from_json(rec.at("U_star"), "checkpoint.redesign");
      r.U = mat_from_json(rec.at("U"), "checkpoint.redesign");
      r.lambdas = cvec_from_json(rec.at("lambdas"));
      l.redesign_log_.push_back(std::move(r));
    }
    for (const auto& log : doc.at("logs")) {
      TickLog t;
      t.y = vec_from_json(log.at("y"));
      t.phi = vec_from_json(log.at("phi"));
      t.U = mat_from_json(log.at("U"), "checkpoint.logs");
      l.logs_.push_back(std::move(t));
    }
    return l;
  }
};

std::string learner_to_json(const Learner& learner) {
  return LearnerSerde::save(learner).dump();
}

Learner learner_from_json(const std::string& text) {
  return LearnerSerde::load(json::parse(text));
}

// -- csv -----------------------------------------------------------------------

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << header[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "," : "") << format_double(row[i]);
    }
    out << '\n';
  }
  write_file(path, out.str());
}

CsvTable read_csv(const std::string& path) {
  const std::string text = read_file(path);
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) {
        break;
      }
      start = comma + 1;
    }
    if (first) {
      table.header = cells;
      first = false;
      continue;
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& cell : cells) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      row.push_back(end == cell.c_str() ? std::numeric_limits<double>::quiet_NaN() : v);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace watermark
