#pragma once

#include <string>
#include <vector>

#include "watermark/learner.hpp"
#include "watermark/lti.hpp"
#include "watermark/scenario.hpp"

namespace watermark {

/// Shortest exact decimal form of a double (round-trips bit-for-bit).
std::string format_double(double v);

// -- plant documents ------------------------------------------------------
// {A, B, C, Q, R, seed} with row-major nested arrays; the loader validates
// the LinearSystem invariants.
std::string system_to_json(const LinearSystem& sys);
LinearSystem system_from_json(const std::string& text);
void save_system(const LinearSystem& sys, const std::string& path);
LinearSystem load_system(const std::string& path);

// -- scenario configs / run manifests --------------------------------------
// Unknown keys are rejected. A manifest emitted by a run is itself a valid
// config and reproduces the run bit-for-bit.
std::string config_to_json(const ScenarioConfig& cfg);
ScenarioConfig config_from_json(const std::string& text);
ScenarioConfig load_config(const std::string& path);

// -- learner checkpoints ----------------------------------------------------
// Bit-faithful round trip of every sum, buffer and stream state.
std::string learner_to_json(const Learner& learner);
Learner learner_from_json(const std::string& text);

// -- csv ---------------------------------------------------------------------
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
CsvTable read_csv(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace watermark
