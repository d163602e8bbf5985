#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "watermark/types.hpp"

namespace watermark {

/// splitmix64 mix of a master seed and a stream label, so that every consumer
/// of randomness in a run gets its own deterministic stream.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Deterministic standard-normal stream: mt19937_64 + Box-Muller. The stdlib
/// normal_distribution is avoided because its draw sequence is
/// implementation-defined; this one produces identical trajectories on every
/// platform, which the run manifests rely on.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed = 0) : engine_(seed) {}

  double next();
  double next_uniform();  // in [0, 1)
  Vector next_vector(Index n);

  /// Exact textual state, used by learner checkpoints.
  std::string serialize() const;
  static GaussianStream deserialize(const std::string& text);

  bool operator==(const GaussianStream&) const = default;

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace watermark
