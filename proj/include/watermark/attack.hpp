#pragma once

#include <cstdint>
#include <vector>

#include "watermark/types.hpp"

namespace watermark {

/// Record-and-replay adversary: records y over [record_start,
/// record_start + record_len - 1], then substitutes y'_k = y_{k - dk} with
/// dk = replay_start - record_start over [replay_start,
/// replay_start + record_len - 1]. Outside the replay window the live signal
/// passes through. Negative ticks (warm-up) always pass through.
class ReplayAttacker {
 public:
  ReplayAttacker(std::int64_t record_start, std::int64_t record_len, std::int64_t replay_start);

  Vector process(std::int64_t k, const Vector& y_live);
  bool replaying(std::int64_t k) const;

  std::int64_t record_start() const { return record_start_; }
  std::int64_t record_len() const { return record_len_; }
  std::int64_t replay_start() const { return replay_start_; }
  const std::vector<Vector>& buffer() const { return buffer_; }

 private:
  std::int64_t record_start_, record_len_, replay_start_;
  std::vector<Vector> buffer_;
};

}  // namespace watermark
