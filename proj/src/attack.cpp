#include "watermark/attack.hpp"

#include <stdexcept>

namespace watermark {

ReplayAttacker::ReplayAttacker(std::int64_t record_start, std::int64_t record_len,
                               std::int64_t replay_start)
    : record_start_(record_start), record_len_(record_len), replay_start_(replay_start) {
  if (record_len_ < 1) {
    throw std::invalid_argument("ReplayAttacker: record_len must be >= 1");
  }
  if (record_start_ < 0 || replay_start_ < record_start_) {
    throw std::invalid_argument("ReplayAttacker: replay must not precede the recording");
  }
  buffer_.reserve(static_cast<std::size_t>(record_len_));
}

bool ReplayAttacker::replaying(std::int64_t k) const {
  return k >= replay_start_ && k < replay_start_ + record_len_;
}

Vector ReplayAttacker::process(std::int64_t k, const Vector& y_live) {
  if (k >= record_start_ && k < record_start_ + record_len_) {
    const auto offset = static_cast<std::size_t>(k - record_start_);
    if (offset == buffer_.size()) {
      buffer_.push_back(y_live);
    } else if (offset < buffer_.size()) {
      buffer_[offset] = y_live;
    } else {
      throw std::logic_error("ReplayAttacker: non-contiguous recording");
    }
  }
  if (replaying(k)) {
    const auto offset = static_cast<std::size_t>(k - replay_start_);
    if (offset >= buffer_.size()) {
      throw std::logic_error("ReplayAttacker: replay before recording finished");
    }
    return buffer_[offset];
  }
  return y_live;
}

}  // namespace watermark
