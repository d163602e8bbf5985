#include "watermark/rng.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace watermark {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
}

double GaussianStream::next_uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double GaussianStream::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 shifted away from zero so the log is finite.
  const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Vector GaussianStream::next_vector(Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) {
    v[i] = next();
  }
  return v;
}

std::string GaussianStream::serialize() const {
  std::ostringstream os;
  os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
  std::uint64_t bits = 0;
  std::memcpy(&bits, &spare_, sizeof bits);
  os << bits;
  return os.str();
}

GaussianStream GaussianStream::deserialize(const std::string& text) {
  GaussianStream s;
  std::istringstream is(text);
  int has = 0;
  std::uint64_t bits = 0;
  is >> s.engine_ >> has >> bits;
  if (!is) {
    throw std::runtime_error("GaussianStream::deserialize: malformed state");
  }
  s.has_spare_ = has != 0;
  std::memcpy(&s.spare_, &bits, sizeof bits);
  return s;
}

}  // namespace watermark
