#include "protofuse/numeric.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "protofuse/error.hpp"

namespace protofuse {

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) {
    throw ContractError("uniform_index: empty range");
  }
  // Rejection sampling on the largest multiple of n below 2^64.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) {
    x = engine_();
  }
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) {
    u1 = uniform();
  }
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(theta);
  has_spare_ = true;
  return radius * std::cos(theta);
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) {
  // FNV-1a over the tag, then mixed with the parent.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(mix64(parent) ^ h);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return mix64(mix64(parent) ^ mix64(index ^ 0x5851f42d4c957f2dULL));
}

Vec64 affine(const Mat64& w, const Vec64& b, const Vec64& x) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    throw ConfigError("affine: weight " + std::to_string(w.rows()) + "x" +
                      std::to_string(w.cols()) + " incompatible with bias " +
                      std::to_string(b.size()) + " / input " +
                      std::to_string(x.size()));
  }
  return w * x + b;
}

Vec64 softmax(const Vec64& logits) {
  if (logits.size() == 0) {
    throw ConfigError("softmax: empty input");
  }
  const double m = logits.maxCoeff();
  Vec64 out = (logits.array() - m).exp().matrix();
  out /= out.sum();
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vec64 relu(const Vec64& x) { return x.cwiseMax(0.0); }

double sq_euclidean(const Vec64& a, const Vec64& b) {
  if (a.size() != b.size()) {
    throw ConfigError("sq_euclidean: dimension mismatch " +
                      std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  }
  return (a - b).squaredNorm();
}

Vec64 sample_gaussian(Rng& rng, std::size_t n, double mean, double stddev) {
  Vec64 out(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] = mean + stddev * rng.normal();
  }
  return out;
}

bool all_finite(std::span<const double> values) {
  for (const double v : values) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

}  // namespace protofuse
