#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include <Eigen/Core>

namespace protofuse {

using Vec64 = Eigen::VectorXd;
using Mat64 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Seeded random stream. Identical seeds give bit-identical samples on every
/// platform: the engine is mt19937_64 (fully specified by the standard) and
/// all distributions are implemented here rather than taken from <random>.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Standard normal via Box–Muller; the second variate is cached.
  double normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);
/// Derives an independent child seed from a parent seed and a tag.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

/// W·x + b. Throws ConfigError on dimension mismatch.
Vec64 affine(const Mat64& w, const Vec64& b, const Vec64& x);

/// Numerically stable softmax (max-subtracted). Throws ConfigError when empty.
Vec64 softmax(const Vec64& logits);

double sigmoid(double x);

Vec64 relu(const Vec64& x);

/// Σ (a_i − b_i)². Throws ConfigError on dimension mismatch.
double sq_euclidean(const Vec64& a, const Vec64& b);

/// n draws from N(mean, std²).
Vec64 sample_gaussian(Rng& rng, std::size_t n, double mean, double stddev);

bool all_finite(std::span<const double> values);

}  // namespace protofuse
