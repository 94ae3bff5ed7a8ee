#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fbsde/tensor.hpp"

namespace fbsde {

/// Even partition of [0, T] into N steps, spacing exactly T/N.
struct TimeGrid {
  double T = 0.0;
  std::size_t N = 0;
  double dt() const { return T / static_cast<double>(N); }
  double t(std::size_t i) const { return static_cast<double>(i) * dt(); }
};

TimeGrid make_grid(double T, std::size_t N);

/// Deterministic N(0,1) stream: mt19937_64 with uniforms taken as
/// ((x >> 11) + 1) * 2^-53 (in (0,1]) and Box–Muller with the cos/sin pair
/// convention. The algorithm is pinned here so a seed replays bit-for-bit
/// on any platform.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}
  double next();
  double uniform();  // in (0,1]

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// M Brownian paths over a grid: increments dW with shape [M, N, d],
/// each entry i.i.d. Normal(0, dt).
struct PathBatch {
  Tensor dW;  // [M, N, d]
  std::size_t M = 0, N = 0, d = 0;
  std::uint64_t seed = 0;
  double dt = 0.0;

  double increment(std::size_t path, std::size_t step, std::size_t coord) const {
    return dW[(path * N + step) * d + coord];
  }
  /// Increments of step i for all paths, as an [M, d] matrix.
  Tensor step_slice(std::size_t step) const;
};

PathBatch sample_paths(const TimeGrid& grid, std::size_t M, std::size_t d,
                       std::uint64_t seed);

/// Debug dump: magic + shape header + raw little-endian 64-bit values.
void dump_paths(const PathBatch& batch, const std::string& path);
PathBatch load_paths(const std::string& path);

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against the
/// Normal(0, stddev^2) distribution.
double ks_statistic_normal(std::vector<double> samples, double stddev);

}  // namespace fbsde
