#include "fbsde/stoch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <stdexcept>

namespace fbsde {

TimeGrid make_grid(double T, std::size_t N) {
  if (!(T > 0.0)) throw std::invalid_argument("make_grid: horizon T must be positive");
  if (N < 1) throw std::invalid_argument("make_grid: step count N must be at least 1");
  return TimeGrid{T, N};
}

double GaussianStream::uniform() {
  // 53 significant bits, shifted into (0,1] so log() below never sees 0.
  const std::uint64_t x = rng_();
  return (static_cast<double>(x >> 11) + 1.0) * 0x1.0p-53;
}

double GaussianStream::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

Tensor PathBatch::step_slice(std::size_t step) const {
  Tensor out({M, d});
  for (std::size_t p = 0; p < M; ++p)
    for (std::size_t k = 0; k < d; ++k) out[p * d + k] = increment(p, step, k);
  return out;
}

PathBatch sample_paths(const TimeGrid& grid, std::size_t M, std::size_t d,
                       std::uint64_t seed) {
  if (M < 1) throw std::invalid_argument("sample_paths: need at least one path");
  if (d < 1) throw std::invalid_argument("sample_paths: Brownian dimension must be >= 1");
  PathBatch b;
  b.M = M;
  b.N = grid.N;
  b.d = d;
  b.seed = seed;
  b.dt = grid.dt();
  b.dW = Tensor({M, grid.N, d});
  GaussianStream gs(seed);
  const double s = std::sqrt(b.dt);
  for (auto& v : b.dW) v = s * gs.next();
  return b;
}

namespace {
constexpr char kPathMagic[8] = {'F', 'B', 'S', 'D', 'E', 'P', 'B', '1'};
}

void dump_paths(const PathBatch& batch, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("dump_paths: cannot open " + path);
  std::uint64_t hdr[5] = {batch.M, batch.N, batch.d, batch.seed, 0};
  std::memcpy(&hdr[4], &batch.dt, sizeof(double));
  bool ok = std::fwrite(kPathMagic, 1, 8, f) == 8 &&
            std::fwrite(hdr, sizeof(std::uint64_t), 5, f) == 5 &&
            std::fwrite(batch.dW.data(), sizeof(double), batch.dW.size(), f) ==
                batch.dW.size();
  ok = std::fclose(f) == 0 && ok;
  if (!ok) throw std::runtime_error("dump_paths: short write to " + path);
}

PathBatch load_paths(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("load_paths: cannot open " + path);
  char magic[8];
  std::uint64_t hdr[5];
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kPathMagic, 8) != 0 ||
      std::fread(hdr, sizeof(std::uint64_t), 5, f) != 5) {
    std::fclose(f);
    throw std::runtime_error("load_paths: " + path + " is not a path-batch dump");
  }
  PathBatch b;
  b.M = hdr[0];
  b.N = hdr[1];
  b.d = hdr[2];
  b.seed = hdr[3];
  std::memcpy(&b.dt, &hdr[4], sizeof(double));
  b.dW = Tensor({b.M, b.N, b.d});
  const bool ok = std::fread(b.dW.data(), sizeof(double), b.dW.size(), f) == b.dW.size();
  std::fclose(f);
  if (!ok) throw std::runtime_error("load_paths: truncated dump " + path);
  return b;
}

double ks_statistic_normal(std::vector<double> samples, double stddev) {
  if (samples.empty()) throw std::invalid_argument("ks_statistic_normal: empty sample");
  if (!(stddev > 0.0)) throw std::invalid_argument("ks_statistic_normal: stddev must be positive");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-samples[i] / (stddev * std::numbers::sqrt2));
    const double hi = (static_cast<double>(i) + 1.0) / n - cdf;
    const double lo = cdf - static_cast<double>(i) / n;
    d = std::max({d, hi, lo});
  }
  return d;
}

}  // namespace fbsde
