#include "fbsde/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "fbsde/stoch.hpp"

namespace fbsde {

MlpSpec make_spec(std::size_t input_dim, std::size_t output_dim) {
  return MlpSpec{input_dim, input_dim + 10, output_dim};
}

MlpStack MlpStack::init(MlpSpec spec, std::size_t N, std::uint64_t seed,
                        std::optional<Interval> y0_range, std::size_t y0_dim) {
  if (spec.input_dim == 0 || spec.output_dim == 0)
    throw std::invalid_argument("mlp init: dimensions must be positive");
  if (spec.hidden_dim != spec.input_dim + 10)
    throw std::invalid_argument("mlp init: hidden width must be input width + 10, got " +
                                std::to_string(spec.hidden_dim));
  if (N < 1) throw std::invalid_argument("mlp init: need at least one timestep");
  if (y0_range) {
    if (y0_dim == 0)
      throw std::invalid_argument("mlp init: y0 requested with zero length");
    if (!(y0_range->lo < y0_range->hi))
      throw std::invalid_argument("mlp init: y0 init interval is empty or inverted");
  }

  MlpStack s;
  s.spec_ = spec;
  s.N_ = N;
  s.has_y0_ = y0_range.has_value();

  GaussianStream gs(seed);
  auto fill_weight = [&gs](Tensor& w, std::size_t fan_in) {
    const double r = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w) v = -r + 2.0 * r * gs.uniform();
  };

  s.params_.reserve(6 * N + (s.has_y0_ ? 1 : 0));
  const std::size_t in = spec.input_dim, hid = spec.hidden_dim, out = spec.output_dim;
  for (std::size_t i = 0; i < N; ++i) {
    Tensor w1({in, hid}), b1({hid}), w2({hid, hid}), b2({hid}), w3({hid, out}), b3({out});
    fill_weight(w1, in);
    fill_weight(w2, hid);
    fill_weight(w3, hid);
    s.params_.push_back(std::move(w1));
    s.params_.push_back(std::move(b1));
    s.params_.push_back(std::move(w2));
    s.params_.push_back(std::move(b2));
    s.params_.push_back(std::move(w3));
    s.params_.push_back(std::move(b3));
  }
  if (s.has_y0_) {
    Tensor y0({y0_dim});
    for (auto& v : y0) v = y0_range->lo + (y0_range->hi - y0_range->lo) * gs.uniform();
    s.params_.push_back(std::move(y0));
  }
  return s;
}

void MlpStack::zero_output_layer() {
  // Output weights and bias -> 0, hidden layers untouched: every net starts
  // as the constant-zero function but trains normally (the output layer sees
  // nonzero activations, so its gradient is alive from step one). Needed when
  // the diffusion multiplies the net output: a random initial control can
  // blow up the state before the first update.
  for (std::size_t i = 0; i < N_; ++i) {
    for (double& v : params_[6 * i + 4]) v = 0.0;
    for (double& v : params_[6 * i + 5]) v = 0.0;
  }
}

Tensor& MlpStack::y0() {
  if (!has_y0_) throw std::logic_error("mlp: stack has no trainable y0");
  return params_.back();
}

const Tensor& MlpStack::y0() const {
  if (!has_y0_) throw std::logic_error("mlp: stack has no trainable y0");
  return params_.back();
}

std::vector<Val> MlpStack::bind(Tape& tape, std::size_t slot_base) const {
  std::vector<Val> out;
  out.reserve(params_.size());
  for (std::size_t k = 0; k < params_.size(); ++k)
    out.push_back(tape.param(params_[k], slot_base + k));
  return out;
}

Val MlpStack::forward(Tape& tape, const std::vector<Val>& bound, std::size_t i,
                      Val x) const {
  if (i >= N_)
    throw std::out_of_range("mlp forward: timestep " + std::to_string(i) + " of " +
                            std::to_string(N_));
  if (bound.size() < 6 * N_)
    throw std::invalid_argument("mlp forward: bound parameter list is incomplete");
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 2 || xv.dim(1) != spec_.input_dim)
    throw std::invalid_argument("mlp forward: input shape " + xv.shape_str() +
                                " does not match input width " +
                                std::to_string(spec_.input_dim));
  const std::size_t b = 6 * i;
  Val h1 = tape.relu(tape.add_rowvec(tape.matmul(x, bound[b + 0]), bound[b + 1]));
  Val h2 = tape.relu(tape.add_rowvec(tape.matmul(h1, bound[b + 2]), bound[b + 3]));
  return tape.add_rowvec(tape.matmul(h2, bound[b + 4]), bound[b + 5]);
}

namespace {
constexpr char kNetMagic[8] = {'F', 'B', 'S', 'D', 'E', 'N', 'N', '1'};

void write_u64(std::FILE* f, std::uint64_t v) {
  if (std::fwrite(&v, sizeof v, 1, f) != 1)
    throw std::runtime_error("checkpoint: short write");
}

std::uint64_t read_u64(std::FILE* f) {
  std::uint64_t v;
  if (std::fread(&v, sizeof v, 1, f) != 1)
    throw std::runtime_error("checkpoint: truncated file");
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const std::vector<const MlpStack*>& stacks) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  try {
    if (std::fwrite(kNetMagic, 1, 8, f) != 8)
      throw std::runtime_error("checkpoint: short write");
    write_u64(f, stacks.size());
    for (const MlpStack* s : stacks) {
      write_u64(f, s->spec().input_dim);
      write_u64(f, s->spec().hidden_dim);
      write_u64(f, s->spec().output_dim);
      write_u64(f, s->nets());
      write_u64(f, s->has_y0() ? 1 : 0);
      write_u64(f, s->has_y0() ? s->y0().size() : 0);
      for (const Tensor& t : s->params()) {
        write_u64(f, t.rank());
        for (std::size_t r = 0; r < t.rank(); ++r) write_u64(f, t.dim(r));
        if (std::fwrite(t.data(), sizeof(double), t.size(), f) != t.size())
          throw std::runtime_error("checkpoint: short write");
      }
    }
  } catch (...) {
    std::fclose(f);
    throw;
  }
  if (std::fclose(f) != 0) throw std::runtime_error("checkpoint: close failed for " + path);
}

std::vector<MlpStack> load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::vector<MlpStack> out;
  try {
    char magic[8];
    if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kNetMagic, 8) != 0)
      throw std::runtime_error("checkpoint: " + path + " has the wrong header");
    const std::uint64_t count = read_u64(f);
    for (std::uint64_t sidx = 0; sidx < count; ++sidx) {
      MlpStack s;
      s.spec_.input_dim = read_u64(f);
      s.spec_.hidden_dim = read_u64(f);
      s.spec_.output_dim = read_u64(f);
      s.N_ = read_u64(f);
      s.has_y0_ = read_u64(f) != 0;
      const std::uint64_t y0_dim = read_u64(f);
      const std::size_t ntensors = 6 * s.N_ + (s.has_y0_ ? 1 : 0);
      for (std::size_t k = 0; k < ntensors; ++k) {
        const std::uint64_t rank = read_u64(f);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = read_u64(f);
        Tensor t(shape);
        if (std::fread(t.data(), sizeof(double), t.size(), f) != t.size())
          throw std::runtime_error("checkpoint: truncated file");
        s.params_.push_back(std::move(t));
      }
      if (s.has_y0_ && s.params_.back().size() != y0_dim)
        throw std::runtime_error("checkpoint: y0 length disagrees with header");
      out.push_back(std::move(s));
    }
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
  return out;
}

}  // namespace fbsde
