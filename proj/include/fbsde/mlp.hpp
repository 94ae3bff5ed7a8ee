#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fbsde/tape.hpp"
#include "fbsde/tensor.hpp"

namespace fbsde {

/// Four-layer feed-forward shape: input, two ReLU hidden layers of width
/// input_dim + 10, linear output.
struct MlpSpec {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
};

MlpSpec make_spec(std::size_t input_dim, std::size_t output_dim);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// One independent network per timestep (no weight sharing across time),
/// plus an optional trainable initial value y0 of shape [y0_dim].
///
/// Parameter layout: 6 tensors per net — W1 [in,hid], b1 [hid], W2 [hid,hid],
/// b2 [hid], W3 [hid,out], b3 [out] — net i at indices [6i, 6i+6); when y0
/// is present it is the final tensor. This is also the slot order used when
/// binding onto a tape and the serialization order of checkpoints.
class MlpStack {
 public:
  /// Weights drawn U[-r, r] with r = sqrt(6/fan_in), biases zero.
  /// y0, when requested, is drawn uniformly from y0_range.
  static MlpStack init(MlpSpec spec, std::size_t N, std::uint64_t seed,
                       std::optional<Interval> y0_range = std::nullopt,
                       std::size_t y0_dim = 0);

  /// Reset every net's output layer (W3, b3) to zero: the stack computes the
  /// constant-zero function until trained away from it.
  void zero_output_layer();

  const MlpSpec& spec() const { return spec_; }
  std::size_t nets() const { return N_; }
  bool has_y0() const { return has_y0_; }

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  Tensor& y0();
  const Tensor& y0() const;

  /// Record every parameter on the tape as slots [slot_base, slot_base+count).
  std::vector<Val> bind(Tape& tape, std::size_t slot_base) const;

  /// Batch forward through net i. x is [M, input_dim]; result [M, output_dim].
  /// `bound` must come from bind() on the same tape.
  Val forward(Tape& tape, const std::vector<Val>& bound, std::size_t i, Val x) const;

 private:
  MlpSpec spec_;
  std::size_t N_ = 0;
  bool has_y0_ = false;
  std::vector<Tensor> params_;

  friend std::vector<MlpStack> load_checkpoint(const std::string& path);
};

/// Versioned binary checkpoint of one or more stacks; reload is bit-exact.
void save_checkpoint(const std::string& path, const std::vector<const MlpStack*>& stacks);
std::vector<MlpStack> load_checkpoint(const std::string& path);

}  // namespace fbsde
