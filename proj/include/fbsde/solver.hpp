#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fbsde/mlp.hpp"
#include "fbsde/problem.hpp"
#include "fbsde/report.hpp"
#include "fbsde/stoch.hpp"
#include "fbsde/tape.hpp"

namespace fbsde {

struct TrainConfig {
  Algorithm algorithm = Algorithm::kZControl;
  std::size_t N = 25;
  std::size_t M = 256;
  double lr = 5e-3;
  std::size_t max_steps = 5000;
  std::uint64_t seed = 1;

  /// Trailing-window variance stopping rule; absent means run to max_steps.
  std::optional<double> stop_variance_threshold;
  std::size_t stop_window = 1000;

  Interval y0_init_range{0.0, 1.0};

  /// Draw a fresh Brownian batch every iteration instead of fixing one per
  /// run. Only meaningful when nothing feeds back across iterations, so it
  /// is rejected for the Picard algorithm.
  bool resample_each_iter = false;

  /// Start the Picard recursion from zero paths instead of standard normals.
  bool picard_init_zero = false;

  /// Zero the output layer of every Z-network at init, so the control starts
  /// as the exact zero function. Stabilizes problems whose diffusion is
  /// proportional to Z, where a random initial control can blow up the state
  /// before training begins.
  bool z_head_zero_init = false;

  double divergence_loss = 1e8;
  bool plain_sgd = false;
  double clip_norm = 0.0;

  /// Warm-start from / save the trained nets to the versioned checkpoint
  /// format (one stack, or value+integrand stacks for the second variant).
  std::string checkpoint_in;
  std::string checkpoint_out;
};

/// Result of one rollout: terminal nodes plus whatever the algorithm
/// carries forward (per-sample penalty for the u-control variant, detached
/// trajectories for the Picard variant).
struct Rollout {
  Val x_terminal;
  Val y_terminal;
  Val penalty;           // [M,1], already scaled by T/N; kYControl only
  bool has_penalty = false;
  Tensor traj_y;         // [M,N,m] detached, kPicard only
  Tensor traj_z;         // [M,N,m*d] detached, kPicard only
};

/// Trainable Y0, per-step nets mapping (X_i, Y_i) -> Z_i.
/// Stack contract: input n+m, output m*d, trainable y0 of size m.
Rollout euler_rollout_alg1(const FbsdeProblem& problem, const MlpStack& stack,
                           const std::vector<Val>& bound, const PathBatch& paths,
                           Tape& tape);

/// Y treated as a control: u nets (N+1 of them, input n, output m) give the
/// Y trajectory its targets and the time-0 value; z nets (N, input n, output
/// m*d) give the integrand. Forward coefficients consume u, the generator
/// consumes the rolled Y.
Rollout euler_rollout_alg2(const FbsdeProblem& problem, const MlpStack& u_stack,
                           const MlpStack& z_stack, const std::vector<Val>& u_bound,
                           const std::vector<Val>& z_bound, const PathBatch& paths,
                           Tape& tape);

/// Decoupled pass: forward coefficients consume the previous iteration's
/// (Y, Z) path values; nets (input n+m+m*d, output m*d) and the generator
/// consume current values. Returns the new detached trajectories.
Rollout euler_rollout_alg3(const FbsdeProblem& problem, const MlpStack& stack,
                           const std::vector<Val>& bound, const PathBatch& paths,
                           const Tensor& prev_y, const Tensor& prev_z, Tape& tape);

/// (1/2M) * sum over samples of |y_T - g_T|^2.
Val loss_terminal(Tape& tape, Val y_terminal, Val g_terminal, std::size_t M);

/// Terminal loss plus the mean of the per-sample penalty accumulator.
Val loss_alg2(Tape& tape, Val y_terminal, Val g_terminal, Val penalty, std::size_t M);

RunReport train(const FbsdeProblem& problem, const TrainConfig& config);

struct ResidualRow {
  std::size_t N = 0;
  double residual = 0.0;  // E |Y_T - g(X_T)|^2 with explicit (y,z) substituted
};

/// Euler-consistency probe: simulate the system with Y and Z replaced by the
/// problem's explicit formulas along the paths; the terminal residual must
/// shrink as the grid refines. Grids sharing a common refinement reuse the
/// same Brownian motion so the comparison is noise-free.
std::vector<ResidualRow> residual_check(const FbsdeProblem& problem,
                                        const std::vector<std::size_t>& n_list,
                                        std::size_t M = 256, std::uint64_t seed = 7777);

struct GradCheckResult {
  double pipeline_max_rel_err = 0.0;  // worst over all three algorithms
  double isolated_max_rel_err = 0.0;  // single net, no dynamics
  bool pass = false;                  // pipeline <= 1e-4 and isolated <= 1e-5
};

/// Full-pipeline finite-difference audit of the three training losses on a
/// tiny instance (M=4, N=3, one-dimensional problem), every parameter entry.
GradCheckResult gradient_check(std::uint64_t seed = 424242);

/// Deterministic sub-stream derivation so paths, weights, and auxiliary
/// draws never share a generator state.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace fbsde
