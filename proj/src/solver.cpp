#include "fbsde/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include "fbsde/adam.hpp"

namespace fbsde {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 of (seed, stream); distinct streams land in unrelated states
  // even for adjacent user seeds.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

// RNG sub-streams: keep every consumer of randomness on its own seed.
constexpr std::uint64_t kStreamPaths = 0;
constexpr std::uint64_t kStreamStack = 1;
constexpr std::uint64_t kStreamAuxStack = 2;
constexpr std::uint64_t kStreamPicardInit = 3;
constexpr std::uint64_t kStreamResampleBase = 16;  // + iteration

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Tensor x0_batch(const FbsdeProblem& p, std::size_t M) {
  Tensor x({M, p.n});
  for (std::size_t r = 0; r < M; ++r)
    for (std::size_t j = 0; j < p.n; ++j) x.at(r, j) = p.x0[j];
  return x;
}

// Re-throws a mid-rollout NaN/Inf with the timestep and batch row attached.
template <typename Fn>
auto stage(const char* what, std::size_t step, Fn&& fn) {
  try {
    return fn();
  } catch (const NonFiniteError& e) {
    throw std::runtime_error("rollout: non-finite " + std::string(what) +
                             " at timestep " + std::to_string(step) +
                             ", sample " + std::to_string(e.row) + " (" +
                             e.what() + ")");
  }
}

// [M,N,k] trajectory helpers.
Tensor slice_step(const Tensor& traj, std::size_t i) {
  const std::size_t M = traj.dim(0), N = traj.dim(1), k = traj.dim(2);
  Tensor out({M, k});
  for (std::size_t r = 0; r < M; ++r)
    for (std::size_t c = 0; c < k; ++c) out.at(r, c) = traj[(r * N + i) * k + c];
  return out;
}

void store_step(Tensor& traj, std::size_t i, const Tensor& v) {
  const std::size_t M = traj.dim(0), N = traj.dim(1), k = traj.dim(2);
  for (std::size_t r = 0; r < M; ++r)
    for (std::size_t c = 0; c < k; ++c) traj[(r * N + i) * k + c] = v.at(r, c);
}

void check_paths(const FbsdeProblem& p, const PathBatch& paths) {
  if (paths.d != p.d)
    throw std::invalid_argument(
        "rollout: Brownian dimension " + std::to_string(paths.d) +
        " does not match the problem's d = " + std::to_string(p.d));
  if (paths.M == 0 || paths.N == 0)
    throw std::invalid_argument("rollout: empty path batch");
}

void check_bound(const MlpStack& s, const std::vector<Val>& bound,
                 const char* which) {
  if (bound.size() != s.params().size())
    throw std::invalid_argument(std::string("rollout: ") + which +
                                " bindings do not cover the stack; call "
                                "bind() on the same tape first");
}

}  // namespace

Val loss_terminal(Tape& tape, Val y_terminal, Val g_terminal, std::size_t M) {
  Val mis = tape.sub(y_terminal, g_terminal);
  return tape.scale(tape.sum_all(tape.square(mis)),
                    1.0 / (2.0 * static_cast<double>(M)));
}

Val loss_alg2(Tape& tape, Val y_terminal, Val g_terminal, Val penalty,
              std::size_t M) {
  Val sq = tape.row_sum(tape.square(tape.sub(y_terminal, g_terminal)));
  return tape.scale(tape.sum_all(tape.add(sq, penalty)),
                    1.0 / (2.0 * static_cast<double>(M)));
}

Rollout euler_rollout_alg1(const FbsdeProblem& problem, const MlpStack& stack,
                           const std::vector<Val>& bound, const PathBatch& paths,
                           Tape& tape) {
  check_paths(problem, paths);
  check_bound(stack, bound, "control-net");
  if (stack.spec().input_dim != problem.n + problem.m ||
      stack.spec().output_dim != problem.m * problem.d)
    throw std::invalid_argument(
        "rollout: control nets must map (x, y) of width " +
        std::to_string(problem.n + problem.m) + " to " +
        std::to_string(problem.m * problem.d) + " integrand entries");
  if (!stack.has_y0())
    throw std::invalid_argument(
        "rollout: this variant trains the initial value; the stack carries none");
  if (stack.nets() != paths.N)
    throw std::invalid_argument("rollout: " + std::to_string(stack.nets()) +
                                " nets for " + std::to_string(paths.N) +
                                " timesteps");

  const std::size_t M = paths.M, N = paths.N;
  const double dt = paths.dt;

  Val x = tape.constant(x0_batch(problem, M));
  Val y = tape.repeat_rows(bound.back(), M);

  for (std::size_t i = 0; i < N; ++i) {
    const double t = static_cast<double>(i) * dt;
    Val z = stage("control net", i, [&] {
      return stack.forward(tape, bound, i, tape.concat_cols(x, y));
    });
    Val dw = tape.constant(paths.step_slice(i));
    Val bv = stage("drift", i, [&] { return problem.b(tape, t, x, y, z); });
    Val sv = stage("diffusion", i, [&] { return problem.sigma(tape, t, x, y, z); });
    Val fv = stage("generator", i, [&] { return problem.f(tape, t, x, y, z); });
    x = stage("state update", i, [&] {
      return tape.add(tape.add(x, tape.scale(bv, dt)), tape.bmatvec(sv, dw));
    });
    y = stage("value update", i, [&] {
      return tape.add(tape.sub(y, tape.scale(fv, dt)), tape.bmatvec(z, dw));
    });
  }

  Rollout ro;
  ro.x_terminal = x;
  ro.y_terminal = y;
  return ro;
}

Rollout euler_rollout_alg2(const FbsdeProblem& problem, const MlpStack& u_stack,
                           const MlpStack& z_stack, const std::vector<Val>& u_bound,
                           const std::vector<Val>& z_bound, const PathBatch& paths,
                           Tape& tape) {
  check_paths(problem, paths);
  check_bound(u_stack, u_bound, "value-net");
  check_bound(z_stack, z_bound, "integrand-net");
  if (u_stack.spec().input_dim != problem.n ||
      u_stack.spec().output_dim != problem.m)
    throw std::invalid_argument("rollout: value nets must map x of width " +
                                std::to_string(problem.n) + " to " +
                                std::to_string(problem.m) + " components");
  if (u_stack.has_y0())
    throw std::invalid_argument(
        "rollout: the time-0 value net provides the initial value; a separate "
        "trainable one is not used here");
  if (z_stack.spec().input_dim != problem.n ||
      z_stack.spec().output_dim != problem.m * problem.d)
    throw std::invalid_argument("rollout: integrand nets must map x of width " +
                                std::to_string(problem.n) + " to " +
                                std::to_string(problem.m * problem.d) +
                                " entries");
  if (u_stack.nets() != paths.N + 1 || z_stack.nets() != paths.N)
    throw std::invalid_argument(
        "rollout: need one value net per grid time (" +
        std::to_string(paths.N + 1) + ") and one integrand net per step (" +
        std::to_string(paths.N) + "); got " + std::to_string(u_stack.nets()) +
        " and " + std::to_string(z_stack.nets()));

  const std::size_t M = paths.M, N = paths.N;
  const double dt = paths.dt;

  Val x = tape.constant(x0_batch(problem, M));
  Val u = stage("value net", 0, [&] {
    return u_stack.forward(tape, u_bound, 0, x);
  });
  Val y = u;

  Val pen;
  for (std::size_t i = 0; i < N; ++i) {
    const double t = static_cast<double>(i) * dt;
    Val z = stage("integrand net", i, [&] {
      return z_stack.forward(tape, z_bound, i, x);
    });
    Val dw = tape.constant(paths.step_slice(i));
    Val bv = stage("drift", i, [&] { return problem.b(tape, t, x, u, z); });
    Val sv = stage("diffusion", i, [&] { return problem.sigma(tape, t, x, u, z); });
    Val fv = stage("generator", i, [&] { return problem.f(tape, t, x, y, z); });
    x = stage("state update", i, [&] {
      return tape.add(tape.add(x, tape.scale(bv, dt)), tape.bmatvec(sv, dw));
    });
    y = stage("value update", i, [&] {
      return tape.add(tape.sub(y, tape.scale(fv, dt)), tape.bmatvec(z, dw));
    });
    u = stage("value net", i + 1, [&] {
      return u_stack.forward(tape, u_bound, i + 1, x);
    });
    Val gap = tape.row_sum(tape.square(tape.sub(y, u)));
    pen = (i == 0) ? gap : tape.add(pen, gap);
  }

  Rollout ro;
  ro.x_terminal = x;
  ro.y_terminal = y;
  ro.penalty = tape.scale(pen, dt);
  ro.has_penalty = true;
  return ro;
}

Rollout euler_rollout_alg3(const FbsdeProblem& problem, const MlpStack& stack,
                           const std::vector<Val>& bound, const PathBatch& paths,
                           const Tensor& prev_y, const Tensor& prev_z, Tape& tape) {
  check_paths(problem, paths);
  check_bound(stack, bound, "integrand-net");
  const std::size_t want_in = problem.n + problem.m + problem.m * problem.d;
  if (stack.spec().input_dim != want_in ||
      stack.spec().output_dim != problem.m * problem.d)
    throw std::invalid_argument(
        "rollout: nets must map (x, y_prev, z_prev) of width " +
        std::to_string(want_in) + " to " +
        std::to_string(problem.m * problem.d) + " entries");
  if (!stack.has_y0())
    throw std::invalid_argument(
        "rollout: this variant trains the initial value; the stack carries none");
  if (stack.nets() != paths.N)
    throw std::invalid_argument("rollout: " + std::to_string(stack.nets()) +
                                " nets for " + std::to_string(paths.N) +
                                " timesteps");
  const std::size_t M = paths.M, N = paths.N;
  const std::vector<std::size_t> want_y{M, N, problem.m};
  const std::vector<std::size_t> want_z{M, N, problem.m * problem.d};
  if (prev_y.shape() != want_y || prev_z.shape() != want_z)
    throw std::invalid_argument(
        "rollout: stored trajectories have shapes " + prev_y.shape_str() +
        " and " + prev_z.shape_str() + "; this batch needs [M,N,m] = [" +
        std::to_string(M) + "," + std::to_string(N) + "," +
        std::to_string(problem.m) + "] and [M,N,m*d]");

  const double dt = paths.dt;

  Rollout ro;
  ro.traj_y = Tensor({M, N, problem.m});
  ro.traj_z = Tensor({M, N, problem.m * problem.d});

  Val x = tape.constant(x0_batch(problem, M));
  Val y = tape.repeat_rows(bound.back(), M);

  for (std::size_t i = 0; i < N; ++i) {
    const double t = static_cast<double>(i) * dt;
    Val yk = tape.constant(slice_step(prev_y, i));
    Val zk = tape.constant(slice_step(prev_z, i));
    Val z = stage("integrand net", i, [&] {
      return stack.forward(tape, bound, i,
                           tape.concat_cols(tape.concat_cols(x, yk), zk));
    });
    store_step(ro.traj_y, i, tape.value(y));
    store_step(ro.traj_z, i, tape.value(z));

    Val dw = tape.constant(paths.step_slice(i));
    // drift/diffusion ride on the stored previous-iteration pair, so the
    // state trajectory is fixed within this iteration
    Val bv = stage("drift", i, [&] { return problem.b(tape, t, x, yk, zk); });
    Val sv = stage("diffusion", i, [&] { return problem.sigma(tape, t, x, yk, zk); });
    Val fv = stage("generator", i, [&] { return problem.f(tape, t, x, y, z); });
    x = stage("state update", i, [&] {
      return tape.add(tape.add(x, tape.scale(bv, dt)), tape.bmatvec(sv, dw));
    });
    y = stage("value update", i, [&] {
      return tape.add(tape.sub(y, tape.scale(fv, dt)), tape.bmatvec(z, dw));
    });
  }

  ro.x_terminal = x;
  ro.y_terminal = y;
  return ro;
}

RunReport train(const FbsdeProblem& problem, const TrainConfig& config) {
  if (config.M == 0) throw std::invalid_argument("train: batch size must be positive");
  if (config.max_steps == 0)
    throw std::invalid_argument("train: need at least one iteration");
  if (config.resample_each_iter && config.algorithm == Algorithm::kPicard)
    throw std::invalid_argument(
        "train: per-iteration resampling contradicts the stored-trajectory "
        "feedback of the picard variant; drop one of the two");
  if (config.stop_variance_threshold && config.stop_window < 2)
    throw std::invalid_argument(
        "train: the variance stopping rule needs a window of at least 2");

  const TimeGrid grid = make_grid(problem.T, config.N);
  const std::size_t M = config.M, N = config.N;
  const std::size_t n = problem.n, m = problem.m, d = problem.d;

  PathBatch paths =
      sample_paths(grid, M, d, derive_seed(config.seed, kStreamPaths));

  MlpStack stack, u_stack, z_stack;
  switch (config.algorithm) {
    case Algorithm::kZControl:
      stack = MlpStack::init(make_spec(n + m, m * d), N,
                             derive_seed(config.seed, kStreamStack),
                             config.y0_init_range, m);
      break;
    case Algorithm::kYControl:
      u_stack = MlpStack::init(make_spec(n, m), N + 1,
                               derive_seed(config.seed, kStreamStack));
      z_stack = MlpStack::init(make_spec(n, m * d), N,
                               derive_seed(config.seed, kStreamAuxStack));
      break;
    case Algorithm::kPicard:
      stack = MlpStack::init(make_spec(n + m + m * d, m * d), N,
                             derive_seed(config.seed, kStreamStack),
                             config.y0_init_range, m);
      break;
  }

  if (config.z_head_zero_init) {
    // The Z-producing stack is `stack` for the single-stack variants and
    // z_stack for the u/z pair; u keeps its draw (it must learn Y's level).
    (config.algorithm == Algorithm::kYControl ? z_stack : stack).zero_output_layer();
  }

  if (!config.checkpoint_in.empty()) {
    std::vector<MlpStack> loaded = load_checkpoint(config.checkpoint_in);
    auto compatible = [](const MlpStack& got, const MlpStack& want) {
      return got.spec().input_dim == want.spec().input_dim &&
             got.spec().hidden_dim == want.spec().hidden_dim &&
             got.spec().output_dim == want.spec().output_dim &&
             got.nets() == want.nets() && got.has_y0() == want.has_y0();
    };
    const bool two = config.algorithm == Algorithm::kYControl;
    if (loaded.size() != (two ? 2u : 1u) ||
        !compatible(loaded[0], two ? u_stack : stack) ||
        (two && !compatible(loaded[1], z_stack)))
      throw std::invalid_argument(
          "train: checkpoint " + config.checkpoint_in +
          " does not match this problem/algorithm's net layout");
    if (two) {
      u_stack = std::move(loaded[0]);
      z_stack = std::move(loaded[1]);
    } else {
      stack = std::move(loaded[0]);
    }
  }

  Tensor prev_y, prev_z;
  if (config.algorithm == Algorithm::kPicard) {
    prev_y = Tensor({M, N, m});
    prev_z = Tensor({M, N, m * d});
    if (!config.picard_init_zero) {
      GaussianStream gs(derive_seed(config.seed, kStreamPicardInit));
      for (double& v : prev_y) v = gs.next();
      for (double& v : prev_z) v = gs.next();
    }
  }

  OptimConfig oc;
  oc.lr = config.lr;
  oc.plain_sgd = config.plain_sgd;
  oc.clip_norm = config.clip_norm;
  Adam opt_main(oc), opt_aux(oc);

  RunReport rep;
  rep.problem = problem.name;
  rep.algorithm = config.algorithm;
  rep.n = n;
  rep.m = m;
  rep.d = d;
  rep.T = problem.T;
  rep.N = N;
  rep.M = M;
  rep.lr = config.lr;
  rep.max_steps = config.max_steps;
  rep.seed = config.seed;
  rep.stop_variance_threshold = config.stop_variance_threshold;
  rep.stop_window = config.stop_window;
  rep.resample_each_iter = config.resample_each_iter;
  if (problem.has_explicit_y()) rep.explicit_y0 = problem.explicit_y0();

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  auto y0_estimate = [&]() -> std::vector<double> {
    if (config.algorithm == Algorithm::kYControl) {
      Tape t;
      auto ub = u_stack.bind(t, 0);
      Tensor x0row({1, n});
      for (std::size_t j = 0; j < n; ++j) x0row[j] = problem.x0[j];
      Val u0 = u_stack.forward(t, ub, 0, t.constant(x0row));
      const Tensor& v = t.value(u0);
      return {v.begin(), v.end()};
    }
    const Tensor& v = stack.y0();
    return {v.begin(), v.end()};
  };

  auto guard = [&](double loss_value) {
    if (!std::isfinite(loss_value))
      throw std::runtime_error("training loss is not finite");
    if (loss_value > config.divergence_loss)
      throw std::runtime_error("training loss " + fmt_g(loss_value) +
                               " exceeded the divergence guard " +
                               fmt_g(config.divergence_loss));
  };

  for (std::size_t k = 1; k <= config.max_steps; ++k) {
    const PathBatch* batch = &paths;
    PathBatch fresh;
    if (config.resample_each_iter) {
      fresh = sample_paths(grid, M, d,
                           derive_seed(config.seed, kStreamResampleBase + k));
      batch = &fresh;
    }

    double loss_value = 0.0;
    try {
      Tape tape;
      switch (config.algorithm) {
        case Algorithm::kZControl: {
          auto bound = stack.bind(tape, 0);
          Rollout ro = euler_rollout_alg1(problem, stack, bound, *batch, tape);
          Val gT = stage("terminal condition", N,
                         [&] { return problem.g(tape, ro.x_terminal); });
          Val loss = loss_terminal(tape, ro.y_terminal, gT, M);
          loss_value = tape.value(loss)[0];
          guard(loss_value);
          opt_main.apply(stack.params(), tape.backward(loss));
          break;
        }
        case Algorithm::kYControl: {
          auto u_bound = u_stack.bind(tape, 0);
          auto z_bound = z_stack.bind(tape, u_stack.params().size());
          Rollout ro = euler_rollout_alg2(problem, u_stack, z_stack, u_bound,
                                          z_bound, *batch, tape);
          Val gT = stage("terminal condition", N,
                         [&] { return problem.g(tape, ro.x_terminal); });
          Val loss = loss_alg2(tape, ro.y_terminal, gT, ro.penalty, M);
          loss_value = tape.value(loss)[0];
          guard(loss_value);
          auto grads = tape.backward(loss);
          const std::size_t cut = u_stack.params().size();
          std::vector<Tensor> gu(grads.begin(), grads.begin() + cut);
          std::vector<Tensor> gz(grads.begin() + cut, grads.end());
          opt_main.apply(u_stack.params(), std::move(gu));
          opt_aux.apply(z_stack.params(), std::move(gz));
          break;
        }
        case Algorithm::kPicard: {
          auto bound = stack.bind(tape, 0);
          Rollout ro = euler_rollout_alg3(problem, stack, bound, *batch,
                                          prev_y, prev_z, tape);
          Val gT = stage("terminal condition", N,
                         [&] { return problem.g(tape, ro.x_terminal); });
          Val loss = loss_terminal(tape, ro.y_terminal, gT, M);
          loss_value = tape.value(loss)[0];
          guard(loss_value);
          opt_main.apply(stack.params(), tape.backward(loss));
          prev_y = std::move(ro.traj_y);
          prev_z = std::move(ro.traj_z);
          break;
        }
      }
    } catch (const std::runtime_error& e) {
      rep.termination = Termination::kDiverged;
      rep.divergence_message =
          std::string(e.what()) + " (iteration " + std::to_string(k) + ")";
      break;
    }

    rep.records.push_back(IterRecord{k, loss_value, y0_estimate(), elapsed()});

    if (config.stop_variance_threshold &&
        rep.records.size() >= config.stop_window) {
      const std::size_t W = config.stop_window;
      const std::size_t first = rep.records.size() - W;
      double worst = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        double mean = 0.0;
        for (std::size_t j = 0; j < W; ++j)
          mean += rep.records[first + j].y0[c];
        mean /= static_cast<double>(W);
        double ss = 0.0;
        for (std::size_t j = 0; j < W; ++j) {
          const double dv = rep.records[first + j].y0[c] - mean;
          ss += dv * dv;
        }
        worst = std::max(worst, ss / static_cast<double>(W - 1));
      }
      if (worst < *config.stop_variance_threshold) {
        rep.termination = Termination::kConverged;
        break;
      }
    }
  }

  rep.steps_run = rep.records.size();
  rep.wall_seconds = elapsed();
  rep.final_y0 = y0_estimate();
  if (rep.explicit_y0 && *rep.explicit_y0 != 0.0 && !rep.final_y0.empty())
    rep.relative_error =
        std::abs(rep.final_y0[0] - *rep.explicit_y0) / std::abs(*rep.explicit_y0);

  if (!config.checkpoint_out.empty()) {
    std::vector<const MlpStack*> out;
    if (config.algorithm == Algorithm::kYControl)
      out = {&u_stack, &z_stack};
    else
      out = {&stack};
    save_checkpoint(config.checkpoint_out, out);
  }
  return rep;
}

namespace {

// Sum q consecutive fine increments per coarse step: the same Brownian
// motion seen on the coarser grid.
PathBatch coarsen(const PathBatch& fine, std::size_t q, double T) {
  PathBatch c;
  c.M = fine.M;
  c.N = fine.N / q;
  c.d = fine.d;
  c.seed = fine.seed;
  c.dt = T / static_cast<double>(c.N);
  c.dW = Tensor({c.M, c.N, c.d});
  for (std::size_t r = 0; r < c.M; ++r)
    for (std::size_t i = 0; i < c.N; ++i)
      for (std::size_t j = 0; j < q; ++j)
        for (std::size_t k = 0; k < c.d; ++k)
          c.dW[(r * c.N + i) * c.d + k] +=
              fine.dW[(r * fine.N + (i * q + j)) * fine.d + k];
  return c;
}

double substituted_residual(const FbsdeProblem& p, const PathBatch& batch) {
  const std::size_t M = batch.M, N = batch.N, n = p.n, m = p.m, d = p.d;
  const double dt = batch.dt;

  Tensor X = x0_batch(p, M);
  Tensor Y = p.explicit_y(0.0, X);

  for (std::size_t i = 0; i < N; ++i) {
    const double t = static_cast<double>(i) * dt;
    const Tensor yi = p.explicit_y(t, X);
    const Tensor zi = p.explicit_z(t, X);

    Tape tape;
    const Val xv = tape.constant(X);
    const Val yv = tape.constant(yi);
    const Val zv = tape.constant(zi);
    const Tensor bv = tape.value(p.b(tape, t, xv, yv, zv));
    const Tensor sv = tape.value(p.sigma(tape, t, xv, yv, zv));
    const Tensor fv = tape.value(p.f(tape, t, xv, yv, zv));
    const Tensor dw = batch.step_slice(i);

    for (std::size_t r = 0; r < M; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        double acc = X.at(r, c) + bv.at(r, c) * dt;
        for (std::size_t k = 0; k < d; ++k)
          acc += sv[r * (n * d) + c * d + k] * dw.at(r, k);
        X.at(r, c) = acc;
      }
      for (std::size_t c = 0; c < m; ++c) {
        double acc = Y.at(r, c) - fv.at(r, c) * dt;
        for (std::size_t k = 0; k < d; ++k)
          acc += zi[r * (m * d) + c * d + k] * dw.at(r, k);
        Y.at(r, c) = acc;
      }
    }
  }

  Tape tg;
  const Tensor gv = tg.value(p.g(tg, tg.constant(X)));
  double acc = 0.0;
  for (std::size_t r = 0; r < M; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      const double dv = Y.at(r, c) - gv.at(r, c);
      acc += dv * dv;
    }
  return acc / static_cast<double>(M);
}

}  // namespace

std::vector<ResidualRow> residual_check(const FbsdeProblem& problem,
                                        const std::vector<std::size_t>& n_list,
                                        std::size_t M, std::uint64_t seed) {
  if (!problem.has_explicit_y() || !problem.has_explicit_z())
    throw std::invalid_argument("residual_check: " + problem.name +
                                " has no explicit (y, z) pair to substitute");
  if (M == 0) throw std::invalid_argument("residual_check: M must be positive");
  std::vector<ResidualRow> rows;
  if (n_list.empty()) return rows;

  const std::size_t n_fine = *std::max_element(n_list.begin(), n_list.end());
  const PathBatch fine =
      sample_paths(make_grid(problem.T, n_fine), M, problem.d, seed);

  for (std::size_t N : n_list) {
    make_grid(problem.T, N);  // validates
    PathBatch batch;
    if (n_fine % N == 0)
      batch = coarsen(fine, n_fine / N, problem.T);
    else
      batch = sample_paths(make_grid(problem.T, N), M, problem.d, seed);
    rows.push_back(ResidualRow{N, substituted_residual(problem, batch)});
  }
  return rows;
}

namespace {

// FD sweep over every parameter entry of every stack; returns the worst
// relative error against the analytic gradients.
double fd_audit(std::vector<MlpStack*> stacks,
                const std::function<double()>& loss,
                const std::function<std::vector<Tensor>()>& grads, double h) {
  const std::vector<Tensor> gs = grads();
  double worst = 0.0;
  std::size_t gi = 0;
  for (MlpStack* s : stacks) {
    for (Tensor& t : s->params()) {
      const Tensor& g = gs[gi++];
      for (std::size_t e = 0; e < t.size(); ++e) {
        const double save = t[e];
        t[e] = save + h;
        const double up = loss();
        t[e] = save - h;
        const double dn = loss();
        t[e] = save;
        const double fd = (up - dn) / (2.0 * h);
        const double a = g[e];
        const double denom = std::max({std::abs(a), std::abs(fd), 1e-3});
        worst = std::max(worst, std::abs(a - fd) / denom);
      }
    }
  }
  return worst;
}

}  // namespace

GradCheckResult gradient_check(std::uint64_t seed) {
  const FbsdeProblem p = example3();
  const std::size_t M = 4, N = 3;
  const double h = 1e-6;
  const TimeGrid grid = make_grid(p.T, N);
  const PathBatch paths =
      sample_paths(grid, M, p.d, derive_seed(seed, kStreamPaths));
  const Interval y0r{0.0, 1.0};

  GradCheckResult res;

  {
    MlpStack s = MlpStack::init(make_spec(p.n + p.m, p.m * p.d), N,
                                derive_seed(seed, kStreamStack), y0r, p.m);
    auto loss = [&] {
      Tape t;
      auto b = s.bind(t, 0);
      Rollout ro = euler_rollout_alg1(p, s, b, paths, t);
      Val gT = p.g(t, ro.x_terminal);
      return t.value(loss_terminal(t, ro.y_terminal, gT, M))[0];
    };
    auto grads = [&] {
      Tape t;
      auto b = s.bind(t, 0);
      Rollout ro = euler_rollout_alg1(p, s, b, paths, t);
      Val gT = p.g(t, ro.x_terminal);
      return t.backward(loss_terminal(t, ro.y_terminal, gT, M));
    };
    res.pipeline_max_rel_err =
        std::max(res.pipeline_max_rel_err, fd_audit({&s}, loss, grads, h));
  }

  {
    MlpStack u = MlpStack::init(make_spec(p.n, p.m), N + 1,
                                derive_seed(seed, kStreamStack));
    MlpStack z = MlpStack::init(make_spec(p.n, p.m * p.d), N,
                                derive_seed(seed, kStreamAuxStack));
    auto loss = [&] {
      Tape t;
      auto ub = u.bind(t, 0);
      auto zb = z.bind(t, u.params().size());
      Rollout ro = euler_rollout_alg2(p, u, z, ub, zb, paths, t);
      Val gT = p.g(t, ro.x_terminal);
      return t.value(loss_alg2(t, ro.y_terminal, gT, ro.penalty, M))[0];
    };
    auto grads = [&] {
      Tape t;
      auto ub = u.bind(t, 0);
      auto zb = z.bind(t, u.params().size());
      Rollout ro = euler_rollout_alg2(p, u, z, ub, zb, paths, t);
      Val gT = p.g(t, ro.x_terminal);
      return t.backward(loss_alg2(t, ro.y_terminal, gT, ro.penalty, M));
    };
    res.pipeline_max_rel_err =
        std::max(res.pipeline_max_rel_err, fd_audit({&u, &z}, loss, grads, h));
  }

  {
    MlpStack s = MlpStack::init(make_spec(p.n + p.m + p.m * p.d, p.m * p.d), N,
                                derive_seed(seed, kStreamStack), y0r, p.m);
    Tensor prev_y({M, N, p.m}), prev_z({M, N, p.m * p.d});
    GaussianStream gs(derive_seed(seed, kStreamPicardInit));
    for (double& v : prev_y) v = gs.next();
    for (double& v : prev_z) v = gs.next();
    auto loss = [&] {
      Tape t;
      auto b = s.bind(t, 0);
      Rollout ro = euler_rollout_alg3(p, s, b, paths, prev_y, prev_z, t);
      Val gT = p.g(t, ro.x_terminal);
      return t.value(loss_terminal(t, ro.y_terminal, gT, M))[0];
    };
    auto grads = [&] {
      Tape t;
      auto b = s.bind(t, 0);
      Rollout ro = euler_rollout_alg3(p, s, b, paths, prev_y, prev_z, t);
      Val gT = p.g(t, ro.x_terminal);
      return t.backward(loss_terminal(t, ro.y_terminal, gT, M));
    };
    res.pipeline_max_rel_err =
        std::max(res.pipeline_max_rel_err, fd_audit({&s}, loss, grads, h));
  }

  {
    MlpStack iso = MlpStack::init(make_spec(3, 2), 1, derive_seed(seed, 7));
    Tensor x({5, 3});
    GaussianStream gs(derive_seed(seed, 8));
    for (double& v : x) v = gs.next();
    auto loss = [&] {
      Tape t;
      auto b = iso.bind(t, 0);
      Val out = iso.forward(t, b, 0, t.constant(x));
      return t.value(t.sum_all(t.square(out)))[0];
    };
    auto grads = [&] {
      Tape t;
      auto b = iso.bind(t, 0);
      Val out = iso.forward(t, b, 0, t.constant(x));
      return t.backward(t.sum_all(t.square(out)));
    };
    res.isolated_max_rel_err = fd_audit({&iso}, loss, grads, h);
  }

  res.pass =
      res.pipeline_max_rel_err <= 1e-4 && res.isolated_max_rel_err <= 1e-5;
  return res;
}

}  // namespace fbsde
