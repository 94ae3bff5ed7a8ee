#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "fbsde/solver.hpp"

using namespace fbsde;

namespace {

// b = sigma = f = 0, g = 0: every update collapses to the identity.
FbsdeProblem zero_problem() {
  FbsdeProblem p;
  p.name = "zero";
  p.n = p.m = p.d = 1;
  p.T = 1.0;
  p.x0 = Tensor({1}, {0.7});
  p.b = [](Tape& t, double, Val x, Val, Val) { return t.scale(x, 0.0); };
  p.sigma = [](Tape& t, double, Val x, Val, Val) { return t.scale(x, 0.0); };
  p.f = [](Tape& t, double, Val, Val y, Val) { return t.scale(y, 0.0); };
  p.g = [](Tape& t, Val x) { return t.scale(t.row_sum(x), 0.0); };
  return p;
}

void zero_nets(MlpStack& s) {
  const std::size_t count = 6 * s.nets();
  for (std::size_t i = 0; i < count; ++i)
    for (double& v : s.params()[i]) v = 0.0;
}

PathBatch single_path(const PathBatch& b, std::size_t r) {
  PathBatch s;
  s.M = 1;
  s.N = b.N;
  s.d = b.d;
  s.seed = b.seed;
  s.dt = b.dt;
  s.dW = Tensor({1, b.N, b.d});
  for (std::size_t i = 0; i < b.N; ++i)
    for (std::size_t k = 0; k < b.d; ++k)
      s.dW[i * b.d + k] = b.dW[(r * b.N + i) * b.d + k];
  return s;
}

Tensor single_traj(const Tensor& traj, std::size_t r) {
  const std::size_t N = traj.dim(1), k = traj.dim(2);
  Tensor s({1, N, k});
  for (std::size_t i = 0; i < N * k; ++i) s[i] = traj[r * N * k + i];
  return s;
}

}  // namespace

TEST_CASE("zero drift and diffusion leave the state exactly at its start") {
  FbsdeProblem p = zero_problem();
  const PathBatch paths = sample_paths(make_grid(p.T, 4), 6, 1, 99);

  MlpStack s = MlpStack::init(make_spec(2, 1), 4, 31, Interval{0.0, 1.0}, 1);
  Tape tape;
  auto bound = s.bind(tape, 0);
  Rollout ro = euler_rollout_alg1(p, s, bound, paths, tape);
  const Tensor& xT = tape.value(ro.x_terminal);
  for (std::size_t r = 0; r < 6; ++r) CHECK(xT.at(r, 0) == 0.7);
}

TEST_CASE("zero integrand nets and zero generator pin the rolled value at its start") {
  FbsdeProblem p = zero_problem();
  const PathBatch paths = sample_paths(make_grid(p.T, 4), 6, 1, 99);

  SUBCASE("trainable-initial-value variants") {
    MlpStack s1 = MlpStack::init(make_spec(2, 1), 4, 31, Interval{0.0, 1.0}, 1);
    zero_nets(s1);
    Tape t1;
    auto b1 = s1.bind(t1, 0);
    Rollout r1 = euler_rollout_alg1(p, s1, b1, paths, t1);
    for (std::size_t r = 0; r < 6; ++r)
      CHECK(t1.value(r1.y_terminal).at(r, 0) == s1.y0()[0]);

    MlpStack s3 = MlpStack::init(make_spec(3, 1), 4, 31, Interval{0.0, 1.0}, 1);
    zero_nets(s3);
    Tensor py({6, 4, 1}), pz({6, 4, 1});
    GaussianStream gs(7);
    for (double& v : py) v = gs.next();
    for (double& v : pz) v = gs.next();
    Tape t3;
    auto b3 = s3.bind(t3, 0);
    Rollout r3 = euler_rollout_alg3(p, s3, b3, paths, py, pz, t3);
    for (std::size_t r = 0; r < 6; ++r)
      CHECK(t3.value(r3.y_terminal).at(r, 0) == s3.y0()[0]);
    // stored trajectory echoes the rollout's own values
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t i = 0; i < 4; ++i)
        CHECK(r3.traj_y[(r * 4 + i)] == s3.y0()[0]);
  }

  SUBCASE("value-net variant tracks the time-0 net output") {
    MlpStack u = MlpStack::init(make_spec(1, 1), 5, 31);
    MlpStack z = MlpStack::init(make_spec(1, 1), 4, 32);
    zero_nets(u);
    zero_nets(z);
    u.params()[5][0] = 1.75;  // time-0 net bias: u(x) = 1.75 everywhere
    Tape t;
    auto ub = u.bind(t, 0);
    auto zb = z.bind(t, u.params().size());
    Rollout ro = euler_rollout_alg2(p, u, z, ub, zb, paths, t);
    for (std::size_t r = 0; r < 6; ++r)
      CHECK(t.value(ro.y_terminal).at(r, 0) == 1.75);
  }
}

TEST_CASE("one zero-drift unit-diffusion step reproduces the Brownian increment") {
  FbsdeProblem p = oracle_problem();
  const PathBatch paths = sample_paths(make_grid(p.T, 1), 8, 1, 123);
  MlpStack s = MlpStack::init(make_spec(2, 1), 1, 5, Interval{0.0, 1.0}, 1);
  Tape t;
  auto b = s.bind(t, 0);
  Rollout ro = euler_rollout_alg1(p, s, b, paths, t);
  const Tensor& xT = t.value(ro.x_terminal);
  for (std::size_t r = 0; r < 8; ++r)
    CHECK(xT.at(r, 0) == paths.increment(r, 0, 0));
}

TEST_CASE("terminal loss matches hand-computed values") {
  Tape t;
  Val y = t.constant(Tensor({2, 1}, {1.0, 3.0}));
  Val g = t.constant(Tensor({2, 1}, {0.0, 0.0}));
  CHECK(t.value(loss_terminal(t, y, g, 2))[0] == 2.5);  // (1 + 9) / 4
  CHECK(t.value(loss_terminal(t, y, y, 2))[0] == 0.0);

  // with a penalty accumulator: mean of (|mismatch|^2 + penalty) / 2
  Val pen = t.constant(Tensor({2, 1}, {4.0, 2.0}));
  CHECK(t.value(loss_alg2(t, y, g, pen, 2))[0] == 4.0);  // ((1+4) + (9+2)) / 4
  Val zero_pen = t.constant(Tensor({2, 1}));
  CHECK(t.value(loss_alg2(t, y, g, zero_pen, 2))[0] == 2.5);
}

TEST_CASE("trajectory-mismatch penalty charges exactly the squared gaps times the step") {
  // T = 1, N = 2; Y rolls flat at 2 while the value nets say (2, 1, 0):
  // gaps 1 at t_1 and 4 at t_2, so each sample owes 0.5 * (1 + 4) = 2.5.
  FbsdeProblem p = zero_problem();
  const PathBatch paths = sample_paths(make_grid(p.T, 2), 3, 1, 42);
  MlpStack u = MlpStack::init(make_spec(1, 1), 3, 31);
  MlpStack z = MlpStack::init(make_spec(1, 1), 2, 32);
  zero_nets(u);
  zero_nets(z);
  u.params()[5][0] = 2.0;
  u.params()[11][0] = 1.0;
  u.params()[17][0] = 0.0;

  Tape t;
  auto ub = u.bind(t, 0);
  auto zb = z.bind(t, u.params().size());
  Rollout ro = euler_rollout_alg2(p, u, z, ub, zb, paths, t);
  REQUIRE(ro.has_penalty);
  const Tensor& pen = t.value(ro.penalty);
  REQUIRE(pen.shape() == std::vector<std::size_t>{3, 1});
  for (std::size_t r = 0; r < 3; ++r) CHECK(pen.at(r, 0) == 2.5);

  // terminal mismatch |2 - 0|^2 = 4 on top: loss = (4 + 2.5) / 2
  Val gT = p.g(t, ro.x_terminal);
  CHECK(t.value(loss_alg2(t, ro.y_terminal, gT, ro.penalty, 3))[0] == 3.25);

  SUBCASE("penalty vanishes when the nets agree with the rolled value") {
    MlpStack u2 = MlpStack::init(make_spec(1, 1), 3, 31);
    zero_nets(u2);
    u2.params()[5][0] = 2.0;
    u2.params()[11][0] = 2.0;
    u2.params()[17][0] = 2.0;
    Tape t2;
    auto ub2 = u2.bind(t2, 0);
    auto zb2 = z.bind(t2, u2.params().size());
    Rollout ro2 = euler_rollout_alg2(p, u2, z, ub2, zb2, paths, t2);
    for (std::size_t r = 0; r < 3; ++r)
      CHECK(t2.value(ro2.penalty).at(r, 0) == 0.0);
  }
}

TEST_CASE("batched rollouts agree with per-sample rollouts") {
  const FbsdeProblem p = example3();
  const std::size_t M = 3, N = 3;
  const PathBatch paths = sample_paths(make_grid(p.T, N), M, p.d, 2024);

  auto close = [](double a, double b) {
    return std::abs(a - b) <= 1e-10 * std::max({1.0, std::abs(a), std::abs(b)});
  };

  SUBCASE("trainable-initial-value, feedback nets") {
    MlpStack s = MlpStack::init(make_spec(2, 1), N, 8, Interval{0.0, 1.0}, 1);
    Tape t;
    auto b = s.bind(t, 0);
    Rollout ro = euler_rollout_alg1(p, s, b, paths, t);
    Val gT = p.g(t, ro.x_terminal);
    const double batched = t.value(loss_terminal(t, ro.y_terminal, gT, M))[0];

    double acc = 0.0;
    for (std::size_t r = 0; r < M; ++r) {
      Tape tr;
      auto br = s.bind(tr, 0);
      Rollout rr = euler_rollout_alg1(p, s, br, single_path(paths, r), tr);
      Val gr = p.g(tr, rr.x_terminal);
      acc += tr.value(loss_terminal(tr, rr.y_terminal, gr, 1))[0];
    }
    CHECK(close(batched, acc / M));
  }

  SUBCASE("value-net variant with penalty") {
    MlpStack u = MlpStack::init(make_spec(1, 1), N + 1, 8);
    MlpStack z = MlpStack::init(make_spec(1, 1), N, 9);
    Tape t;
    auto ub = u.bind(t, 0);
    auto zb = z.bind(t, u.params().size());
    Rollout ro = euler_rollout_alg2(p, u, z, ub, zb, paths, t);
    Val gT = p.g(t, ro.x_terminal);
    const double batched =
        t.value(loss_alg2(t, ro.y_terminal, gT, ro.penalty, M))[0];

    double acc = 0.0;
    for (std::size_t r = 0; r < M; ++r) {
      Tape tr;
      auto ubr = u.bind(tr, 0);
      auto zbr = z.bind(tr, u.params().size());
      Rollout rr = euler_rollout_alg2(p, u, z, ubr, zbr, single_path(paths, r), tr);
      Val gr = p.g(tr, rr.x_terminal);
      acc += tr.value(loss_alg2(tr, rr.y_terminal, gr, rr.penalty, 1))[0];
    }
    CHECK(close(batched, acc / M));
  }

  SUBCASE("stored-trajectory variant") {
    MlpStack s = MlpStack::init(make_spec(3, 1), N, 8, Interval{0.0, 1.0}, 1);
    Tensor py({M, N, 1}), pz({M, N, 1});
    GaussianStream gs(77);
    for (double& v : py) v = gs.next();
    for (double& v : pz) v = gs.next();

    Tape t;
    auto b = s.bind(t, 0);
    Rollout ro = euler_rollout_alg3(p, s, b, paths, py, pz, t);
    Val gT = p.g(t, ro.x_terminal);
    const double batched = t.value(loss_terminal(t, ro.y_terminal, gT, M))[0];

    double acc = 0.0;
    for (std::size_t r = 0; r < M; ++r) {
      Tape tr;
      auto br = s.bind(tr, 0);
      Rollout rr = euler_rollout_alg3(p, s, br, single_path(paths, r),
                                      single_traj(py, r), single_traj(pz, r), tr);
      Val gr = p.g(tr, rr.x_terminal);
      acc += tr.value(loss_terminal(tr, rr.y_terminal, gr, 1))[0];
    }
    CHECK(close(batched, acc / M));
  }
}

TEST_CASE("stored-trajectory rollout keeps the state path independent of the current nets") {
  const FbsdeProblem p = example3();
  const std::size_t M = 4, N = 3;
  const PathBatch paths = sample_paths(make_grid(p.T, N), M, p.d, 3030);
  Tensor py({M, N, 1}), pz({M, N, 1});
  GaussianStream gs(55);
  for (double& v : py) v = gs.next();
  for (double& v : pz) v = gs.next();

  MlpStack a = MlpStack::init(make_spec(3, 1), N, 11, Interval{0.0, 1.0}, 1);
  MlpStack b = MlpStack::init(make_spec(3, 1), N, 12, Interval{0.0, 1.0}, 1);

  Tape ta, tb;
  auto ba = a.bind(ta, 0);
  auto bb = b.bind(tb, 0);
  Rollout ra = euler_rollout_alg3(p, a, ba, paths, py, pz, ta);
  Rollout rb = euler_rollout_alg3(p, b, bb, paths, py, pz, tb);

  const Tensor& xa = ta.value(ra.x_terminal);
  const Tensor& xb = tb.value(rb.x_terminal);
  bool y_differs = false;
  for (std::size_t r = 0; r < M; ++r) {
    CHECK(xa.at(r, 0) == xb.at(r, 0));
    if (ta.value(ra.y_terminal).at(r, 0) != tb.value(rb.y_terminal).at(r, 0))
      y_differs = true;
  }
  CHECK(y_differs);

  // the stored trajectory starts at the trainable initial value
  for (std::size_t r = 0; r < M; ++r)
    CHECK(ra.traj_y[r * N] == a.y0()[0]);
}

TEST_CASE("finite differences confirm the full training gradients") {
  GradCheckResult res = gradient_check();
  CHECK(res.pipeline_max_rel_err <= 1e-4);
  CHECK(res.isolated_max_rel_err <= 1e-5);
  CHECK(res.pass);
}

TEST_CASE("training is deterministic for a fixed seed") {
  TrainConfig cfg;
  cfg.algorithm = Algorithm::kZControl;
  cfg.N = 4;
  cfg.M = 8;
  cfg.max_steps = 30;
  cfg.seed = 5;

  const FbsdeProblem p = oracle_problem();
  RunReport a = train(p, cfg);
  RunReport b = train(p, cfg);
  REQUIRE(a.records.size() == 30);
  REQUIRE(b.records.size() == 30);
  CHECK(a.termination == Termination::kMaxSteps);
  CHECK(a.steps_run == 30);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(a.records[i].iter == i + 1);
    CHECK(a.records[i].loss == b.records[i].loss);
    CHECK(a.records[i].y0[0] == b.records[i].y0[0]);
    CHECK(std::isfinite(a.records[i].loss));
  }
  CHECK(a.final_y0[0] == b.final_y0[0]);
  REQUIRE(a.explicit_y0.has_value());
  CHECK(*a.explicit_y0 == 1.0);
  CHECK(a.relative_error.has_value());

  SUBCASE("a different seed moves the trajectory") {
    cfg.seed = 6;
    RunReport c = train(p, cfg);
    bool differs = false;
    for (std::size_t i = 0; i < 30; ++i)
      if (c.records[i].loss != a.records[i].loss) differs = true;
    CHECK(differs);
  }

  SUBCASE("per-iteration resampling moves the loss sequence") {
    cfg.resample_each_iter = true;
    RunReport c = train(p, cfg);
    bool differs = false;
    for (std::size_t i = 1; i < 30; ++i)
      if (c.records[i].loss != a.records[i].loss) differs = true;
    CHECK(differs);
  }
}

TEST_CASE("the trailing-variance rule stops the run the moment it holds") {
  TrainConfig cfg;
  cfg.algorithm = Algorithm::kZControl;
  cfg.N = 3;
  cfg.M = 4;
  cfg.max_steps = 50;
  cfg.seed = 2;
  cfg.stop_variance_threshold = 1e300;  // any window satisfies it
  cfg.stop_window = 5;

  RunReport rep = train(oracle_problem(), cfg);
  CHECK(rep.termination == Termination::kConverged);
  CHECK(rep.steps_run == 5);

  SUBCASE("a window longer than the run never triggers") {
    cfg.stop_window = 80;
    RunReport r2 = train(oracle_problem(), cfg);
    CHECK(r2.termination == Termination::kMaxSteps);
    CHECK(r2.steps_run == 50);
  }
}

TEST_CASE("training reports divergence instead of emitting garbage") {
  SUBCASE("loss above the guard") {
    FbsdeProblem p = zero_problem();
    p.f = [](Tape& t, double, Val, Val y, Val) {
      return t.add_scalar(t.scale(y, 0.0), 1.0e6);
    };
    TrainConfig cfg;
    cfg.N = 2;
    cfg.M = 4;
    cfg.max_steps = 10;
    RunReport rep = train(p, cfg);
    CHECK(rep.termination == Termination::kDiverged);
    CHECK(rep.steps_run == 0);
    CHECK(rep.divergence_message.find("divergence guard") != std::string::npos);
    CHECK(rep.divergence_message.find("iteration 1") != std::string::npos);
  }

  SUBCASE("non-finite value mid-rollout, with timestep attached") {
    FbsdeProblem p = zero_problem();
    p.x0 = Tensor({1}, {1.0});
    p.f = [](Tape& t, double, Val x, Val, Val) {
      return t.exp(t.scale(t.row_sum(x), 800.0));
    };
    TrainConfig cfg;
    cfg.N = 2;
    cfg.M = 4;
    cfg.max_steps = 10;
    RunReport rep = train(p, cfg);
    CHECK(rep.termination == Termination::kDiverged);
    CHECK(rep.divergence_message.find("generator") != std::string::npos);
    CHECK(rep.divergence_message.find("timestep 0") != std::string::npos);
    CHECK(rep.divergence_message.find("iteration 1") != std::string::npos);
  }
}

TEST_CASE("per-iteration resampling is rejected for the stored-trajectory variant") {
  TrainConfig cfg;
  cfg.algorithm = Algorithm::kPicard;
  cfg.resample_each_iter = true;
  CHECK_THROWS_WITH_AS(train(oracle_problem(), cfg),
                       doctest::Contains("resampling"), std::invalid_argument);
}

TEST_CASE("picard converges from random and from zero initial trajectories") {
  TrainConfig cfg;
  cfg.algorithm = Algorithm::kPicard;
  cfg.N = 10;
  cfg.M = 64;
  cfg.max_steps = 250;
  cfg.seed = 3;

  const FbsdeProblem p = example3();
  cfg.picard_init_zero = false;
  RunReport normal = train(p, cfg);
  cfg.picard_init_zero = true;
  RunReport zero = train(p, cfg);

  CHECK(normal.termination == Termination::kMaxSteps);
  CHECK(zero.termination == Termination::kMaxSteps);
  REQUIRE(normal.relative_error.has_value());
  REQUIRE(zero.relative_error.has_value());
  // both starts reach the same neighborhood of sin(1)
  CHECK(*normal.relative_error < 0.15);
  CHECK(*zero.relative_error < 0.15);
  // but the early iterations genuinely differ
  CHECK(normal.records[0].loss != zero.records[0].loss);
}

TEST_CASE("rollout contracts reject mismatched nets and trajectories") {
  const FbsdeProblem p = example3();
  const PathBatch paths = sample_paths(make_grid(p.T, 3), 2, 1, 1);

  SUBCASE("wrong input width") {
    MlpStack s = MlpStack::init(make_spec(5, 1), 3, 1, Interval{0.0, 1.0}, 1);
    Tape t;
    auto b = s.bind(t, 0);
    CHECK_THROWS_AS(euler_rollout_alg1(p, s, b, paths, t), std::invalid_argument);
  }
  SUBCASE("missing trainable initial value") {
    MlpStack s = MlpStack::init(make_spec(2, 1), 3, 1);
    Tape t;
    auto b = s.bind(t, 0);
    CHECK_THROWS_WITH_AS(euler_rollout_alg1(p, s, b, paths, t),
                         doctest::Contains("initial value"),
                         std::invalid_argument);
  }
  SUBCASE("net count differs from timestep count") {
    MlpStack s = MlpStack::init(make_spec(2, 1), 4, 1, Interval{0.0, 1.0}, 1);
    Tape t;
    auto b = s.bind(t, 0);
    CHECK_THROWS_AS(euler_rollout_alg1(p, s, b, paths, t), std::invalid_argument);
  }
  SUBCASE("stored trajectories of the wrong shape") {
    MlpStack s = MlpStack::init(make_spec(3, 1), 3, 1, Interval{0.0, 1.0}, 1);
    Tape t;
    auto b = s.bind(t, 0);
    Tensor py({2, 2, 1}), pz({2, 3, 1});
    CHECK_THROWS_WITH_AS(euler_rollout_alg3(p, s, b, paths, py, pz, t),
                         doctest::Contains("trajectories"),
                         std::invalid_argument);
  }
  SUBCASE("bindings from a different stack") {
    MlpStack s = MlpStack::init(make_spec(2, 1), 3, 1, Interval{0.0, 1.0}, 1);
    Tape t;
    CHECK_THROWS_WITH_AS(euler_rollout_alg1(p, s, {}, paths, t),
                         doctest::Contains("bind"), std::invalid_argument);
  }
}

TEST_CASE("substituted-solution residuals shrink as the grid refines") {
  SUBCASE("identity dynamics have zero residual at every resolution") {
    FbsdeProblem p = zero_problem();
    p.g = [](Tape& t, Val x) { return t.row_sum(x); };  // g(x) = x
    p.explicit_y = [](double, const Tensor& x) { return x; };
    p.explicit_z = [](double, const Tensor& x) {
      Tensor z({x.dim(0), 1});
      return z;
    };
    for (const ResidualRow& row : residual_check(p, {1, 2, 5}, 16, 3))
      CHECK(row.residual == 0.0);
  }

  SUBCASE("fully-coupled benchmark") {
    auto rows = residual_check(example3(), {25, 50, 100}, 128, 7777);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].residual > rows[1].residual);
    CHECK(rows[1].residual > rows[2].residual);
  }

  SUBCASE("closed-form sanity problem halves per refinement") {
    auto rows = residual_check(oracle_problem(), {10, 20, 40}, 256, 11);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].residual > rows[1].residual);
    CHECK(rows[1].residual > rows[2].residual);
  }

  SUBCASE("problems without explicit solutions are rejected") {
    FbsdeProblem p = zero_problem();
    CHECK_THROWS_AS(residual_check(p, {4}, 8, 1), std::invalid_argument);
  }
}

TEST_CASE("seed derivation separates streams and users") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
}
