#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fbsde/problem.hpp"
#include "fbsde/report.hpp"
#include "fbsde/solver.hpp"

namespace {

// Exit codes: 0 success, 1 usage/validation, 2 divergence or failed check,
// 3 I/O failure.
constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kDiverged = 2;
constexpr int kIoError = 3;

struct Options {
  std::string problem;
  int algorithm = 1;
  std::size_t d = 0;
  double T = 0.0;
  double x0 = 0.0;
  CLI::Option* d_opt = nullptr;
  CLI::Option* T_opt = nullptr;
  CLI::Option* x0_opt = nullptr;

  std::size_t steps = 5000;
  std::size_t paths = 256;
  double lr = 5e-3;
  std::size_t N = 25;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  double stop_var = 0.0;
  CLI::Option* stop_var_opt = nullptr;
  std::size_t stop_window = 1000;
  bool resample = false;
  bool picard_zero_init = false;
  bool z_head_zero = false;
  bool sgd = false;
  std::vector<double> y0_range{0.0, 1.0};
  std::string checkpoint;
  std::string from_checkpoint;

  std::size_t repeat = 10;
  std::vector<std::uint64_t> seeds;
  CLI::Option* seeds_opt = nullptr;
  std::vector<std::size_t> summary_steps;
  CLI::Option* summary_steps_opt = nullptr;

  std::vector<std::size_t> grids{25, 50, 100};
};

void add_problem_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--problem", o.problem, "Problem name (see `run --help`)")
      ->required();
  o.d_opt = cmd->add_option("--d", o.d, "State/Brownian dimension override");
  o.T_opt = cmd->add_option("--T", o.T, "Horizon override");
  o.x0_opt = cmd->add_option("--x0", o.x0, "Initial state override (same value in every coordinate)");
}

void add_train_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--algorithm", o.algorithm, "Training variant: 1 Z-control, 2 Y-penalty, 3 Picard")
      ->check(CLI::IsMember({1, 2, 3}));
  cmd->add_option("--steps", o.steps, "Iteration cap")->check(CLI::PositiveNumber);
  cmd->add_option("--paths", o.paths, "Brownian sample-batch size M")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--lr", o.lr, "Learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--N", o.N, "Timesteps on [0, T]")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--out", o.out_dir, "Output directory (default $FBSDE_OUT_DIR or .)")
      ->envname("FBSDE_OUT_DIR");
  o.stop_var_opt = cmd->add_option(
      "--stop-var", o.stop_var,
      "Stop when the trailing-window variance of Y0 falls below this");
  cmd->add_option("--stop-window", o.stop_window, "Window for the stopping rule")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--resample", o.resample, "Fresh Brownian batch every iteration");
  cmd->add_flag("--picard-zero-init", o.picard_zero_init,
                "Start the Picard recursion from zero (y, z) paths instead of standard normals");
  cmd->add_flag("--z-head-zero", o.z_head_zero,
                "Zero the Z-networks' output layers at init (control starts at exactly zero)");
  cmd->add_flag("--sgd", o.sgd, "Plain gradient steps (theta -= lr * grad) instead of Adam");
  cmd->add_option("--y0-range", o.y0_range, "Uniform init interval for the trainable Y0")
      ->expected(2);
  cmd->add_option("--checkpoint", o.checkpoint, "Write trained nets here");
  cmd->add_option("--from-checkpoint", o.from_checkpoint, "Warm-start nets from this file");
}

fbsde::FbsdeProblem make_problem(const Options& o) {
  std::optional<std::size_t> d;
  std::optional<double> T, x0;
  if (o.d_opt && o.d_opt->count()) d = o.d;
  if (o.T_opt && o.T_opt->count()) T = o.T;
  if (o.x0_opt && o.x0_opt->count()) x0 = o.x0;
  return fbsde::problem_by_name(o.problem, d, T, x0);
}

fbsde::TrainConfig make_train_config(const Options& o, std::uint64_t seed) {
  fbsde::TrainConfig cfg;
  cfg.algorithm = static_cast<fbsde::Algorithm>(o.algorithm);
  cfg.N = o.N;
  cfg.M = o.paths;
  cfg.lr = o.lr;
  cfg.max_steps = o.steps;
  cfg.seed = seed;
  if (o.stop_var_opt && o.stop_var_opt->count())
    cfg.stop_variance_threshold = o.stop_var;
  cfg.stop_window = o.stop_window;
  cfg.y0_init_range = fbsde::Interval{o.y0_range[0], o.y0_range[1]};
  cfg.resample_each_iter = o.resample;
  cfg.picard_init_zero = o.picard_zero_init;
  cfg.z_head_zero_init = o.z_head_zero;
  cfg.plain_sgd = o.sgd;
  cfg.checkpoint_in = o.from_checkpoint;
  return cfg;
}

std::string run_basename(const Options& o, std::uint64_t seed) {
  return o.problem + "_alg" + std::to_string(o.algorithm) + "_seed" +
         std::to_string(seed);
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw std::runtime_error("cannot create output directory " + dir + ": " +
                             ec.message());
}

void print_report(const fbsde::RunReport& rep) {
  std::printf("problem %s (n=%zu, m=%zu, d=%zu, T=%g), algorithm %s\n",
              rep.problem.c_str(), rep.n, rep.m, rep.d, rep.T,
              fbsde::algorithm_name(rep.algorithm));
  std::printf("final Y0 =");
  for (double v : rep.final_y0) std::printf(" %.10g", v);
  std::printf("\n");
  if (rep.explicit_y0) {
    std::printf("explicit Y0 = %.10g\n", *rep.explicit_y0);
    if (rep.relative_error)
      std::printf("relative error = %.4g\n", *rep.relative_error);
  }
  std::printf("termination: %s after %zu iterations (%.1f s)\n",
              fbsde::termination_name(rep.termination), rep.steps_run,
              rep.wall_seconds);
  if (!rep.divergence_message.empty())
    std::printf("  %s\n", rep.divergence_message.c_str());
}

int cmd_run(const Options& o) {
  const fbsde::FbsdeProblem problem = make_problem(o);
  fbsde::TrainConfig cfg = make_train_config(o, o.seed);
  ensure_out_dir(o.out_dir);
  const std::string base = o.out_dir + "/" + run_basename(o, o.seed);
  if (!o.checkpoint.empty()) cfg.checkpoint_out = o.checkpoint;

  const fbsde::RunReport rep = fbsde::train(problem, cfg);
  fbsde::emit_history_csv(rep, base + "_history.csv");
  fbsde::emit_metadata(rep, base + "_meta.json");
  print_report(rep);
  std::printf("wrote %s_history.csv and %s_meta.json\n", base.c_str(), base.c_str());
  return rep.termination == fbsde::Termination::kDiverged ? kDiverged : kOk;
}

int cmd_repeat(const Options& o) {
  std::vector<std::uint64_t> seeds;
  if (o.seeds_opt && o.seeds_opt->count()) {
    seeds = o.seeds;
  } else {
    for (std::size_t i = 0; i < o.repeat; ++i)
      seeds.push_back(o.seed + static_cast<std::uint64_t>(i));
  }
  if (seeds.size() < 2)
    throw std::invalid_argument("repeat: need at least two runs");
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t j = i + 1; j < seeds.size(); ++j)
      if (seeds[i] == seeds[j])
        throw std::invalid_argument("repeat: seeds must differ (" +
                                    std::to_string(seeds[i]) + " repeats)");

  const fbsde::FbsdeProblem problem = make_problem(o);
  ensure_out_dir(o.out_dir);

  std::vector<fbsde::RunReport> reports;
  bool any_diverged = false;
  for (std::uint64_t seed : seeds) {
    fbsde::TrainConfig cfg = make_train_config(o, seed);
    fbsde::RunReport rep = fbsde::train(problem, cfg);
    const std::string base = o.out_dir + "/" + run_basename(o, seed);
    fbsde::emit_history_csv(rep, base + "_history.csv");
    fbsde::emit_metadata(rep, base + "_meta.json");
    std::printf("seed %llu: Y0 =", static_cast<unsigned long long>(seed));
    for (double v : rep.final_y0) std::printf(" %.10g", v);
    std::printf("  [%s after %zu iterations]\n",
                fbsde::termination_name(rep.termination), rep.steps_run);
    if (rep.termination == fbsde::Termination::kDiverged) {
      any_diverged = true;
      std::fprintf(stderr, "seed %llu diverged: %s\n",
                   static_cast<unsigned long long>(seed),
                   rep.divergence_message.c_str());
    }
    reports.push_back(std::move(rep));
  }

  std::size_t shortest = reports.front().records.size();
  for (const fbsde::RunReport& r : reports)
    shortest = std::min(shortest, r.records.size());

  std::vector<std::size_t> steps;
  if (o.summary_steps_opt && o.summary_steps_opt->count()) {
    for (std::size_t s : o.summary_steps)    // clamp to what every run has
      if (s >= 1 && s <= shortest) steps.push_back(s);
  } else if (shortest > 0) {
    for (int q = 1; q <= 5; ++q) {
      const std::size_t s = shortest * static_cast<std::size_t>(q) / 5;
      if (s >= 1 && (steps.empty() || steps.back() != s)) steps.push_back(s);
    }
  }

  const fbsde::MultiRunSummary summary = fbsde::summarize(reports, steps);
  const std::string summary_path = o.out_dir + "/" + o.problem + "_alg" +
                                   std::to_string(o.algorithm) + "_summary.csv";
  fbsde::emit_summary_csv(summary, summary_path);

  std::printf("\n%zu runs; mean steps %.1f, mean time %.1f s\n", summary.runs,
              summary.mean_steps, summary.mean_wall_seconds);
  std::printf("%-8s %-22s %-14s %-10s\n", "step", "mean Y0", "var Y0", "rel err");
  for (const fbsde::SummaryRow& row : summary.rows) {
    std::printf("%-8zu %-22.10g %-14.4g", row.step, row.mean_y0, row.var_y0);
    if (row.rel_err) std::printf(" %-10.4g", *row.rel_err);
    std::printf("\n");
  }
  std::printf("final: mean Y0 = %.10g, variance = %.4g", summary.mean_final_y0,
              summary.var_final_y0);
  if (summary.final_rel_err)
    std::printf(", relative error = %.4g", *summary.final_rel_err);
  std::printf("\nwrote %s\n", summary_path.c_str());
  return any_diverged ? kDiverged : kOk;
}

int cmd_residual_check(const Options& o) {
  const fbsde::FbsdeProblem problem = make_problem(o);
  const auto rows = fbsde::residual_check(problem, o.grids, o.paths, o.seed);
  std::printf("%-8s %s\n", "N", "E |Y_T - g(X_T)|^2 with explicit (y, z)");
  for (const fbsde::ResidualRow& row : rows)
    std::printf("%-8zu %.6e\n", row.N, row.residual);

  ensure_out_dir(o.out_dir);
  const std::string path = o.out_dir + "/" + o.problem + "_residuals.csv";
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path);
  std::fprintf(f, "N,residual\n");
  for (const fbsde::ResidualRow& row : rows)
    std::fprintf(f, "%zu,%.17g\n", row.N, row.residual);
  std::fclose(f);
  std::printf("wrote %s\n", path.c_str());
  return kOk;
}

int cmd_gradcheck(const Options& o) {
  const fbsde::GradCheckResult res = fbsde::gradient_check(o.seed);
  std::printf("pipeline max relative error: %.3e (tolerance 1e-4)\n",
              res.pipeline_max_rel_err);
  std::printf("isolated max relative error: %.3e (tolerance 1e-5)\n",
              res.isolated_max_rel_err);
  std::printf("%s\n", res.pass ? "PASS" : "FAIL");
  return res.pass ? kOk : kDiverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep-learning solver for coupled forward-backward SDE systems"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read option defaults from an INI/TOML file");

  Options ro, po, co, go;

  CLI::App* run = app.add_subcommand("run", "Train once and write history + metadata");
  add_problem_options(run, ro);
  add_train_options(run, ro);

  CLI::App* rep = app.add_subcommand(
      "repeat", "Train R times on derived seeds and write a cross-run summary");
  add_problem_options(rep, po);
  add_train_options(rep, po);
  rep->add_option("--repeat", po.repeat, "Run count R")->check(CLI::Range(2, 1000000));
  po.seeds_opt = rep->add_option("--seeds", po.seeds,
                                 "Explicit seed list (overrides --seed/--repeat)");
  po.summary_steps_opt = rep->add_option(
      "--checkpoints", po.summary_steps,
      "Iteration counts for the summary table (default: five even slices)");

  CLI::App* resid = app.add_subcommand(
      "residual-check",
      "Euler residual of the explicit solution on refining grids");
  add_problem_options(resid, co);
  resid->add_option("--grids", co.grids, "Timestep counts to test");
  resid->add_option("--paths", co.paths, "Brownian sample-batch size M")
      ->check(CLI::PositiveNumber);
  resid->add_option("--seed", co.seed, "Master seed");
  resid->add_option("--out", co.out_dir, "Output directory (default $FBSDE_OUT_DIR or .)")
      ->envname("FBSDE_OUT_DIR");
  co.seed = 7777;

  CLI::App* grad = app.add_subcommand(
      "gradcheck", "Finite-difference audit of all training gradients");
  grad->add_option("--seed", go.seed, "Audit seed");
  go.seed = 424242;

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (run->parsed()) return cmd_run(ro);
    if (rep->parsed()) return cmd_repeat(po);
    if (resid->parsed()) return cmd_residual_check(co);
    if (grad->parsed()) return cmd_gradcheck(go);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIoError;
  }
  return kUsage;
}
