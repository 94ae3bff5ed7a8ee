#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fbsde {

enum class Algorithm : int {
  kZControl = 1,  // trainable Y0, per-step Z feedback nets
  kYControl = 2,  // separate u and Z nets, trajectory-mismatch penalty
  kPicard = 3,    // decoupled forward pass fed by previous-iteration paths
};

const char* algorithm_name(Algorithm a);

enum class Termination { kConverged, kMaxSteps, kDiverged };

const char* termination_name(Termination t);

struct IterRecord {
  std::size_t iter = 0;  // 1-based
  double loss = 0.0;
  std::vector<double> y0;  // [m]
  double elapsed_s = 0.0;  // cumulative wall time since training start
};

/// Everything one training run produced, plus the config that produced it.
struct RunReport {
  // config echo
  std::string problem;
  Algorithm algorithm = Algorithm::kZControl;
  std::size_t n = 0, m = 0, d = 0;
  double T = 0.0;
  std::size_t N = 0, M = 0;
  double lr = 0.0;
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;
  std::optional<double> stop_variance_threshold;
  std::size_t stop_window = 0;
  bool resample_each_iter = false;

  std::vector<IterRecord> records;
  std::vector<double> final_y0;  // [m]
  std::optional<double> explicit_y0;
  std::optional<double> relative_error;  // |final - explicit| / |explicit|
  Termination termination = Termination::kMaxSteps;
  std::size_t steps_run = 0;
  double wall_seconds = 0.0;
  std::string divergence_message;
};

struct SummaryRow {
  std::size_t step = 0;
  double mean_y0 = 0.0;
  double var_y0 = 0.0;  // unbiased, (R-1) denominator
  std::optional<double> rel_err;  // |mean - explicit| / |explicit|
  double mean_elapsed_s = 0.0;
};

struct MultiRunSummary {
  std::size_t runs = 0;
  std::vector<SummaryRow> rows;
  double mean_steps = 0.0;
  double mean_wall_seconds = 0.0;
  double mean_final_y0 = 0.0;
  double var_final_y0 = 0.0;
  std::optional<double> final_rel_err;
};

/// Cross-run statistics at the given checkpoint steps. Reports must share
/// their config apart from the seed; aggregation is order-independent.
MultiRunSummary summarize(const std::vector<RunReport>& reports,
                          const std::vector<std::size_t>& checkpoints);

/// Per-iteration history as CSV (header + one row per iteration, 17
/// significant digits so values survive a round trip exactly).
void emit_history_csv(const RunReport& report, const std::string& path);

/// Re-read a history CSV (used to verify lossless emission).
std::vector<IterRecord> read_history_csv(const std::string& path);

/// Companion run-metadata file: config, outcome, timings, as structured text.
void emit_metadata(const RunReport& report, const std::string& path);

void emit_summary_csv(const MultiRunSummary& summary, const std::string& path);

}  // namespace fbsde
