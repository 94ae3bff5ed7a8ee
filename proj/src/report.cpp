#include "fbsde/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fbsde {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// std::stod rejects denormals with out_of_range; strtod just returns them.
double parse_double(const std::string& s) {
  return std::strtod(s.c_str(), nullptr);
}

std::size_t y0_width(const RunReport& r) {
  if (!r.records.empty()) return r.records.front().y0.size();
  return r.final_y0.empty() ? 1 : r.final_y0.size();
}

void require_matching_configs(const std::vector<RunReport>& reports) {
  const RunReport& a = reports.front();
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const RunReport& b = reports[i];
    const bool same = a.problem == b.problem && a.algorithm == b.algorithm &&
                      a.n == b.n && a.m == b.m && a.d == b.d && a.T == b.T &&
                      a.N == b.N && a.M == b.M && a.lr == b.lr &&
                      a.max_steps == b.max_steps &&
                      a.stop_variance_threshold == b.stop_variance_threshold &&
                      a.stop_window == b.stop_window &&
                      a.resample_each_iter == b.resample_each_iter;
    if (!same)
      throw std::invalid_argument(
          "summarize: reports disagree on configuration (run 0 vs run " +
          std::to_string(i) + "); only the seed may differ");
  }
}

// mean / unbiased variance of the values produced by `pick`, accumulated in
// the given (seed-sorted) order so the result is independent of caller order.
// Welford's update keeps the variance of identical inputs at exactly zero.
template <typename Pick>
std::pair<double, double> mean_var(const std::vector<const RunReport*>& runs,
                                   Pick pick) {
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (const RunReport* r : runs) {
    const double x = pick(*r);
    ++k;
    const double delta = x - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (x - mean);
  }
  return {mean, k < 2 ? 0.0 : m2 / static_cast<double>(k - 1)};
}

}  // namespace

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kZControl: return "z-control";
    case Algorithm::kYControl: return "y-penalty";
    case Algorithm::kPicard: return "picard";
  }
  return "unknown";
}

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::kConverged: return "converged";
    case Termination::kMaxSteps: return "max_steps";
    case Termination::kDiverged: return "diverged";
  }
  return "unknown";
}

MultiRunSummary summarize(const std::vector<RunReport>& reports,
                          const std::vector<std::size_t>& checkpoints) {
  if (reports.empty()) throw std::invalid_argument("summarize: no reports");
  require_matching_configs(reports);

  std::vector<const RunReport*> runs;
  runs.reserve(reports.size());
  for (const RunReport& r : reports) runs.push_back(&r);
  std::stable_sort(runs.begin(), runs.end(),
                   [](const RunReport* a, const RunReport* b) {
                     return a->seed < b->seed;
                   });

  for (const RunReport* r : runs)
    for (std::size_t c : checkpoints)
      if (c == 0 || c > r->records.size())
        throw std::invalid_argument(
            "summarize: checkpoint " + std::to_string(c) +
            " is outside the " + std::to_string(r->records.size()) +
            "-iteration history of seed " + std::to_string(r->seed));

  MultiRunSummary s;
  s.runs = reports.size();
  const std::optional<double> ey0 = reports.front().explicit_y0;

  for (std::size_t c : checkpoints) {
    auto [mean, var] = mean_var(runs, [c](const RunReport& r) {
      return r.records[c - 1].y0.empty() ? 0.0 : r.records[c - 1].y0.front();
    });
    SummaryRow row;
    row.step = c;
    row.mean_y0 = mean;
    row.var_y0 = var;
    if (ey0 && *ey0 != 0.0) row.rel_err = std::abs(mean - *ey0) / std::abs(*ey0);
    row.mean_elapsed_s =
        mean_var(runs, [c](const RunReport& r) {
          return r.records[c - 1].elapsed_s;
        }).first;
    s.rows.push_back(row);
  }

  s.mean_steps = mean_var(runs, [](const RunReport& r) {
                   return static_cast<double>(r.steps_run);
                 }).first;
  s.mean_wall_seconds =
      mean_var(runs, [](const RunReport& r) { return r.wall_seconds; }).first;
  auto [fm, fv] = mean_var(runs, [](const RunReport& r) {
    return r.final_y0.empty() ? 0.0 : r.final_y0.front();
  });
  s.mean_final_y0 = fm;
  s.var_final_y0 = fv;
  if (ey0 && *ey0 != 0.0)
    s.final_rel_err = std::abs(fm - *ey0) / std::abs(*ey0);
  return s;
}

void emit_history_csv(const RunReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_history_csv: cannot open " + path);

  const std::size_t w = y0_width(report);
  out << "iter,loss";
  if (w == 1) {
    out << ",y0";
  } else {
    for (std::size_t j = 1; j <= w; ++j) out << ",y0_" << j;
  }
  out << ",elapsed_s\n";

  for (const IterRecord& rec : report.records) {
    out << rec.iter << ',' << fmt17(rec.loss);
    for (double v : rec.y0) out << ',' << fmt17(v);
    out << ',' << fmt17(rec.elapsed_s) << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("emit_history_csv: write failed for " + path);
}

std::vector<IterRecord> read_history_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_history_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("read_history_csv: " + path + " is empty");

  std::size_t columns = 1;
  for (char c : line)
    if (c == ',') ++columns;
  if (columns < 4)
    throw std::runtime_error("read_history_csv: unrecognized header in " + path);
  const std::size_t w = columns - 3;

  std::vector<IterRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    IterRecord rec;
    std::getline(ss, field, ',');
    rec.iter = std::strtoull(field.c_str(), nullptr, 10);
    std::getline(ss, field, ',');
    rec.loss = parse_double(field);
    rec.y0.resize(w);
    for (std::size_t j = 0; j < w; ++j) {
      std::getline(ss, field, ',');
      rec.y0[j] = parse_double(field);
    }
    std::getline(ss, field, ',');
    rec.elapsed_s = parse_double(field);
    records.push_back(std::move(rec));
  }
  return records;
}

void emit_metadata(const RunReport& report, const std::string& path) {
  nlohmann::json j;
  j["problem"] = report.problem;
  j["algorithm"] = static_cast<int>(report.algorithm);
  j["algorithm_name"] = algorithm_name(report.algorithm);
  j["n"] = report.n;
  j["m"] = report.m;
  j["d"] = report.d;
  j["T"] = report.T;
  j["N"] = report.N;
  j["M"] = report.M;
  j["lr"] = report.lr;
  j["max_steps"] = report.max_steps;
  j["seed"] = report.seed;
  if (report.stop_variance_threshold)
    j["stop_variance_threshold"] = *report.stop_variance_threshold;
  else
    j["stop_variance_threshold"] = nullptr;
  j["stop_window"] = report.stop_window;
  j["resample_each_iter"] = report.resample_each_iter;
  j["termination"] = termination_name(report.termination);
  j["steps_run"] = report.steps_run;
  j["wall_seconds"] = report.wall_seconds;
  j["final_y0"] = report.final_y0;
  if (report.explicit_y0)
    j["explicit_y0"] = *report.explicit_y0;
  else
    j["explicit_y0"] = nullptr;
  if (report.relative_error)
    j["relative_error"] = *report.relative_error;
  else
    j["relative_error"] = nullptr;
  if (!report.divergence_message.empty())
    j["divergence_message"] = report.divergence_message;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_metadata: cannot open " + path);
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("emit_metadata: write failed for " + path);
}

void emit_summary_csv(const MultiRunSummary& summary, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_summary_csv: cannot open " + path);
  out << "step,mean_y0,var_y0,rel_err,mean_elapsed_s\n";
  for (const SummaryRow& row : summary.rows) {
    out << row.step << ',' << fmt17(row.mean_y0) << ',' << fmt17(row.var_y0)
        << ',';
    if (row.rel_err) out << fmt17(*row.rel_err);
    out << ',' << fmt17(row.mean_elapsed_s) << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("emit_summary_csv: write failed for " + path);
}

}  // namespace fbsde
