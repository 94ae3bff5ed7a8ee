#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbsde/report.hpp"

using namespace fbsde;

namespace {

RunReport make_report(std::uint64_t seed, const std::vector<double>& y0_by_step) {
  RunReport r;
  r.problem = "example1";
  r.algorithm = Algorithm::kZControl;
  r.n = r.m = r.d = 1;
  r.T = 0.5;
  r.N = 25;
  r.M = 256;
  r.lr = 5e-3;
  r.max_steps = y0_by_step.size();
  r.seed = seed;
  r.explicit_y0 = 0.5;
  for (std::size_t i = 0; i < y0_by_step.size(); ++i)
    r.records.push_back(IterRecord{i + 1, 1.0 / static_cast<double>(i + 1),
                                   {y0_by_step[i]}, 0.1 * static_cast<double>(i + 1)});
  r.final_y0 = {y0_by_step.back()};
  r.steps_run = y0_by_step.size();
  r.wall_seconds = 0.1 * static_cast<double>(y0_by_step.size());
  return r;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/fbsde_report_test_") + name;
}

std::size_t line_count(const std::string& path) {
  std::ifstream in(path);
  std::size_t lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  return lines;
}

}  // namespace

TEST_CASE("cross-run statistics match hand-computed values") {
  std::vector<RunReport> reports{make_report(1, {0.3, 0.4}), make_report(2, {0.1, 0.6})};
  MultiRunSummary s = summarize(reports, {1, 2});
  REQUIRE(s.rows.size() == 2);
  CHECK(s.runs == 2);
  CHECK(s.rows[0].step == 1);
  CHECK(s.rows[1].step == 2);
  CHECK(s.rows[1].mean_y0 == 0.5);
  CHECK(s.rows[1].var_y0 == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(s.mean_final_y0 == 0.5);
  REQUIRE(s.rows[1].rel_err.has_value());
  CHECK(*s.rows[1].rel_err == doctest::Approx(0.0).epsilon(1e-12));
  REQUIRE(s.final_rel_err.has_value());
  CHECK(*s.final_rel_err == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("identical runs have zero variance at every checkpoint") {
  std::vector<RunReport> reports{make_report(1, {0.3, 0.4, 0.45}),
                                 make_report(1, {0.3, 0.4, 0.45}),
                                 make_report(1, {0.3, 0.4, 0.45})};
  MultiRunSummary s = summarize(reports, {1, 2, 3});
  for (const SummaryRow& row : s.rows) CHECK(row.var_y0 == 0.0);
  CHECK(s.var_final_y0 == 0.0);
}

TEST_CASE("summaries are independent of run order") {
  RunReport a = make_report(11, {0.31, 0.42});
  RunReport b = make_report(7, {0.28, 0.55});
  RunReport c = make_report(23, {0.36, 0.47});

  MultiRunSummary s1 = summarize({a, b, c}, {1, 2});
  MultiRunSummary s2 = summarize({c, a, b}, {1, 2});
  MultiRunSummary s3 = summarize({b, c, a}, {1, 2});
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(s1.rows[i].mean_y0 == s2.rows[i].mean_y0);
    CHECK(s1.rows[i].mean_y0 == s3.rows[i].mean_y0);
    CHECK(s1.rows[i].var_y0 == s2.rows[i].var_y0);
    CHECK(s1.rows[i].var_y0 == s3.rows[i].var_y0);
  }
  CHECK(s1.mean_final_y0 == s2.mean_final_y0);
  CHECK(s1.var_final_y0 == s3.var_final_y0);
}

TEST_CASE("summarize validates its inputs") {
  SUBCASE("mismatched configs") {
    RunReport a = make_report(1, {0.3, 0.4});
    RunReport b = make_report(2, {0.3, 0.4});
    b.M = 128;
    CHECK_THROWS_WITH_AS(summarize({a, b}, {1}), doctest::Contains("seed"),
                         std::invalid_argument);
  }
  SUBCASE("checkpoint beyond a run's history") {
    RunReport a = make_report(1, {0.3, 0.4});
    RunReport b = make_report(2, {0.3});
    b.max_steps = 2;  // same config, shorter history
    CHECK_THROWS_WITH_AS(summarize({a, b}, {2}), doctest::Contains("checkpoint"),
                         std::invalid_argument);
  }
  SUBCASE("no reports") {
    CHECK_THROWS_AS(summarize({}, {1}), std::invalid_argument);
  }
}

TEST_CASE("history CSV round-trips bit-for-bit") {
  RunReport r = make_report(9, {0.1, 0.2});
  // awkward values: representable but not short
  r.records[0].loss = 1.0 / 3.0;
  r.records[0].y0[0] = 0.1 + 0.2;
  r.records[1].loss = 3.141592653589793;
  r.records[1].y0[0] = 4.9406564584124654e-324;  // smallest denormal
  r.records[1].elapsed_s = 1e-17;

  const std::string path = temp_path("roundtrip.csv");
  emit_history_csv(r, path);
  auto back = read_history_csv(path);
  REQUIRE(back.size() == r.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].iter == r.records[i].iter);
    CHECK(back[i].loss == r.records[i].loss);
    REQUIRE(back[i].y0.size() == 1);
    CHECK(back[i].y0[0] == r.records[i].y0[0]);
    CHECK(back[i].elapsed_s == r.records[i].elapsed_s);
  }
  std::remove(path.c_str());
}

TEST_CASE("history CSV has a header plus one line per iteration") {
  const std::string path = temp_path("lines.csv");

  SUBCASE("empty run emits only the header") {
    RunReport r = make_report(1, {0.5});
    r.records.clear();
    emit_history_csv(r, path);
    CHECK(line_count(path) == 1);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "iter,loss,y0,elapsed_s");
  }

  SUBCASE("3000 iterations emit 3001 lines") {
    std::vector<double> y0(3000, 0.5);
    emit_history_csv(make_report(1, y0), path);
    CHECK(line_count(path) == 3001);
  }

  SUBCASE("vector-valued estimates get one column per component") {
    RunReport r = make_report(1, {0.5});
    r.records[0].y0 = {0.5, -0.25, 1.5};
    r.m = 3;
    emit_history_csv(r, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "iter,loss,y0_1,y0_2,y0_3,elapsed_s");
    auto back = read_history_csv(path);
    REQUIRE(back.size() == 1);
    REQUIRE(back[0].y0.size() == 3);
    CHECK(back[0].y0[1] == -0.25);
  }
  std::remove(path.c_str());
}

TEST_CASE("emission failures carry the offending path") {
  RunReport r = make_report(1, {0.5});
  CHECK_THROWS_WITH_AS(emit_history_csv(r, "/nonexistent-dir/x.csv"),
                       doctest::Contains("/nonexistent-dir/x.csv"),
                       std::runtime_error);
  CHECK_THROWS_AS(read_history_csv("/nonexistent-dir/x.csv"), std::runtime_error);
}

TEST_CASE("metadata sidecar records config and outcome as JSON") {
  RunReport r = make_report(42, {0.5, 0.51});
  r.termination = Termination::kConverged;
  r.relative_error = 0.02;
  const std::string path = temp_path("meta.json");
  emit_metadata(r, path);

  std::ifstream in(path);
  nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j["problem"] == "example1");
  CHECK(j["seed"] == 42);
  CHECK(j["M"] == 256);
  CHECK(j["termination"] == "converged");
  CHECK(j["relative_error"] == 0.02);
  CHECK(j["explicit_y0"] == 0.5);
  CHECK(j["stop_variance_threshold"].is_null());
  std::remove(path.c_str());
}

TEST_CASE("summary CSV lists one row per checkpoint") {
  std::vector<RunReport> reports{make_report(1, {0.3, 0.4}), make_report(2, {0.1, 0.6})};
  MultiRunSummary s = summarize(reports, {1, 2});
  const std::string path = temp_path("summary.csv");
  emit_summary_csv(s, path);
  CHECK(line_count(path) == 3);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,mean_y0,var_y0,rel_err,mean_elapsed_s");
  std::remove(path.c_str());
}

TEST_CASE("algorithm and termination names are stable strings") {
  CHECK(std::string(algorithm_name(Algorithm::kZControl)) == "z-control");
  CHECK(std::string(algorithm_name(Algorithm::kYControl)) == "y-penalty");
  CHECK(std::string(algorithm_name(Algorithm::kPicard)) == "picard");
  CHECK(std::string(termination_name(Termination::kConverged)) == "converged");
  CHECK(std::string(termination_name(Termination::kMaxSteps)) == "max_steps");
  CHECK(std::string(termination_name(Termination::kDiverged)) == "diverged");
}
