#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "ddclf/scenario.hpp"

using namespace ddclf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ddclf_scn_" + std::to_string(getpid())) / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

Scenario parse(const std::string& text) {
  std::istringstream is(text);
  return parse_scenario(is);
}

Scenario small_ring(const std::string& dir) {
  Scenario s = preset_scenario("spacecraft-ring");
  s.M = 4;
  s.kappa = {0.1};
  s.pi = {0.001};
  s.gain_aware = false;
  s.samples = 500;
  s.closed_loop_runs = 2;
  s.horizon = 5.0;
  s.out_dir = scratch(dir).string();
  return s;
}

std::vector<std::string> summary_artifacts(const fs::path& dir) {
  std::ifstream is(dir / "summary.txt");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("artifact ", 0) == 0) out.push_back(line.substr(9));
  }
  return out;
}

/// Numeric CSV with a header and a constant column count.
bool csv_parses(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  if (!std::getline(is, line)) return false;
  const auto cols = std::count(line.begin(), line.end(), ',') + 1;
  long rows = 0;
  while (std::getline(is, line)) {
    if (std::count(line.begin(), line.end(), ',') + 1 != cols) return false;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      // strtod, not stod: decayed states can be subnormal.
      char* end = nullptr;
      std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') return false;
    }
    ++rows;
  }
  return rows > 0;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto s = parse(
      "[system]\nbenchmark = academic\nM = 3\ntopology = line\n"
      "[collect]\nT = 12\nseed = 99\nexcitation = multisine\n"
      "[synth]\nkappa = 0.1 0.2 0.3\npi = 0.5\ngain_aware = yes\n"
      "[verify]\nbox = 7.5\n[output]\ndir = here\nworkers = 2\n");
  CHECK(s.benchmark == "academic");
  CHECK(s.M == 3);
  CHECK(s.T == 12);
  CHECK(s.seed == 99u);
  CHECK(s.excitation == ExcitationKind::multisine);
  CHECK(s.kappa_of(2) == 0.3);
  CHECK(s.pi_of(2) == 0.5);
  CHECK(s.gain_aware);
  CHECK(s.box == 7.5);
  CHECK(s.out_dir == "here");
  CHECK(s.workers == 2);

  CHECK_THROWS_AS(parse("[collect]\nTT = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("[colect]\nT = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("[collect]\nT = three\n"), ConfigError);
  CHECK_THROWS_AS(parse("[collect]\ntau = -0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[system]\nM = 3\n[synth]\nkappa = 0.1 0.2\n"), ConfigError);
  CHECK_THROWS_AS(parse("[synth]\nkappa = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[system]\nbenchmark = pendulum\n"), ConfigError);
  CHECK_THROWS_AS(parse("[system]\nbenchmark = custom\n"), ConfigError);
  CHECK_THROWS_AS(parse("[system]\nM = 2\ntopology = custom\nedges = 1>3\n"), ConfigError);
  CHECK_THROWS_AS(parse("[compose]\nmu_margin = 1\n"), ConfigError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/ddclf.ini"), ConfigError);
}

TEST_CASE("scenario text round-trips") {
  for (const auto& name : preset_names()) {
    for (bool paper : {false, true}) {
      const Scenario s = preset_scenario(name, paper);
      std::stringstream ss;
      write_scenario(s, ss);
      const Scenario back = parse_scenario(ss);
      std::stringstream again;
      write_scenario(back, again);
      CHECK(again.str() == ss.str());
      CHECK(back.pi == s.pi);
      CHECK(back.basis == s.basis);
      CHECK(back.aleph_rule == s.aleph_rule);
    }
  }
  CHECK_THROWS_AS(preset_scenario("nope"), ConfigError);
}

TEST_CASE("shipped configs match the presets") {
  const fs::path dir = fs::path(DDCLF_SOURCE_DIR) / "configs";
  for (const auto& name : preset_names()) {
    for (bool paper : {false, true}) {
      const Scenario file = load_scenario((dir / (paper ? "paper" : "") / (name + ".ini")).string());
      std::stringstream a, b;
      write_scenario(file, a);
      write_scenario(preset_scenario(name, paper), b);
      CHECK_MESSAGE(a.str() == b.str(), name);
    }
  }
  const auto custom = load_scenario((dir / "custom-scalar.ini").string());
  CHECK(custom.custom.has_value());
  CHECK(scenario_benchmark(custom).topology.edges.size() == 3);
}

TEST_CASE("desk presets follow the case studies") {
  const auto tree = preset_scenario("academic-tree");
  CHECK(scenario_benchmark(tree).topology.edges.size() == 14);
  const auto lu = preset_scenario("lu-line");
  CHECK(scenario_basis(lu, scenario_benchmark(lu).subsystems[0]).size() == 6);
  CHECK(preset_scenario("spacecraft-ring").M == 10);
  CHECK(preset_scenario("spacecraft-ring", true).M == 2000);
  CHECK(preset_scenario("academic-tree", true).M == 2047);
  CHECK(default_box("spacecraft", "fully-connected") == 25000.0);
  CHECK(default_box("spacecraft", "ring") == 400.0);
  CHECK(default_box("academic", "star") == 2.5e8);
  CHECK(default_box("lu", "line") == 25000.0);
}

TEST_CASE("spacecraft ring desk run") {
  Scenario s = preset_scenario("spacecraft-ring");
  s.out_dir = scratch("ring").string();
  const RunReport r = run_scenario(s);
  INFO(r.message);
  REQUIRE(r.exit_code == exit_ok);
  REQUIRE(r.stages.size() == 4);
  CHECK(r.subsystems.size() == 10u);
  CHECK(r.worst_defect <= 1e-6);
  CHECK(r.converged_runs == 5);
  CHECK_FALSE(r.open_loop_converged);

  std::ifstream is(fs::path(s.out_dir) / "network.txt");
  const auto rep = read_network_report(is);
  REQUIRE(rep.M() == 10);
  CHECK(rep.constants.mu.maxCoeff() < 0.0);
  CHECK(rep.constants.kappa == doctest::Approx(r.network_kappa));

  const auto artifacts = summary_artifacts(s.out_dir);
  CHECK(artifacts.size() == r.artifacts.size());
  const Benchmark bench = scenario_benchmark(s);
  for (const auto& a : artifacts) {
    const fs::path p = fs::path(s.out_dir) / a;
    REQUIRE_MESSAGE(fs::exists(p), a);
    std::ifstream f(p);
    if (a.rfind("trajectories/", 0) == 0) {
      CHECK_NOTHROW(read_trajectory_csv(f, scenario_basis(s, bench.subsystems[0])));
    } else if (a.rfind("certificates/", 0) == 0) {
      CHECK_NOTHROW(read_certificate(f));
    } else if (a == "network.txt") {
      CHECK_NOTHROW(read_network_report(f));
    } else if (a.rfind("verify/", 0) == 0) {
      CHECK(read_suite_report(f).conditions.size() >= 2u);
    } else if (a == "scenario.ini") {
      CHECK_NOTHROW(parse_scenario(f));
    } else {
      CHECK_MESSAGE(csv_parses(p), a);
    }
  }
}

TEST_CASE("runs are reproducible and stages can be rerun from disk") {
  Scenario a = small_ring("rep_a");
  Scenario b = small_ring("rep_b");
  b.workers = 3;
  Scenario c = small_ring("rep_c");
  REQUIRE(run_scenario(a).exit_code == exit_ok);
  REQUIRE(run_scenario(b).exit_code == exit_ok);
  for (Stage st : {Stage::collect, Stage::synthesize, Stage::compose, Stage::verify}) {
    const auto r = run_scenario(c, st);
    REQUIRE_MESSAGE(r.exit_code == exit_ok, r.message);
  }
  for (const auto& art : summary_artifacts(a.out_dir)) {
    if (art == "scenario.ini") continue;  // records out_dir and workers
    const std::string ref = slurp(fs::path(a.out_dir) / art);
    CHECK_MESSAGE(slurp(fs::path(b.out_dir) / art) == ref, art);
    CHECK_MESSAGE(slurp(fs::path(c.out_dir) / art) == ref, art);
  }

  Scenario d = small_ring("rep_d");
  d.seed = 2;
  REQUIRE(run_scenario(d, Stage::collect).exit_code == exit_ok);
  CHECK(slurp(fs::path(d.out_dir) / "trajectories/sub_0001.csv") !=
        slurp(fs::path(a.out_dir) / "trajectories/sub_0001.csv"));
}

TEST_CASE("stage failures map to exit codes") {
  SUBCASE("rank gate when T equals N") {
    Scenario s = small_ring("rank");
    s.T = 9;
    const auto r = run_scenario(s);
    CHECK(r.exit_code == exit_rank_gate);
    CHECK(r.failed_stage == "synthesize");
    CHECK(r.message.find("subsystem 1") != std::string::npos);
  }
  SUBCASE("absurd kappa is SDP infeasible with a retry hint") {
    Scenario s = preset_scenario("lu-line");
    s.M = 2;
    s.kappa = {1e6};
    s.gain_aware = false;
    s.out_dir = scratch("kappa").string();
    const auto r = run_scenario(s);
    CHECK(r.exit_code == exit_sdp_infeasible);
    CHECK(r.message.find("larger T") != std::string::npos);
  }
  SUBCASE("small-gain failure") {
    Scenario s = load_scenario((fs::path(DDCLF_SOURCE_DIR) / "configs" / "custom-scalar.ini").string());
    s.custom->D = Eigen::MatrixXd::Constant(1, 1, 10.0);
    s.pi = {0.01};
    s.out_dir = scratch("smallgain").string();
    const auto r = run_scenario(s);
    CHECK(r.exit_code == exit_composition);
    CHECK(r.message.find("subsystem") != std::string::npos);
  }
  SUBCASE("verification violation when convergence is required too early") {
    Scenario s = small_ring("verify");
    s.horizon = 0.05;
    s.require_convergence = true;
    const auto r = run_scenario(s);
    CHECK(r.exit_code == exit_verification);
    CHECK(r.message.find("closed-loop run 1") != std::string::npos);
  }
  SUBCASE("missing artifacts") {
    Scenario s = small_ring("io");
    const auto r = run_scenario(s, Stage::synthesize);
    CHECK(r.exit_code == exit_io);
  }
  SUBCASE("invalid scenario") {
    Scenario s = small_ring("bad");
    s.T = 0;
    CHECK(run_scenario(s).exit_code == exit_usage);
  }
}

TEST_CASE("scaling bench keeps the per-subsystem program size") {
  BenchOptions o;
  o.out_dir = scratch("bench").string();
  o.scaling_M = {2, 4};
  o.repeats = 1;
  const auto rows = run_bench("scaling", o);
  REQUIRE(rows.size() == 2u);
  CHECK(rows[0].exit_code == 0);
  CHECK(rows[1].exit_code == 0);
  CHECK(rows[0].constraints == rows[1].constraints);
  CHECK(rows[0].psd_order == rows[1].psd_order);
  CHECK(rows[0].constraints > 0);
  std::stringstream csv;
  write_bench_csv(rows, csv);
  std::string head;
  std::getline(csv, head);
  CHECK(head.rfind("case,topology,M,T,RT_max_s", 0) == 0);
  CHECK_THROWS_AS(run_bench("", o), ConfigError);
  CHECK_THROWS_AS(run_bench("fast", o), ConfigError);
}
