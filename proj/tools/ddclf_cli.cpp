#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ddclf/scenario.hpp"

using namespace ddclf;

namespace {

constexpr int kPaperScaleM = 100;

const char* kExitCodes =
    "exit codes:\n"
    "  0  success\n"
    "  1  usage or config error\n"
    "  2  rank gate (or divergent data collection)\n"
    "  3  SDP infeasible\n"
    "  4  SDP numerical failure\n"
    "  5  composition infeasible (small-gain condition)\n"
    "  6  verification violation\n"
    "  7  I/O error";

struct Common {
  std::string config;
  std::string preset;
  std::string out;
  int workers = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool paper_scale = false;
};

void add_common(CLI::App* cmd, Common& c) {
  auto* cfg = cmd->add_option("--config", c.config, "scenario INI file")->check(CLI::ExistingFile);
  auto* pre = cmd->add_option("--preset", c.preset, "built-in case study instead of a config file");
  cfg->excludes(pre);
  cmd->add_option("--out", c.out, "output directory (overrides [output] dir)");
  cmd->add_option("--workers", c.workers, "worker threads for per-subsystem jobs")->check(CLI::PositiveNumber);
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&c](const std::uint64_t& v) { c.seed = v, c.seed_given = true; }, "master seed");
  cmd->add_flag("--paper-scale", c.paper_scale, "allow paper-scale networks (M > 100); selects paper-scale presets");
}

int run_stage(Stage stage, const Common& c) {
  Scenario s;
  try {
    if (!c.config.empty()) {
      s = load_scenario(c.config);
    } else if (!c.preset.empty()) {
      s = preset_scenario(c.preset, c.paper_scale);
    } else {
      std::cerr << "ddclf: one of --config or --preset is required\n";
      return exit_usage;
    }
    if (!c.out.empty()) s.out_dir = c.out;
    if (c.workers > 0) s.workers = c.workers;
    if (c.seed_given) s.seed = c.seed;
    s.validate();
  } catch (const std::exception& e) {
    std::cerr << "ddclf: " << e.what() << '\n';
    return exit_usage;
  }
  if (s.M > kPaperScaleM && !c.paper_scale) {
    std::cerr << "ddclf: M = " << s.M << " is paper scale; pass --paper-scale to run it\n";
    return exit_usage;
  }
  const RunReport r = run_scenario(s, stage);
  if (r.exit_code != exit_ok) {
    std::cerr << "ddclf: " << (r.failed_stage.empty() ? std::string("setup") : r.failed_stage)
              << " failed (exit " << r.exit_code << "): " << r.message << '\n';
    return r.exit_code;
  }
  for (const auto& st : r.stages) {
    std::cout << st.name << ": " << st.seconds << " s, peak RSS " << st.peak_rss_kb << " kB\n";
  }
  if (stage == Stage::all || stage == Stage::compose || stage == Stage::verify) {
    std::cout << "network kappa " << r.network_kappa << ", max mu " << r.max_mu << '\n';
  }
  if (stage == Stage::all || stage == Stage::verify) {
    std::cout << "worst defect " << r.worst_defect << ", closed loop converged " << r.converged_runs << " of "
              << s.closed_loop_runs << '\n';
  }
  std::cout << "summary: " << s.out_dir << "/summary.txt\n";
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven ISS certificates and small-gain composition for polynomial networks"};
  app.footer(kExitCodes);
  app.require_subcommand(1);

  Common common;
  struct Sub {
    const char* name;
    const char* help;
    Stage stage;
  };
  const Sub subs[] = {
      {"collect", "simulate one trajectory per subsystem", Stage::collect},
      {"synthesize", "synthesize ISS certificates from collected trajectories", Stage::synthesize},
      {"compose", "small-gain composition of the certificates", Stage::compose},
      {"verify", "inequality suites and closed-loop simulation", Stage::verify},
      {"run", "all stages", Stage::all},
  };
  Stage chosen = Stage::all;
  for (const auto& sub : subs) {
    auto* cmd = app.add_subcommand(sub.name, sub.help);
    add_common(cmd, common);
    cmd->callback([&chosen, stage = sub.stage] { chosen = stage; });
  }

  std::string suite;
  BenchOptions bench;
  auto* b = app.add_subcommand("bench", "benchmark suites: desk or scaling");
  b->add_option("suite", suite, "desk | scaling")->required();
  b->add_option("--out", bench.out_dir, "output directory");
  b->add_option("--workers", bench.workers, "worker threads")->check(CLI::PositiveNumber);
  b->add_option("--seed", bench.seed, "master seed");
  b->add_flag("--paper-scale", bench.paper_scale, "paper-scale network sizes");
  b->add_option("--sizes", bench.scaling_M, "scaling: subsystem counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_usage;
  }

  if (b->parsed()) {
    try {
      if (suite.empty()) throw ConfigError("empty bench suite name (expected desk or scaling)");
      if (bench.paper_scale && suite == "scaling") bench.scaling_M = {250, 500, 1000, 2000};
      const auto rows = run_bench(suite, bench);
      std::filesystem::create_directories(bench.out_dir);
      write_bench_csv(rows, std::cout);
      std::ofstream os(bench.out_dir + "/bench_" + suite + ".csv");
      if (!os) throw IoError("cannot write " + bench.out_dir + "/bench_" + suite + ".csv");
      write_bench_csv(rows, os);
      for (const auto& r : rows) {
        if (r.exit_code != exit_ok) return r.exit_code;
      }
      return exit_ok;
    } catch (const ConfigError& e) {
      std::cerr << "ddclf: " << e.what() << '\n';
      return exit_usage;
    } catch (const std::exception& e) {
      std::cerr << "ddclf: " << e.what() << '\n';
      return exit_io;
    }
  }
  return run_stage(chosen, common);
}
