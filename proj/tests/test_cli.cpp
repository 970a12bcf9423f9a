#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ddclf_cli_" + std::to_string(getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

int ddclf(const std::string& args) {
  const std::string cmd = std::string(DDCLF_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config(const std::string& name) { return (fs::path(DDCLF_SOURCE_DIR) / "configs" / name).string(); }

std::string write_config(const std::string& name, const std::string& text) {
  const fs::path p = scratch(name);
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST_CASE("usage") {
  CHECK(ddclf("") == 1);
  CHECK(ddclf("--help") == 0);
  CHECK(ddclf("frobnicate") == 1);
  CHECK(ddclf("run") == 1);
  CHECK(ddclf("run --config /nonexistent.ini") == 1);
  CHECK(ddclf("bench") == 1);
  CHECK(ddclf("bench ''") == 1);
  CHECK(ddclf("bench nope --out " + scratch("nope").string()) == 1);
  CHECK(ddclf("run --config " + config("paper/spacecraft-ring.ini")) == 1);
}

TEST_CASE("spacecraft ring desk scenario") {
  const auto out = scratch("ring");
  CHECK(ddclf("run --config " + config("spacecraft-ring.ini") + " --out " + out.string() + " --workers 2") == 0);
  CHECK(fs::exists(out / "summary.txt"));
  CHECK(fs::exists(out / "network.txt"));
  CHECK(fs::exists(out / "certificates" / "sub_0010.cert"));

  const auto staged = scratch("staged");
  CHECK(ddclf("collect --preset spacecraft-ring --out " + staged.string()) == 0);
  CHECK(ddclf("synthesize --preset spacecraft-ring --out " + staged.string()) == 0);
  CHECK(ddclf("compose --preset spacecraft-ring --out " + staged.string()) == 0);
  std::ifstream a(out / "network.txt"), b(staged / "network.txt");
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
}

TEST_CASE("failure exit codes") {
  const auto rank = write_config("rank.ini", "[system]\nbenchmark = spacecraft\nM = 2\n[collect]\nT = 9\n");
  CHECK(ddclf("run --config " + rank + " --out " + scratch("rank_out").string()) == 2);

  const auto kappa = write_config(
      "kappa.ini",
      "[system]\nbenchmark = lu\nM = 2\ntopology = line\n"
      "[collect]\nbasis = x1;x2;x3;x1*x3;x1*x2;x2*x3\nT = 150\ntau = 0.0001\n"
      "[synth]\naleph_rule = largest\nkappa = 1000000\npi = 0.1304\n");
  CHECK(ddclf("run --config " + kappa + " --out " + scratch("kappa_out").string()) == 3);

  CHECK(ddclf("verify --preset spacecraft-ring --out " + scratch("empty").string()) == 7);
}
