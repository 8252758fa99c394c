// End-to-end checks of the command-line surface: exit codes, config
// validation through the binary, and the --seed override echo.
//
// Usage: cli_checks <path-to-paln-cli>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void expect(bool ok, const std::string& what) {
  if (!ok) {
    std::printf("FAIL: %s\n", what.c_str());
    ++g_failures;
  }
}

int run(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <path-to-paln-cli>\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path dir = fs::temp_directory_path() / "paln_cli_checks";
  fs::remove_all(dir);
  fs::create_directories(dir);

  expect(run(cli + " frobnicate") == 1, "unknown subcommand exits 1");
  expect(run(cli) == 1, "missing subcommand exits 1");
  expect(run(cli + " adapt") == 1, "missing required --model exits 1");

  {
    std::ofstream f(dir / "bad.json");
    f << R"({"train": {"alpha": -1}})";
  }
  expect(run(cli + " gen-data --config " + (dir / "bad.json").string() +
             " --out " + (dir / "o").string()) == 1,
         "invalid config exits 1");

  {
    std::ofstream f(dir / "tiny.json");
    f << R"({"data": {"source_train": 2, "target_train": 2, "target_test": 2,
                       "target_labels": 2}})";
  }
  expect(run(cli + " gen-data --config " + (dir / "tiny.json").string() +
             " --seed 7 --out " + (dir / "out").string()) == 0,
         "gen-data succeeds on a tiny config");
  {
    std::ifstream f(dir / "out" / "resolved_config.json");
    nlohmann::json resolved;
    f >> resolved;
    expect(resolved["train"]["seed"].get<std::uint64_t>() == 7,
           "--seed override echoed in the resolved config");
    expect(resolved["data"]["source_train"].get<int>() == 2,
           "data counts echoed in the resolved config");
  }
  expect(fs::exists(dir / "out" / "datasets" / "source_train" / "annotations.json"),
         "gen-data writes the dataset layout");
  expect(run(cli + " eval --model " + (dir / "missing.paln").string() +
             " --config " + (dir / "tiny.json").string() + " --out " +
             (dir / "o2").string()) == 2,
         "missing checkpoint exits 2");

  fs::remove_all(dir);
  if (g_failures == 0) std::printf("cli checks: all passed\n");
  return g_failures == 0 ? 0 : 1;
}
