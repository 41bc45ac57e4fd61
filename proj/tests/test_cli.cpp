#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "doctest.h"

namespace {

namespace fs = std::filesystem;

int cli(const std::string& args) {
  const std::string cmd = std::string(PGMGNN_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes") {
    CHECK(cli("--help") == 0);
    CHECK(cli("") == 1);
    CHECK(cli("frobnicate") == 1);
    CHECK(cli("train --arch edge --data x --out y") == 1);
    CHECK(cli("oracle --structure pentagram") == 1);
    CHECK(cli("oracle --structure chain --n 21") == 2);
    CHECK(cli("oracle --structure cycle --n 6 --seed 3 --baselines") == 0);
    CHECK(cli("train --data /nonexistent/dir --out /tmp/x.json") == 2);
  }

  TEST_CASE("generate, train, eval and trace end to end") {
    const fs::path dir = fs::temp_directory_path() / "pgmgnn_cli_test";
    fs::remove_all(dir);
    const std::string d = dir.string();
    REQUIRE(cli("generate --out " + d + "/data --seed 4 --train 1 --val 1 --test 1") == 0);
    REQUIRE(cli("train --data " + d + "/data --arch node --epochs 2 --quiet --out " + d + "/node.json") == 0);
    CHECK(fs::exists(dir / "node.json"));
    CHECK(cli("eval --condition III --models-per-cell 1 --node " + d + "/node.json --out " + d + "/rep") == 0);
    CHECK(fs::exists(dir / "rep" / "report.csv"));
    CHECK(fs::exists(dir / "rep" / "report.json"));
    CHECK(cli("trace --checkpoint " + d + "/node.json --models-per-cell 1 --out " + d + "/tr") == 0);
    CHECK(fs::exists(dir / "tr" / "trace.csv"));
    CHECK(cli("generate --condition IV --models-per-cell 1 --out " + d + "/cond") == 0);
    CHECK(fs::exists(dir / "cond" / "condition.json"));

    // Flags from a config file, one section per verb.
    const fs::path cfg = dir / "eval.ini";
    {
      std::FILE* f = std::fopen(cfg.c_str(), "w");
      std::fprintf(f, "[eval]\ncondition=I\nmodels-per-cell=1\nmethods=oracle,BP\nout=%s/rep2\n", d.c_str());
      std::fclose(f);
    }
    CHECK(cli("--config " + cfg.string() + " eval") == 0);
    CHECK(fs::exists(dir / "rep2" / "report.csv"));
    CHECK(cli("eval --methods node-GNN --models-per-cell 1") == 1);
    fs::remove_all(dir);
  }
}
