#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "json.hpp"

#include "haf/io.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = HAF_CLI_PATH;

// Small desk geometry so each CLI invocation stays in the millisecond range.
const std::string kGenArgs =
    "gen-data --branching 2,2 --input-dim 4 --samples-per-class 10 "
    "--level-spread 5,1.5 --noise-sigma 1.0 --seed 3";
const std::string kTrainArgs =
    "train --epochs 2 --batch-size 16 --pairs-per-batch 8 --mlp-dims 8 "
    "--seed 5 --ks 1,2";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(HAF_WORK_DIR) / "cli_scratch" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_in(const fs::path& dir, const std::string& args,
           const std::string& env = "") {
  const std::string cmd = "cd '" + dir.string() + "' && " + env +
                          (env.empty() ? "" : " ") + kCli + " " + args +
                          " > cli_out.txt 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string output_of(const fs::path& dir) {
  return haf::read_file((dir / "cli_out.txt").string());
}

std::string slurp(const fs::path& dir, const std::string& file) {
  return haf::read_file((dir / file).string());
}

}  // namespace

TEST_CASE("gen-data writes four byte-reproducible files") {
  const auto a = fresh_dir("gen_a");
  const auto b = fresh_dir("gen_b");
  REQUIRE(run_in(a, kGenArgs) == 0);
  REQUIRE(run_in(b, kGenArgs) == 0);

  for (const std::string file :
       {"taxonomy.txt", "train.csv", "test.csv", "report_meta.json"}) {
    CHECK(fs::exists(a / file));
    CHECK(slurp(a, file) == slurp(b, file));
  }

  const auto meta = nlohmann::json::parse(slurp(a, "report_meta.json"));
  CHECK(meta["fine_classes"] == 4);
  CHECK(meta["levels"] == 2);
  CHECK(meta["n_train"] == 32);
  CHECK(meta["n_test"] == 8);
  CHECK(meta["seed"] == 3);
}

TEST_CASE("train and eval complete the pipeline deterministically") {
  const auto a = fresh_dir("pipe_a");
  const auto b = fresh_dir("pipe_b");
  for (const auto& dir : {a, b}) {
    REQUIRE(run_in(dir, kGenArgs) == 0);
    REQUIRE(run_in(dir, kTrainArgs) == 0);
    REQUIRE(run_in(dir, "eval --csv --seed 5 --ks 1,2") == 0);
  }

  CHECK(slurp(a, "checkpoint.json") == slurp(b, "checkpoint.json"));
  CHECK(slurp(a, "report_plain.json") == slurp(b, "report_plain.json"));
  CHECK(slurp(a, "report_crm.json") == slurp(b, "report_crm.json"));
  CHECK(slurp(a, "report_plain.csv") == slurp(b, "report_plain.csv"));

  int log_lines = 0;
  for (char ch : slurp(a, "train_log.jsonl")) log_lines += ch == '\n';
  CHECK(log_lines == 2);

  const auto plain = nlohmann::json::parse(slurp(a, "report_plain.json"));
  CHECK(plain["mode"] == "plain");
  CHECK(plain["seed"] == 5);
  CHECK(plain["top1_error"].get<double>() >= 0.0);
  CHECK(plain["top1_error"].get<double>() <= 1.0);
  const auto crm = nlohmann::json::parse(slurp(a, "report_crm.json"));
  CHECK(crm["mode"] == "crm");
  CHECK(crm["config_hash"] == plain["config_hash"]);
}

TEST_CASE("evaluation is invariant to the worker pool size") {
  const auto dir = fresh_dir("threads");
  REQUIRE(run_in(dir, kGenArgs) == 0);
  REQUIRE(run_in(dir, kTrainArgs) == 0);
  REQUIRE(run_in(dir, "eval --ks 1,2", "HAF_THREADS=1") == 0);
  const std::string single = slurp(dir, "report_plain.json");
  REQUIRE(run_in(dir, "eval --ks 1,2", "HAF_THREADS=3") == 0);
  CHECK(slurp(dir, "report_plain.json") == single);
}

TEST_CASE("config file values apply and flags override them") {
  const auto dir = fresh_dir("config");
  REQUIRE(run_in(dir, kGenArgs) == 0);
  haf::write_file((dir / "cfg.json").string(),
                  "{\"train\": {\"epochs\": 3, \"mlp_dims\": [8], "
                  "\"batch_size\": 16, \"seed\": 5}, "
                  "\"eval\": {\"ks\": [1, 2]}}");

  REQUIRE(run_in(dir, "train --config cfg.json") == 0);
  int lines = 0;
  for (char ch : slurp(dir, "train_log.jsonl")) lines += ch == '\n';
  CHECK(lines == 3);

  REQUIRE(run_in(dir, "train --config cfg.json --epochs 1") == 0);
  lines = 0;
  for (char ch : slurp(dir, "train_log.jsonl")) lines += ch == '\n';
  CHECK(lines == 1);
}

TEST_CASE("gradcheck subcommand reports per-loss verdicts") {
  const auto dir = fresh_dir("gradcheck");
  REQUIRE(run_in(dir, "gradcheck --trials 2") == 0);
  const std::string out = output_of(dir);
  CHECK(out.find("ce_fine") != std::string::npos);
  CHECK(out.find("total") != std::string::npos);
  CHECK(out.find("PASS") != std::string::npos);
  CHECK(out.find("FAIL") == std::string::npos);

  CHECK(run_in(dir, "gradcheck --trials 2 --corrupt margin") == 3);
  CHECK(output_of(dir).find("FAIL") != std::string::npos);
}

TEST_CASE("usage problems exit with 1") {
  const auto dir = fresh_dir("usage");
  CHECK(run_in(dir, "") == 1);
  CHECK(run_in(dir, "frobnicate") == 1);
  CHECK(run_in(dir, "train --no-such-flag 1") == 1);
  CHECK(run_in(dir, "--help") == 0);
}

TEST_CASE("domain errors exit with 2") {
  const auto dir = fresh_dir("domain");
  REQUIRE(run_in(dir, kGenArgs) == 0);

  SUBCASE("missing checkpoint") {
    CHECK(run_in(dir, "eval") == 2);
    CHECK(output_of(dir).find("IoError") != std::string::npos);
  }
  SUBCASE("unknown loss name") {
    CHECK(run_in(dir, "train --losses ce_fine,warp") == 2);
    CHECK(output_of(dir).find("InvalidConfig") != std::string::npos);
  }
  SUBCASE("k beyond the class count") {
    REQUIRE(run_in(dir, kTrainArgs) == 0);
    CHECK(run_in(dir, "eval --ks 100") == 2);
    CHECK(output_of(dir).find("RankListTooShort") != std::string::npos);
  }
}

TEST_CASE("non-finite training data exits with 3") {
  const auto dir = fresh_dir("nonfinite");
  REQUIRE(run_in(dir, kGenArgs) == 0);
  haf::write_file((dir / "bad.csv").string(),
                  "f0,f1,f2,f3,label\n1.0,nan,0.0,0.0,0/0\n"
                  "0.5,0.5,0.5,0.5,1/1\n");
  CHECK(run_in(dir, "train --epochs 1 --batch-size 2 --mlp-dims 8 "
                    "--train-csv bad.csv --test-csv bad.csv") == 3);
  CHECK(output_of(dir).find("NonFiniteInput") != std::string::npos);
}
