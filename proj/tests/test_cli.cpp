#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(CISI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch() {
  fs::path dir = fs::temp_directory_path() / "cisi_cli_test";
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

TEST(Cli, SimulateTrainEstimate) {
  const fs::path d = scratch();
  ASSERT_EQ(run("simulate --scenario 1 --n 300 --seed 3 --out " + (d / "s.csv").string() +
                " --truth-out " + (d / "truth.json").string() + " --spec-out " +
                (d / "spec.json").string()),
            0);
  write_text(d / "cfg.json", R"({"epochs":1,"width":4,"rep_dim":4,"embed_dim":2,"depth":1})");
  ASSERT_EQ(run("train --data " + (d / "s.csv").string() + " --method ncore --config " +
                (d / "cfg.json").string() + " --model-out " + (d / "m.json").string()),
            0);
  EXPECT_EQ(run("estimate --model " + (d / "m.json").string() + " --data " +
                (d / "s.csv").string() + " --out " + (d / "e.json").string()),
            0);
  EXPECT_TRUE(fs::exists(d / "e.json"));
  EXPECT_TRUE(fs::exists(d / "truth.json"));
}

TEST(Cli, ExitCodes) {
  const fs::path d = scratch();
  EXPECT_EQ(run("simulate --scenario 7 --n 10 --seed 1 --out " + (d / "x.csv").string()), 2);
  EXPECT_EQ(run("train --data " + (d / "missing.csv").string() + " --model-out " +
                (d / "m2.json").string()),
            3);
  write_text(d / "bad_cfg.json", R"({"alpha": -1})");
  write_text(d / "tiny.csv", "x1,t1,y\n0.5,1,2\n0.1,0,1\n");
  EXPECT_EQ(run("train --data " + (d / "tiny.csv").string() + " --config " +
                (d / "bad_cfg.json").string() + " --model-out " + (d / "m3.json").string()),
            2);
  EXPECT_EQ(run("train --data " + (d / "tiny.csv").string() + " --method tecevae --model-out " +
                (d / "m4.json").string()),
            2);
  write_text(d / "nan.csv", "x1,t1,y\n0.5,1,1e308\n0.1,0,-1e308\n");
  write_text(d / "fast.json", R"({"learning_rate": 0.1, "width": 3, "rep_dim": 3, "depth": 1})");
  EXPECT_EQ(run("train --data " + (d / "nan.csv").string() + " --config " +
                (d / "fast.json").string() + " --model-out " + (d / "m5.json").string()),
            4);
  EXPECT_EQ(run("bogus"), 2);
}

TEST(Cli, IngestWithScaler) {
  const fs::path d = scratch();
  write_text(d / "raw.csv", "a,b,t,y\n1,2,0,3\n2,1,1,5\n3,0,1,10\n");
  write_text(d / "schema.json",
             R"({"covariates":["a","b"],"treatments":["t"],"outcome":"y","standardize_outcome":true})");
  EXPECT_EQ(run("ingest --data " + (d / "raw.csv").string() + " --schema " +
                (d / "schema.json").string() + " --out " + (d / "clean.csv").string() +
                " --scaler-out " + (d / "scaler.json").string()),
            0);
  EXPECT_TRUE(fs::exists(d / "scaler.json"));
  write_text(d / "raw_bad.csv", "a,b,t,y\n1,2,0.5,3\n");
  EXPECT_EQ(run("ingest --data " + (d / "raw_bad.csv").string() + " --schema " +
                (d / "schema.json").string() + " --out " + (d / "clean2.csv").string()),
            3);
}

}  // namespace
