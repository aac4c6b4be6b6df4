#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(LA2_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("la2_cli_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("generate writes a reproducible dataset") {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  REQUIRE(run("generate --task darcy --n 12 --grid 8 --seed 7 --out " + a.string()) == 0);
  REQUIRE(run("generate --task darcy --n 12 --grid 8 --seed 7 --out " + b.string()) == 0);
  for (const char* f : {"geometry.la2t", "inputs.la2t", "outputs.la2t", "manifest.json"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(run("generate --task darcy --n 12 --grid 4 --seed 7 --out " + scratch("gen_c").string()) == 2);
  CHECK(run("generate --task pointcloud --n 3 --points 64 --out " + scratch("gen_d").string()) == 0);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("train, eval and dump-mask") {
  const fs::path data = scratch("train_data"), out = scratch("train_out");
  REQUIRE(run("generate --task darcy --n 10 --grid 8 --seed 1 --out " + data.string()) == 0);
  const fs::path cfg = fs::temp_directory_path() / "la2_cli_cfg.json";
  std::ofstream(cfg) << R"({"model": {"layers": 2, "hidden": 8, "patch": 4}, "train": {"epochs": 2}})";
  REQUIRE(run("train --data " + data.string() + " --config " + cfg.string() + " --layers 3 --out " + out.string()) ==
          0);
  const std::string report = slurp(out / "report.csv");
  CHECK(report.rfind("epoch,train_loss,test_rel_l2,sigma_s_1,sigma_s_2,sigma_s_3,epoch_seconds", 0) == 0);
  CHECK(fs::exists(out / "best.la2c"));

  // The override must be visible in the checkpoint header.
  const std::string ckpt = slurp(out / "final.la2c");
  const std::uint64_t len = *reinterpret_cast<const std::uint64_t*>(ckpt.data() + 8);
  const auto header = nlohmann::json::parse(ckpt.substr(16, len));
  CHECK(header["config"]["layers"] == 3);
  CHECK(header["config"]["hidden"] == 8);

  CHECK(run("eval --data " + data.string() + " --checkpoint " + (out / "best.la2c").string()) == 0);
  CHECK(run("dump-mask --checkpoint " + (out / "best.la2c").string() + " --out " + (out / "mask.csv").string()) == 0);
  CHECK(slurp(out / "mask.csv").rfind("layer,sigma_s", 0) == 0);
  fs::remove_all(data);
  fs::remove_all(out);
  fs::remove(cfg);
}

TEST_CASE("usage and input errors exit with code 2") {
  CHECK(run("train --data " + scratch("nope").string() + " --epochs 1") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("generate --task darcy") == 2);
  const fs::path cfg = fs::temp_directory_path() / "la2_cli_bad.json";
  std::ofstream(cfg) << R"({"model": {"layerz": 2}})";
  CHECK(run("train --config " + cfg.string()) == 2);
  fs::remove(cfg);
  CHECK(run("bench --full-points 20000") == 2);
}
