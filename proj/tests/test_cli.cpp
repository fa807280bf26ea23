#include "doctest.h"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "viewssl/random.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(VIEWSSL_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("cli: phantom then targets, reproducible bytes") {
  const auto dir = fresh_dir("viewssl_cli_targets");
  auto r = run_cli("phantom --out " + (dir / "data").string() + " --n 2 --seed 4 --fov 48");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(dir / "data" / "config.json"));
  const auto manifest = dir / "data" / "phantom_0000" / "manifest.json";
  REQUIRE(fs::exists(manifest));

  r = run_cli("targets --manifest " + manifest.string() + " --out " + (dir / "t1").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  r = run_cli("targets --manifest " + manifest.string() + " --out " + (dir / "t2").string());
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "t1" / "index.csv"));
  CHECK(fs::exists(dir / "t1" / "config.json"));
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir / "t1")) {
    CHECK_MESSAGE(slurp(e.path()) == slurp(dir / "t2" / e.path().filename()), e.path().filename().string());
    ++files;
  }
  CHECK(files == 8 + 2);  // one heatmap per stack slice, the index and config.json

  // the index lists locations in stack order from 0 to 1
  std::istringstream index(slurp(dir / "t1" / "index.csv"));
  std::string line;
  std::getline(index, line);
  CHECK(line == "slice_id,location,heatmap_path");
  std::vector<double> locs;
  while (std::getline(index, line)) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    locs.push_back(std::stod(line.substr(a + 1, b - a - 1)));
  }
  REQUIRE(locs.size() == 8);
  CHECK(locs.front() == 0.0);
  CHECK(locs.back() == 1.0);
  fs::remove_all(dir);
}

TEST_CASE("cli: parallel intersecting series is rejected by name") {
  const auto dir = fresh_dir("viewssl_cli_parallel");
  REQUIRE(run_cli("phantom --out " + dir.string() + " --n 1 --seed 2 --fov 32").code == 0);
  const auto manifest = dir / "phantom_0000" / "manifest.json";
  auto j = nlohmann::json::parse(slurp(manifest));
  // copy a stack plane into the first intersecting series
  for (auto& series : j["series"]) {
    if (series["role"] == "Intersecting") {
      series["images"][0]["plane"] = j["series"][0]["images"][0]["plane"];
      series["series_id"] = "bad_view";
      break;
    }
  }
  std::ofstream(manifest) << j.dump(2);
  const auto r = run_cli("targets --manifest " + manifest.string() + " --out " + (dir / "t").string());
  CHECK(r.code == 2);
  CHECK_MESSAGE(r.output.find("bad_view") != std::string::npos, r.output);
  CHECK_FALSE(fs::exists(dir / "t" / "index.csv"));
  fs::remove_all(dir);
}

TEST_CASE("cli: configuration errors exit with code 4") {
  const auto dir = fresh_dir("viewssl_cli_config");
  CHECK(run_cli("phantom --out " + dir.string() + " --n 1 --abnormal-fraction 3").code == 4);
  CHECK(run_cli("no-such-command").code == 4);
  CHECK(run_cli("pretrain --data " + dir.string()).code == 4);  // missing --out
  std::ofstream(dir / "exp.json") << R"({"pretrain_epochs": 1, "bogus_key": 2})";
  const auto r = run_cli("experiment --config " + (dir / "exp.json").string() + " --out " + (dir / "x").string());
  CHECK(r.code == 4);
  CHECK_MESSAGE(r.output.find("bogus_key") != std::string::npos, r.output);
  CHECK(run_cli("experiment --print-default --out " + (dir / "x").string()).code == 0);
  fs::remove_all(dir);
}

TEST_CASE("cli: pretrain, eval and finetune on a tiny dataset") {
  const auto dir = fresh_dir("viewssl_cli_train");
  REQUIRE(run_cli("phantom --out " + (dir / "data").string() + " --n 3 --seed 6 --abnormal-fraction 0.34").code == 0);
  const std::string common = " --target-size 32 --epochs 1 --batch-size 8";
  auto r = run_cli("pretrain --data " + (dir / "data").string() + " --out " + (dir / "pre").string() + " --val-studies 1" + common);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(dir / "pre" / "meta.json"));
  CHECK(fs::exists(dir / "pre" / "config.json"));

  r = run_cli("eval --data " + (dir / "data").string() + " --checkpoint " + (dir / "pre").string() +
              " --task loc --target-size 32 --out " + (dir / "ev").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto metrics = nlohmann::json::parse(slurp(dir / "ev" / "metrics.json"));
  CHECK(metrics.contains("location"));

  r = run_cli("finetune --data " + (dir / "data").string() + " --checkpoint " + (dir / "pre").string() +
              " --head seg --out " + (dir / "ft").string() + " --val-studies 1" + common);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  r = run_cli("eval --data " + (dir / "data").string() + " --checkpoint " + (dir / "ft").string() +
              " --task seg --target-size 32 --out " + (dir / "ev2").string());
  CHECK_MESSAGE(r.code == 0, r.output);
  fs::remove_all(dir);
}

TEST_CASE("cli: malformed inputs never crash") {
  const auto dir = fresh_dir("viewssl_cli_fuzz");
  REQUIRE(run_cli("phantom --out " + dir.string() + " --n 1 --seed 3 --fov 32").code == 0);
  const auto manifest = dir / "phantom_0000" / "manifest.json";
  const std::string original = slurp(manifest);
  viewssl::Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    std::string text = original;
    const int edits = 1 + static_cast<int>(rng.below(4));
    for (int e = 0; e < edits; ++e) {
      const std::size_t pos = rng.below(text.size());
      switch (rng.below(3)) {
        case 0: text[pos] = static_cast<char>(32 + rng.below(95)); break;
        case 1: text.erase(pos, 1 + rng.below(8)); break;
        default: text.insert(pos, "\"x\"");
      }
    }
    std::ofstream(manifest, std::ios::trunc) << text;
    const auto r = run_cli("targets --manifest " + manifest.string() + " --out " + (dir / "t").string());
    // structured failure or success; never a signal
    CHECK_MESSAGE((r.code == 0 || r.code == 2 || r.code == 4), r.output);
  }
  // truncated tensor file: geometry-only commands do not read pixels, training does
  std::ofstream(manifest, std::ios::trunc) << original;
  const auto m = nlohmann::json::parse(original);
  const auto tensor = dir / "phantom_0000" / m["series"][0]["images"][0]["pixel_file"].get<std::string>();
  const std::string bytes = slurp(tensor);
  std::ofstream(tensor, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() / 2);
  const auto r = run_cli("pretrain --data " + dir.string() + " --out " + (dir / "p").string() + " --epochs 0 --target-size 32");
  CHECK(r.code == 2);
  CHECK_MESSAGE(r.output.find(tensor.filename().string()) != std::string::npos, r.output);
  fs::remove_all(dir);
}
