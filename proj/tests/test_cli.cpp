#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const fs::path kScratch = fs::temp_directory_path() / "pcrd_cli_test";

int run(const std::string& args, const std::string& stdout_file = "/dev/null") {
  const std::string cmd = std::string(PCRD_CLI_PATH) + " " + args + " > " + stdout_file + " 2> " +
                          (kScratch / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Scratch {
  Scratch() {
    fs::remove_all(kScratch);
    fs::create_directories(kScratch);
  }
  ~Scratch() { fs::remove_all(kScratch); }
};

}  // namespace

TEST_CASE("usage errors exit with 2") {
  Scratch s;
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("bench --repeats 0") == 2);
  CHECK(run("eval-detect x --labels y --difficulty brutal") == 2);
  CHECK(run("--config /nonexistent.cfg bench") != 0);
  CHECK(run("--help") == 0);
}

TEST_CASE("synth is reproducible and detect needs weights") {
  Scratch s;
  const auto a = kScratch / "a", b = kScratch / "b";
  REQUIRE(run("--seed 5 synth --frames 2 --id 3 --ood 2 --out " + a.string()) == 0);
  REQUIRE(run("--seed 5 synth --frames 2 --id 3 --ood 2 --out " + b.string()) == 0);
  for (const char* f : {"frame_000000.bin", "frame_000001.bin", "frame_000001.label", "frame_000000.txt"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(run("--seed 6 synth --frames 1 --out " + (kScratch / "c").string()) == 0);
  CHECK(slurp(a / "frame_000000.bin") != slurp(kScratch / "c" / "frame_000000.bin"));

  CHECK(run("detect " + a.string()) == 2);
  CHECK(slurp(kScratch / "stderr.txt").find("error:") != std::string::npos);

  REQUIRE(run("eval-ground " + a.string() + " --pred " + a.string(), (kScratch / "g.txt").string()) == 0);
  const auto g = slurp(kScratch / "g.txt");
  CHECK(g.find("iou = 1\n") != std::string::npos);
  CHECK(g.find("precision = 1\n") != std::string::npos);

  // the ground-truth labels scored against themselves
  std::ofstream dets(kScratch / "dets.txt");
  for (const char* stem : {"frame_000000", "frame_000001"}) {
    std::ifstream in(a / (std::string(stem) + ".txt"));
    for (std::string line; std::getline(in, line);) {
      std::istringstream ls(line);
      std::string cls, rest;
      ls >> cls;
      std::getline(ls, rest);
      dets << stem << ' ' << cls << " 1" << rest << '\n';
    }
  }
  dets.close();
  REQUIRE(run("eval-detect " + (kScratch / "dets.txt").string() + " --labels " + a.string() + " --out " +
              (kScratch / "ap.csv").string(),
              (kScratch / "ap.txt").string()) == 0);
  CHECK(slurp(kScratch / "ap.txt").find("map40 = 1\n") != std::string::npos);
  CHECK(slurp(kScratch / "ap.csv").rfind("class,difficulty,mode", 0) == 0);
}

TEST_CASE("bench writes four stage columns") {
  Scratch s;
  REQUIRE(run("--config /dev/null bench --repeats 2", (kScratch / "bench.csv").string()) == 0);
  std::istringstream csv(slurp(kScratch / "bench.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "run,projection_ms,ground_ms,cluster_ms,network_ms,total_ms");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 5);
  }
  CHECK(rows == 2);
  CHECK(slurp(kScratch / "stderr.txt").find("weights = random") != std::string::npos);
  REQUIRE(run("bench --repeats 1 --out " + (kScratch / "b2.csv").string(), (kScratch / "rep.txt").string()) == 0);
  CHECK(fs::exists(kScratch / "b2.csv"));
  CHECK(slurp(kScratch / "rep.txt").find("fps") != std::string::npos);
}
