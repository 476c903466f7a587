#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "paxl/cli.hpp"
#include "paxl/config.hpp"
#include "paxl/errors.hpp"

using namespace paxl;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("paxl_cli_test_" + std::to_string(SplitRng(::time(nullptr)).next_u64() % 100000));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_config(const fs::path& dir, const std::string& body) {
  const auto p = dir / "config.ini";
  std::ofstream f(p);
  f << body;
  return p;
}

}  // namespace

TEST_CASE("config parsing: sections, defaults, overrides, unknown keys") {
  auto map = ConfigMap::from_text(
      "# comment\n"
      "seed = 7\n"
      "[world]\n"
      "num_objects = 12\n"
      "noise_std = 0.01\n"
      "[train]\n"
      "objectives = vtc,vac\n");
  CHECK(map.get("seed") == "7");
  CHECK(map.get("world.num_objects") == "12");
  CHECK(map.get("train.batch_size") == "32");  // default preserved

  map.apply_override("train.batch_size=8");
  CHECK(map.get("train.batch_size") == "8");

  CHECK_THROWS_AS(ConfigMap::from_text("[world]\nnum_objekts = 3\n"), ConfigError);
  CHECK_THROWS_AS(map.apply_override("nonsense"), ConfigError);
  CHECK_THROWS_AS(map.set("world.unknown", "1"), ConfigError);

  const auto rc = resolve_config(map);
  CHECK(rc.seed == 7);
  CHECK(rc.world.num_objects == 12);
  CHECK(rc.objectives.count("vac") == 1);
  CHECK(rc.objectives.count("atm") == 0);

  SUBCASE("serialization is canonical and fingerprint-stable") {
    auto m2 = ConfigMap::from_text(map.serialize());
    CHECK(m2.serialize() == map.serialize());
    CHECK(m2.fingerprint() == map.fingerprint());
    CHECK(map.fingerprint().size() == 16);
    m2.set("seed", "8");
    CHECK(m2.fingerprint() != map.fingerprint());
  }
}

TEST_CASE("config validation rejects bad values with the offending key") {
  ConfigMap map;
  map.set("train.objectives", "vtc,warp");
  CHECK_THROWS_WITH_AS(resolve_config(map), doctest::Contains("warp"), ConfigError);

  ConfigMap m2;
  m2.set("train.objectives", "vac");
  CHECK_THROWS_AS(resolve_config(m2), ConfigError);  // vtc required

  ConfigMap m3;
  m3.set("world.frames_per_clip", "7");
  CHECK_THROWS_AS(resolve_config(m3), ConfigError);

  ConfigMap m4;
  m4.set("train.temperature", "0");
  CHECK_THROWS_AS(resolve_config(m4), ConfigError);

  ConfigMap m5;
  m5.set("patcher.heads", "3");  // must divide model_dim
  CHECK_THROWS_AS(resolve_config(m5), ConfigError);
}

TEST_CASE("derived seeds come from the master seed unless pinned") {
  ConfigMap a;
  a.set("seed", "100");
  ConfigMap b;
  b.set("seed", "101");
  const auto ra = resolve_config(a);
  const auto rb = resolve_config(b);
  CHECK(ra.world.seed != rb.world.seed);
  CHECK(ra.backbone.seed != ra.world.seed);

  ConfigMap c;
  c.set("seed", "100");
  c.set("train.seed", "555");
  const auto rc = resolve_config(c);
  CHECK(rc.train_seed == 555);
  CHECK(rc.world.seed == ra.world.seed);
}

TEST_CASE("cli: validation failures exit 1 before touching the filesystem") {
  TempDir tmp;
  const auto cfg = write_config(tmp.path, "seed = 3\n");
  const auto out = (tmp.path / "out").string();

  CHECK(paxl::cli::run({"frobnicate", "--config", cfg.string(), "--out", out}) == 1);
  CHECK_FALSE(fs::exists(out));

  CHECK(paxl::cli::run({"gen-data"}) == 1);  // --config required
  CHECK(paxl::cli::run({"gen-data", "--config", cfg.string(), "--set", "bogus.key=1",
                        "--out", out}) == 1);
  CHECK_FALSE(fs::exists(out));

  CHECK(paxl::cli::run({"gen-data", "--config", (tmp.path / "absent.ini").string(),
                        "--out", out}) == 1);
}

TEST_CASE("cli: gen-data writes deterministic artifacts and echoes the config") {
  TempDir tmp;
  const auto cfg = write_config(tmp.path,
                                "[world]\n"
                                "train_count = 40\n"
                                "eval_count = 20\n"
                                "heldout_count = 12\n"
                                "export_frames = true\n");
  const auto out1 = tmp.path / "a";
  const auto out2 = tmp.path / "b";
  REQUIRE(paxl::cli::run({"gen-data", "--config", cfg.string(), "--out", out1.string()}) == 0);
  REQUIRE(paxl::cli::run({"gen-data", "--config", cfg.string(), "--out", out2.string()}) == 0);

  for (const char* name : {"manifest.tsv", "saliency.tsv", "config.effective.ini",
                           "frames.bin", "frames.index.tsv"}) {
    CHECK(fs::exists(out1 / name));
    CHECK(slurp(out1 / name) == slurp(out2 / name));
  }
  CHECK(slurp(out1 / "config.effective.ini").find("train_count = 40") != std::string::npos);
}

TEST_CASE("cli: patch, evaluate and re-export through the verb pipeline") {
  TempDir tmp;
  const auto cfg = write_config(tmp.path,
                                "[world]\n"
                                "train_count = 64\n"
                                "eval_count = 30\n"
                                "heldout_count = 12\n"
                                "[train]\n"
                                "epochs = 1\n"
                                "batch_size = 16\n");
  const auto out = tmp.path / "run";
  REQUIRE(paxl::cli::run({"train-patcher", "--config", cfg.string(), "--out", out.string()}) ==
          0);
  CHECK(fs::exists(out / "patcher.paxl"));
  CHECK(fs::exists(out / "patcher_losslog.tsv"));

  REQUIRE(paxl::cli::run({"eval-bench", "--config", cfg.string(), "--out", out.string(),
                          "--set", "eval.model=patcher"}) == 0);
  CHECK(fs::exists(out / "bench_report.tsv"));
  const auto bench = slurp(out / "bench_report.tsv");
  CHECK(bench.find("patcher\tbench\taa") != std::string::npos);

  REQUIRE(paxl::cli::run({"train-downstream", "--config", cfg.string(), "--out", out.string(),
                          "--set", "train.mode=fuse"}) == 0);
  CHECK(fs::exists(out / "downstream_fuse.paxl"));

  REQUIRE(paxl::cli::run({"eval-retrieval", "--config", cfg.string(), "--out", out.string(),
                          "--set", "eval.model=fuser"}) == 0);
  CHECK(fs::exists(out / "retrieval_report.tsv"));

  REQUIRE(paxl::cli::run({"zero-shot", "--config", cfg.string(), "--out", out.string(),
                          "--set", "eval.model=fuser"}) == 0);
  const auto zs = slurp(out / "zeroshot_report.tsv");
  CHECK(zs.find("backbone\tzero_shot_heldout") != std::string::npos);
  CHECK(zs.find("ensemble\tzero_shot_heldout") != std::string::npos);

  // Remove a generated markdown file and re-export it from the TSV.
  fs::remove(out / "bench_report.md");
  REQUIRE(paxl::cli::run({"export-report", "--config", cfg.string(), "--out", out.string()}) ==
          0);
  CHECK(fs::exists(out / "bench_report.md"));

  SUBCASE("missing checkpoint for eval is a runtime error (exit 2)") {
    const auto out2 = tmp.path / "empty";
    CHECK(paxl::cli::run({"eval-bench", "--config", cfg.string(), "--out", out2.string(),
                          "--set", "eval.model=patcher"}) == 2);
  }
}

TEST_CASE("cli: train-patcher twice with one seed produces identical artifacts") {
  TempDir tmp;
  const auto cfg = write_config(tmp.path,
                                "[world]\n"
                                "train_count = 48\n"
                                "eval_count = 20\n"
                                "heldout_count = 12\n"
                                "[train]\n"
                                "epochs = 1\n"
                                "batch_size = 16\n");
  const auto out1 = tmp.path / "r1";
  const auto out2 = tmp.path / "r2";
  REQUIRE(paxl::cli::run({"train-patcher", "--config", cfg.string(), "--out", out1.string()}) ==
          0);
  REQUIRE(paxl::cli::run({"train-patcher", "--config", cfg.string(), "--out", out2.string()}) ==
          0);
  CHECK(slurp(out1 / "patcher.paxl") == slurp(out2 / "patcher.paxl"));
  CHECK(slurp(out1 / "patcher_losslog.tsv") == slurp(out2 / "patcher_losslog.tsv"));

  SUBCASE("--seed flag changes the artifacts") {
    const auto out3 = tmp.path / "r3";
    REQUIRE(paxl::cli::run({"train-patcher", "--config", cfg.string(), "--out", out3.string(),
                            "--seed", "77"}) == 0);
    CHECK(slurp(out1 / "patcher.paxl") != slurp(out3 / "patcher.paxl"));
  }
}
