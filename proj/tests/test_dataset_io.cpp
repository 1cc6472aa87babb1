#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "gswm/data/io.hpp"
#include "gswm/sim/balls.hpp"

using namespace gswm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("gswm_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

DatasetManifest tiny_manifest(const fs::path& root, int64_t n, int64_t T) {
  DatasetManifest m;
  m.setting = "interaction";
  m.image_hw = 64;
  m.episode_len = T;
  m.split_sizes["train"] = n;
  for (int64_t i = 0; i < n; ++i) m.seeds["train"].push_back((uint64_t)i);
  write_manifest(root, m);
  return m;
}

}  // namespace

TEST_CASE("episode write/read round-trip is exact") {
  TempDir tmp;
  Rng rng(5);
  Episode ep = simulate_balls(BallMode::Interaction, 12, rng);
  ep.seed = 987654321;
  write_episode(tmp.path, "train", 3, ep);
  Episode back = read_episode(tmp.path, "train", 3);

  REQUIRE(back.frames.shape == ep.frames.shape);
  REQUIRE(back.frames.data == ep.frames.data);
  REQUIRE(back.seed == ep.seed);
  REQUIRE(back.setting == ep.setting);
  REQUIRE(back.annotations.size() == ep.annotations.size());
  for (size_t t = 0; t < ep.annotations.size(); ++t) {
    REQUIRE(back.annotations[t].size() == ep.annotations[t].size());
    for (size_t i = 0; i < ep.annotations[t].size(); ++i) {
      REQUIRE(back.annotations[t][i].id == ep.annotations[t][i].id);
      REQUIRE(back.annotations[t][i].center == ep.annotations[t][i].center);
      REQUIRE(back.annotations[t][i].bbox_hw == ep.annotations[t][i].bbox_hw);
      REQUIRE(back.annotations[t][i].color == ep.annotations[t][i].color);
      REQUIRE(back.annotations[t][i].layer == ep.annotations[t][i].layer);
    }
  }
}

TEST_CASE("frames.bin has the documented byte layout") {
  TempDir tmp;
  Rng rng(7);
  Episode ep = simulate_balls(BallMode::Occlusion, 5, rng);
  write_episode(tmp.path, "train", 0, ep);
  auto sz = fs::file_size(episode_dir(tmp.path, "train", 0) / "frames.bin");
  REQUIRE((int64_t)sz == 5 * 3 * 64 * 64);

  // spot-check raw byte order: [T][3][H][W] row-major
  std::ifstream f(episode_dir(tmp.path, "train", 0) / "frames.bin", std::ios::binary);
  std::vector<uint8_t> raw((size_t)sz);
  f.read((char*)raw.data(), (std::streamsize)sz);
  for (int64_t i = 0; i < ep.frames.numel(); i += 997) REQUIRE(raw[(size_t)i] == ep.frames[i]);
}

TEST_CASE("meta.json passes a strict schema check") {
  TempDir tmp;
  Rng rng(9);
  Episode ep = simulate_single_ball(rng);
  write_episode(tmp.path, "val", 7, ep);
  std::ifstream f(episode_dir(tmp.path, "val", 7) / "meta.json");
  json meta = json::parse(f);

  REQUIRE(meta.is_object());
  const std::vector<std::string> required = {"format_version", "setting", "seed",
                                             "tag", "shape", "frames_crc32", "annotations"};
  for (auto& key : required) REQUIRE(meta.contains(key));
  REQUIRE(meta["format_version"].is_string());
  REQUIRE(meta["setting"].is_string());
  REQUIRE(meta["seed"].is_number_unsigned());
  REQUIRE(meta["shape"].is_array());
  REQUIRE(meta["shape"].size() == 4);
  REQUIRE(meta["annotations"].is_array());
  REQUIRE(meta["annotations"].size() == (size_t)ep.length());
  for (auto& frame : meta["annotations"]) {
    REQUIRE(frame.is_array());
    for (auto& a : frame) {
      REQUIRE(a.contains("id"));
      REQUIRE(a.contains("center"));
      REQUIRE(a["center"].size() == 2);
      REQUIRE(a.contains("bbox_hw"));
      REQUIRE(a.contains("color"));
      REQUIRE(a.contains("layer"));
      REQUIRE(a["center"][0].get<double>() >= 0.0);
      REQUIRE(a["center"][0].get<double>() <= 1.0);
    }
  }
}

TEST_CASE("corrupt episodes are reported with the episode path") {
  TempDir tmp;
  Rng rng(11);
  Episode ep = simulate_balls(BallMode::Interaction, 4, rng);
  write_episode(tmp.path, "train", 1, ep);

  SECTION("missing frames") {
    fs::remove(episode_dir(tmp.path, "train", 1) / "frames.bin");
    REQUIRE_THROWS_WITH(read_episode(tmp.path, "train", 1),
                        Catch::Matchers::ContainsSubstring("episode_000001"));
  }
  SECTION("truncated frames") {
    fs::resize_file(episode_dir(tmp.path, "train", 1) / "frames.bin", 100);
    REQUIRE_THROWS_AS(read_episode(tmp.path, "train", 1), CorruptDataset);
  }
  SECTION("bit flip fails the checksum") {
    auto p = episode_dir(tmp.path, "train", 1) / "frames.bin";
    std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(1000);
    char c = 77;
    f.write(&c, 1);
    f.close();
    REQUIRE_THROWS_AS(read_episode(tmp.path, "train", 1), CorruptDataset);
  }
}

TEST_CASE("batch stream: full-length windows always start at zero") {
  TempDir tmp;
  const int64_t T = 10;
  for (int64_t i = 0; i < 4; ++i) {
    Rng rng((uint64_t)i);
    write_episode(tmp.path, "train", i, simulate_balls(BallMode::Interaction, T, rng));
  }
  tiny_manifest(tmp.path, 4, T);
  BatchStream<float> bs(tmp.path, "train", T, 8, Rng(0));
  for (int rep = 0; rep < 5; ++rep) {
    auto b = bs.next();
    REQUIRE(b.frames.shape == Shape{8, T, 3, 64, 64});
    for (auto& [ep, off] : b.source) REQUIRE(off == 0);
    for (int64_t i = 0; i < b.frames.numel(); i += 1013) {
      REQUIRE(b.frames[i] >= 0.0f);
      REQUIRE(b.frames[i] <= 1.0f);
    }
  }
}

TEST_CASE("batch stream is deterministic under a fixed seed") {
  TempDir tmp;
  const int64_t T = 12;
  for (int64_t i = 0; i < 6; ++i) {
    Rng rng(100 + (uint64_t)i);
    write_episode(tmp.path, "train", i, simulate_balls(BallMode::Interaction, T, rng));
  }
  tiny_manifest(tmp.path, 6, T);
  BatchStream<float> s1(tmp.path, "train", 6, 4, Rng(42));
  BatchStream<float> s2(tmp.path, "train", 6, 4, Rng(42));
  for (int rep = 0; rep < 4; ++rep) {
    auto b1 = s1.next(), b2 = s2.next();
    REQUIRE(b1.source == b2.source);
    REQUIRE(b1.frames.data == b2.frames.data);
  }
}

TEST_CASE("batch stream rejects overlong windows and draws uniform offsets") {
  TempDir tmp;
  const int64_t T = 20, L = 16;  // offsets 0..4
  for (int64_t i = 0; i < 3; ++i) {
    Rng rng(200 + (uint64_t)i);
    write_episode(tmp.path, "train", i, simulate_balls(BallMode::Interaction, T, rng));
  }
  tiny_manifest(tmp.path, 3, T);
  REQUIRE_THROWS_AS(BatchStream<float>(tmp.path, "train", T + 1, 2, Rng(0)), std::invalid_argument);

  BatchStream<float> bs(tmp.path, "train", L, 50, Rng(314));
  std::array<int64_t, 5> hist{};
  const int64_t draws = 100000;
  for (int64_t got = 0; got < draws;) {
    auto b = bs.next();
    for (auto& [ep, off] : b.source) {
      hist[(size_t)off]++;
      ++got;
    }
  }
  // chi-square against uniform over 5 bins, df=4, p=0.01 critical value 13.277
  double expected = (double)draws / 5.0, chi2 = 0;
  for (int64_t h : hist) chi2 += ((double)h - expected) * ((double)h - expected) / expected;
  REQUIRE(chi2 < 13.277);
}

TEST_CASE("manifest round-trips and validates the format version") {
  TempDir tmp;
  DatasetManifest m = tiny_manifest(tmp.path, 2, 8);
  m.checksum = "deadbeef";
  write_manifest(tmp.path, m);
  DatasetManifest back = read_manifest(tmp.path);
  REQUIRE(back.setting == m.setting);
  REQUIRE(back.split_sizes == m.split_sizes);
  REQUIRE(back.seeds == m.seeds);
  REQUIRE(back.checksum == "deadbeef");

  json j = m.to_json();
  j["format_version"] = "other";
  REQUIRE_THROWS_AS(DatasetManifest::from_json(j), CorruptDataset);
}
