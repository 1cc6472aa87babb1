#pragma once

#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <json.hpp>

#include "gswm/core/rng.hpp"
#include "gswm/data/episode.hpp"

namespace gswm {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kDatasetFormatVersion = "gswm-dataset-1";

struct CorruptDataset : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetManifest {
  std::string setting;
  std::string format_version = kDatasetFormatVersion;
  int64_t image_hw = 64;
  int64_t episode_len = 0;
  std::map<std::string, int64_t> split_sizes;
  std::map<std::string, std::vector<uint64_t>> seeds;
  std::string checksum;  // aggregate crc32 over per-episode frame crcs, hex

  json to_json() const {
    json j;
    j["format_version"] = format_version;
    j["setting"] = setting;
    j["image_hw"] = image_hw;
    j["episode_len"] = episode_len;
    j["split_sizes"] = split_sizes;
    j["seeds"] = seeds;
    j["checksum"] = checksum;
    return j;
  }
  static DatasetManifest from_json(const json& j) {
    DatasetManifest m;
    m.format_version = j.at("format_version").get<std::string>();
    if (m.format_version != kDatasetFormatVersion)
      throw CorruptDataset("unsupported dataset format version: " + m.format_version);
    m.setting = j.at("setting").get<std::string>();
    m.image_hw = j.at("image_hw").get<int64_t>();
    m.episode_len = j.at("episode_len").get<int64_t>();
    m.split_sizes = j.at("split_sizes").get<std::map<std::string, int64_t>>();
    m.seeds = j.at("seeds").get<std::map<std::string, std::vector<uint64_t>>>();
    m.checksum = j.at("checksum").get<std::string>();
    return m;
  }
};

inline fs::path episode_dir(const fs::path& root, const std::string& split, int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "episode_%06lld", (long long)index);
  return root / split / buf;
}

inline uint32_t crc32_bytes(const uint8_t* data, size_t n) {
  return (uint32_t)::crc32(0L, data, (uInt)n);
}

inline json annotations_to_json(const std::vector<std::vector<ObjectAnnotation>>& anns) {
  json out = json::array();
  for (auto& frame : anns) {
    json f = json::array();
    for (auto& a : frame) {
      f.push_back({{"id", a.id},
                   {"center", {a.center[0], a.center[1]}},
                   {"bbox_hw", {a.bbox_hw[0], a.bbox_hw[1]}},
                   {"color", a.color},
                   {"layer", a.layer}});
    }
    out.push_back(std::move(f));
  }
  return out;
}

inline std::vector<std::vector<ObjectAnnotation>> annotations_from_json(const json& j) {
  std::vector<std::vector<ObjectAnnotation>> out;
  for (auto& frame : j) {
    std::vector<ObjectAnnotation> f;
    for (auto& a : frame) {
      ObjectAnnotation ann;
      ann.id = a.at("id").get<int64_t>();
      ann.center = {a.at("center")[0].get<double>(), a.at("center")[1].get<double>()};
      ann.bbox_hw = {a.at("bbox_hw")[0].get<double>(), a.at("bbox_hw")[1].get<double>()};
      ann.color = a.at("color").get<int64_t>();
      ann.layer = a.at("layer").get<int64_t>();
      f.push_back(ann);
    }
    out.push_back(std::move(f));
  }
  return out;
}

// Layout: root/split/episode_NNNNNN/{frames.bin, meta.json}
//   frames.bin  raw uint8, [T][3][H][W], row-major
//   meta.json   annotations, seed, setting, crc of frames.bin
inline void write_episode(const fs::path& root, const std::string& split, int64_t index,
                          const Episode& ep) {
  fs::path dir = episode_dir(root, split, index);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("write_episode: cannot create " + dir.string() + ": " + ec.message());

  {
    std::ofstream f(dir / "frames.bin", std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_episode: cannot open " + (dir / "frames.bin").string());
    f.write((const char*)ep.frames.ptr(), (std::streamsize)ep.frames.numel());
    if (!f) throw std::runtime_error("write_episode: short write to " + (dir / "frames.bin").string());
  }
  json meta;
  meta["format_version"] = kDatasetFormatVersion;
  meta["setting"] = ep.setting;
  meta["seed"] = ep.seed;
  meta["tag"] = ep.tag;
  meta["shape"] = {ep.frames.shape[0], ep.frames.shape[1], ep.frames.shape[2], ep.frames.shape[3]};
  meta["frames_crc32"] = crc32_bytes(ep.frames.ptr(), (size_t)ep.frames.numel());
  meta["annotations"] = annotations_to_json(ep.annotations);
  std::ofstream f(dir / "meta.json", std::ios::trunc);
  if (!f) throw std::runtime_error("write_episode: cannot open " + (dir / "meta.json").string());
  f << meta.dump(1);
  if (!f) throw std::runtime_error("write_episode: short write to " + (dir / "meta.json").string());
}

inline Episode read_episode(const fs::path& root, const std::string& split, int64_t index) {
  fs::path dir = episode_dir(root, split, index);
  std::ifstream mf(dir / "meta.json");
  if (!mf) throw CorruptDataset("missing meta.json for " + dir.string());
  json meta = json::parse(mf, nullptr, /*allow_exceptions=*/true);

  Episode ep;
  ep.setting = meta.at("setting").get<std::string>();
  ep.seed = meta.at("seed").get<uint64_t>();
  ep.tag = meta.value("tag", "");
  auto sh = meta.at("shape");
  Shape shape = {sh[0].get<int64_t>(), sh[1].get<int64_t>(), sh[2].get<int64_t>(), sh[3].get<int64_t>()};
  ep.frames = Tensor<uint8_t>(shape);
  std::ifstream ff(dir / "frames.bin", std::ios::binary);
  if (!ff) throw CorruptDataset("missing frames.bin for " + dir.string());
  ff.read((char*)ep.frames.ptr(), (std::streamsize)ep.frames.numel());
  if (ff.gcount() != (std::streamsize)ep.frames.numel())
    throw CorruptDataset("truncated frames.bin for " + dir.string());
  uint32_t crc = crc32_bytes(ep.frames.ptr(), (size_t)ep.frames.numel());
  if (crc != meta.at("frames_crc32").get<uint32_t>())
    throw CorruptDataset("frame checksum mismatch for " + dir.string());
  ep.annotations = annotations_from_json(meta.at("annotations"));
  if ((int64_t)ep.annotations.size() != shape[0])
    throw CorruptDataset("annotation count mismatch for " + dir.string());
  return ep;
}

inline void write_manifest(const fs::path& root, const DatasetManifest& m) {
  fs::create_directories(root);
  std::ofstream f(root / "manifest.json", std::ios::trunc);
  f << m.to_json().dump(1);
}

inline DatasetManifest read_manifest(const fs::path& root) {
  std::ifstream f(root / "manifest.json");
  if (!f) throw CorruptDataset("missing manifest at " + root.string());
  return DatasetManifest::from_json(json::parse(f));
}

// One batch of random subsequences. Frames are float in [0,1], [B, L, 3, H, W].
template <class S>
struct Batch {
  Tensor<S> frames;
  std::vector<std::vector<std::vector<ObjectAnnotation>>> annotations;  // [B][L][objects]
  std::vector<std::pair<int64_t, int64_t>> source;                      // (episode, offset)
};

// Streaming reader: uniformly random episode and start offset per element.
template <class S>
class BatchStream {
 public:
  BatchStream(fs::path root, std::string split, int64_t seq_len, int64_t batch, Rng rng)
      : root_(std::move(root)), split_(std::move(split)), seq_len_(seq_len), batch_(batch),
        rng_(rng) {
    manifest_ = read_manifest(root_);
    n_episodes_ = manifest_.split_sizes.at(split_);
    if (seq_len_ > manifest_.episode_len)
      throw std::invalid_argument("batch_stream: seq_len exceeds episode length");
  }

  const DatasetManifest& manifest() const { return manifest_; }

  void set_seq_len(int64_t seq_len) {
    if (seq_len > manifest_.episode_len)
      throw std::invalid_argument("batch_stream: seq_len exceeds episode length");
    seq_len_ = seq_len;
  }

  Batch<S> next() {
    int64_t H = manifest_.image_hw, W = manifest_.image_hw;
    Batch<S> out;
    out.frames = Tensor<S>(Shape{batch_, seq_len_, 3, H, W});
    out.annotations.resize((size_t)batch_);
    for (int64_t b = 0; b < batch_; ++b) {
      int64_t epi = rng_.uniform_int(n_episodes_);
      int64_t max_off = manifest_.episode_len - seq_len_;
      int64_t off = max_off > 0 ? rng_.uniform_int(max_off + 1) : 0;
      out.source.push_back({epi, off});
      const Episode& ep = cached_episode(epi);
      const uint8_t* src = ep.frames.ptr() + off * 3 * H * W;
      S* dst = out.frames.ptr() + b * seq_len_ * 3 * H * W;
      for (int64_t i = 0; i < seq_len_ * 3 * H * W; ++i) dst[i] = (S)src[i] / S(255);
      out.annotations[(size_t)b].assign(ep.annotations.begin() + off,
                                        ep.annotations.begin() + off + seq_len_);
    }
    return out;
  }

  Rng& rng() { return rng_; }

 private:
  const Episode& cached_episode(int64_t index) {
    auto it = cache_.find(index);
    if (it != cache_.end()) return it->second;
    if (cache_.size() >= 256) cache_.clear();  // crude bound; episodes are small
    auto [it2, _] = cache_.emplace(index, read_episode(root_, split_, index));
    return it2->second;
  }

  fs::path root_;
  std::string split_;
  int64_t seq_len_, batch_, n_episodes_ = 0;
  Rng rng_;
  DatasetManifest manifest_;
  std::map<int64_t, Episode> cache_;
};

}  // namespace gswm
