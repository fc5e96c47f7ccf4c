#ifndef FACKE_DATASET_HPP
#define FACKE_DATASET_HPP

#include <torch/torch.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "facke/common.hpp"
#include "facke/image_io.hpp"

namespace facke {

namespace fs = std::filesystem;

enum class PairMode { kIntra, kInter };

struct BatchPair {
  torch::Tensor source;
  torch::Tensor target;
  std::string source_identity;
  std::string target_identity;
  int64_t source_id_index = -1;
  int64_t target_id_index = -1;
  int64_t source_img_index = -1;
  int64_t target_img_index = -1;
  PairMode mode = PairMode::kIntra;
};

struct SamplerConfig {
  int64_t batch_size = 4;
  uint64_t seed = 0;
  int64_t num_workers = 1;
  bool identity_grouping = true;
};

// Immutable after ingestion; identity and image order are lexicographic, so
// ingesting the same tree twice yields identical indices.
class FaceDataset {
 public:
  std::vector<std::string> identities;
  std::vector<std::vector<std::string>> image_refs;  // "<identity>/<file>"
  std::vector<std::vector<torch::Tensor>> images;
  int resolution = 0;
  std::string root;

  int64_t num_identities() const { return static_cast<int64_t>(identities.size()); }

  int64_t num_images() const {
    int64_t n = 0;
    for (const auto& v : image_refs) n += static_cast<int64_t>(v.size());
    return n;
  }

  int64_t images_of(int64_t identity_index) const {
    return static_cast<int64_t>(image_refs[identity_index].size());
  }

  const torch::Tensor& image(int64_t identity_index, int64_t image_index) const {
    return images[identity_index][image_index];
  }
};

inline FaceDataset ingest_dataset(const std::string& root_path, int resolution) {
  if (!fs::is_directory(root_path)) throw IngestError("corpus root is not a directory: " + root_path);
  FaceDataset ds;
  ds.resolution = resolution;
  ds.root = root_path;

  std::vector<std::string> identity_dirs;
  for (const auto& entry : fs::directory_iterator(root_path))
    if (entry.is_directory()) identity_dirs.push_back(entry.path().filename().string());
  std::sort(identity_dirs.begin(), identity_dirs.end());
  if (identity_dirs.empty()) throw IngestError("no identity subdirectories under: " + root_path);

  for (const auto& name : identity_dirs) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root_path) / name))
      if (entry.is_regular_file()) files.push_back(entry.path().filename().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IngestError("identity '" + name + "' has no images");

    ds.identities.push_back(name);
    ds.image_refs.emplace_back();
    ds.images.emplace_back();
    for (const auto& f : files) {
      ds.image_refs.back().push_back(name + "/" + f);
      ds.images.back().push_back(load_face((fs::path(root_path) / name / f).string(), resolution));
    }
  }
  return ds;
}

namespace detail {

inline int64_t draw(std::mt19937_64& rng, int64_t n) {
  return static_cast<int64_t>(std::uniform_int_distribution<uint64_t>(0, n - 1)(rng));
}

// b identities, without replacement when possible.
inline std::vector<int64_t> draw_identities(std::mt19937_64& rng, int64_t num_ids, int64_t b) {
  std::vector<int64_t> out;
  out.reserve(b);
  if (b <= num_ids) {
    std::vector<int64_t> idx(num_ids);
    std::iota(idx.begin(), idx.end(), 0);
    for (int64_t i = 0; i < b; ++i) {
      std::swap(idx[i], idx[i + draw(rng, num_ids - i)]);
      out.push_back(idx[i]);
    }
  } else {
    for (int64_t i = 0; i < b; ++i) out.push_back(draw(rng, num_ids));
  }
  return out;
}

}  // namespace detail

inline std::vector<BatchPair> sample_intra_batch(const FaceDataset& ds, const SamplerConfig& cfg,
                                                 uint64_t step) {
  if (ds.num_identities() == 0) throw SamplingError("empty dataset");
  std::mt19937_64 rng(mix_seed(cfg.seed, step, 0x11u));
  std::vector<BatchPair> batch;
  for (int64_t id : detail::draw_identities(rng, ds.num_identities(), cfg.batch_size)) {
    int64_t n = ds.images_of(id);
    int64_t si, ti;
    if (cfg.identity_grouping && n >= 2) {
      si = detail::draw(rng, n);
      ti = detail::draw(rng, n - 1);
      if (ti >= si) ++ti;  // distinct images of one person
    } else {
      // Singleton identities and non-IG sampling duplicate one image.
      si = ti = detail::draw(rng, n);
    }
    batch.push_back({ds.image(id, si), ds.image(id, ti), ds.identities[id], ds.identities[id], id,
                     id, si, ti, PairMode::kIntra});
  }
  return batch;
}

inline std::vector<BatchPair> sample_inter_batch(const FaceDataset& ds, const SamplerConfig& cfg,
                                                 uint64_t step) {
  if (ds.num_identities() < 2) throw SamplingError("inter-ID sampling needs >= 2 identities");
  std::mt19937_64 rng(mix_seed(cfg.seed, step, 0x22u));
  std::vector<BatchPair> batch;
  for (int64_t i = 0; i < cfg.batch_size; ++i) {
    int64_t sid = detail::draw(rng, ds.num_identities());
    int64_t tid = detail::draw(rng, ds.num_identities() - 1);
    if (tid >= sid) ++tid;
    int64_t si = detail::draw(rng, ds.images_of(sid));
    int64_t ti = detail::draw(rng, ds.images_of(tid));
    batch.push_back({ds.image(sid, si), ds.image(tid, ti), ds.identities[sid], ds.identities[tid],
                     sid, tid, si, ti, PairMode::kInter});
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Identity vector cache (.idcache)

struct IdCache {
  std::map<std::string, torch::Tensor> vectors;  // image ref -> unit-norm vector
  uint64_t extractor_fingerprint = 0;
};

inline IdCache build_id_cache(const FaceDataset& ds,
                              const std::function<torch::Tensor(const torch::Tensor&)>& extract,
                              uint64_t extractor_fingerprint) {
  IdCache cache;
  cache.extractor_fingerprint = extractor_fingerprint;
  for (int64_t id = 0; id < ds.num_identities(); ++id)
    for (int64_t i = 0; i < ds.images_of(id); ++i) {
      auto v = extract(ds.image(id, i)).detach().to(torch::kFloat32).contiguous();
      auto norm = v.norm().item<float>();
      if (std::abs(norm - 1.0f) > 1e-5f)
        throw CacheError("extractor produced a non-unit vector for " + ds.image_refs[id][i]);
      cache.vectors[ds.image_refs[id][i]] = v;
    }
  return cache;
}

inline void save_id_cache(const IdCache& cache, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CacheError("cannot write id cache: " + path);
  out.write("FACKEIDC", 8);
  uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&cache.extractor_fingerprint), sizeof(uint64_t));
  uint64_t count = cache.vectors.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& [ref, vec] : cache.vectors) {
    uint32_t len = static_cast<uint32_t>(ref.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(ref.data(), len);
    uint32_t dim = static_cast<uint32_t>(vec.numel());
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    out.write(reinterpret_cast<const char*>(vec.data_ptr<float>()), dim * sizeof(float));
  }
}

inline IdCache load_id_cache(const std::string& path, uint64_t expected_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CacheError("cannot read id cache: " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 8) != "FACKEIDC") throw CacheError("not an id cache file: " + path);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != 1) throw CacheError("unsupported id cache version");
  IdCache cache;
  in.read(reinterpret_cast<char*>(&cache.extractor_fingerprint), sizeof(uint64_t));
  if (cache.extractor_fingerprint != expected_fingerprint)
    throw CacheError("id cache invalid: extractor fingerprint mismatch (cache " +
                     hex64(cache.extractor_fingerprint) + ", extractor " +
                     hex64(expected_fingerprint) + "); rebuild required");
  uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string ref(len, '\0');
    in.read(ref.data(), len);
    uint32_t dim = 0;
    in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    auto vec = torch::empty({static_cast<int64_t>(dim)}, torch::kFloat32);
    in.read(reinterpret_cast<char*>(vec.data_ptr<float>()), dim * sizeof(float));
    cache.vectors[ref] = vec;
  }
  if (!in) throw CacheError("truncated id cache: " + path);
  return cache;
}

}  // namespace facke

#endif
