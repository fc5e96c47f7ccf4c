#ifndef FACKE_TESTS_HELPERS_HPP
#define FACKE_TESTS_HELPERS_HPP

#include <filesystem>
#include <string>

#include "facke/dataset.hpp"
#include "facke/identity.hpp"
#include "facke/toyfaces.hpp"

namespace testutil {

inline std::string scratch_dir() {
  auto dir = std::filesystem::absolute("facke_test_scratch").string();
  std::filesystem::create_directories(dir);
  return dir;
}

// 6 identities x 4 images at 32x32, generated once per process.
inline const facke::FaceDataset& shared_dataset() {
  static facke::FaceDataset ds = [] {
    auto root = scratch_dir() + "/corpus32";
    facke::make_toy_corpus(root, 6, 4, 32, 7);
    return facke::ingest_dataset(root, 32);
  }();
  return ds;
}

// Small corpus at 16x16 for training smoke tests.
inline const facke::FaceDataset& tiny_dataset() {
  static facke::FaceDataset ds = [] {
    auto root = scratch_dir() + "/corpus16";
    facke::make_toy_corpus(root, 4, 3, 16, 9);
    return facke::ingest_dataset(root, 16);
  }();
  return ds;
}

inline facke::ExtractorConfig small_extractor_config(uint64_t seed, int64_t resolution) {
  facke::ExtractorConfig cfg;
  cfg.embed_dim = 32;
  cfg.base_channels = 8;
  cfg.resolution = resolution;
  cfg.iterations = 400;
  cfg.batch_size = 8;
  cfg.seed = seed;
  return cfg;
}

// One trained extractor shared by the tests that need separable embeddings.
inline facke::IdentityExtractor& shared_extractor() {
  static facke::IdentityExtractor ex = [] {
    auto trained = facke::train_desk_extractor(shared_dataset(), small_extractor_config(1, 32));
    return trained.extractor;
  }();
  return ex;
}

inline facke::IdCache& shared_cache() {
  static facke::IdCache cache = facke::precompute_id_vectors(shared_dataset(), shared_extractor());
  return cache;
}

}  // namespace testutil

#endif
