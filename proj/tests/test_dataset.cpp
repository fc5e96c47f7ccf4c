#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>

#include "facke/dataset.hpp"
#include "facke/toyfaces.hpp"
#include "helpers.hpp"

using namespace facke;
namespace fs = std::filesystem;

TEST_CASE("ingestion counts identities and images") {
  auto root = testutil::scratch_dir() + "/ingest2x2";
  make_toy_corpus(root, 2, 2, 16, 3);
  auto ds = ingest_dataset(root, 16);
  CHECK(ds.num_identities() == 2);
  CHECK(ds.num_images() == 4);
  CHECK(ds.resolution == 16);
  CHECK(ds.image(0, 0).sizes() == torch::IntArrayRef({3, 16, 16}));
}

TEST_CASE("empty directory fails ingestion") {
  auto root = testutil::scratch_dir() + "/ingest_empty";
  fs::create_directories(root);
  CHECK_THROWS_AS(ingest_dataset(root, 16), IngestError);
  CHECK_THROWS_AS(ingest_dataset(root + "/missing", 16), IngestError);
}

TEST_CASE("repeated ingestion yields identical ordering") {
  auto root = testutil::scratch_dir() + "/ingest2x2";
  make_toy_corpus(root, 2, 2, 16, 3);
  auto a = ingest_dataset(root, 16);
  auto b = ingest_dataset(root, 16);
  CHECK(a.identities == b.identities);
  CHECK(a.image_refs == b.image_refs);
}

TEST_CASE("intra sampler invariants") {
  const auto& ds = testutil::shared_dataset();
  SamplerConfig cfg{4, 11, 1, true};

  SECTION("identity grouping pairs distinct images of one identity") {
    for (uint64_t step = 0; step < 50; ++step)
      for (const auto& p : sample_intra_batch(ds, cfg, step)) {
        CHECK(p.source_id_index == p.target_id_index);
        CHECK(p.source_img_index != p.target_img_index);
        CHECK(p.mode == PairMode::kIntra);
      }
  }

  SECTION("no identity grouping duplicates one image pixelwise") {
    SamplerConfig noig = cfg;
    noig.identity_grouping = false;
    for (uint64_t step = 0; step < 20; ++step)
      for (const auto& p : sample_intra_batch(ds, noig, step)) {
        CHECK(p.source_img_index == p.target_img_index);
        CHECK(torch::equal(p.source, p.target));
      }
  }

  SECTION("fixed (seed, step) is deterministic") {
    auto a = sample_intra_batch(ds, cfg, 17);
    auto b = sample_intra_batch(ds, cfg, 17);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].source_id_index == b[i].source_id_index);
      CHECK(a[i].source_img_index == b[i].source_img_index);
      CHECK(a[i].target_img_index == b[i].target_img_index);
      CHECK(torch::equal(a[i].source, b[i].source));
    }
  }

  SECTION("worker count does not change the draw") {
    SamplerConfig w4 = cfg;
    w4.num_workers = 4;
    auto a = sample_intra_batch(ds, cfg, 23);
    auto b = sample_intra_batch(ds, w4, 23);
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].source_img_index == b[i].source_img_index);
      CHECK(a[i].target_img_index == b[i].target_img_index);
    }
  }
}

TEST_CASE("singleton identity falls back to a duplicated pair") {
  auto root = testutil::scratch_dir() + "/singleton";
  make_toy_corpus(root, 2, 1, 16, 5);
  auto ds = ingest_dataset(root, 16);
  SamplerConfig cfg{2, 0, 1, true};
  for (uint64_t step = 0; step < 20; ++step)
    for (const auto& p : sample_intra_batch(ds, cfg, step)) {
      CHECK(p.source_img_index == p.target_img_index);
      CHECK(torch::equal(p.source, p.target));
    }
}

TEST_CASE("empty dataset cannot be sampled") {
  FaceDataset ds;
  CHECK_THROWS_AS(sample_intra_batch(ds, {2, 0, 1, true}, 0), SamplingError);
}

TEST_CASE("inter sampler invariants") {
  const auto& ds = testutil::shared_dataset();
  SamplerConfig cfg{4, 13, 1, true};

  SECTION("identities always differ") {
    for (uint64_t step = 0; step < 50; ++step)
      for (const auto& p : sample_inter_batch(ds, cfg, step)) {
        CHECK(p.source_id_index != p.target_id_index);
        CHECK(p.mode == PairMode::kInter);
      }
  }

  SECTION("two identities always pair A with B") {
    auto root = testutil::scratch_dir() + "/ingest2x2";
    make_toy_corpus(root, 2, 2, 16, 3);
    auto two = ingest_dataset(root, 16);
    for (uint64_t step = 0; step < 30; ++step)
      for (const auto& p : sample_inter_batch(two, {2, 0, 1, true}, step))
        CHECK(p.source_id_index + p.target_id_index == 1);
  }

  SECTION("fewer than two identities fail") {
    auto root = testutil::scratch_dir() + "/one_id";
    make_toy_corpus(root, 1, 2, 16, 5);
    auto one = ingest_dataset(root, 16);
    CHECK_THROWS_AS(sample_inter_batch(one, {2, 0, 1, true}, 0), SamplingError);
  }

  SECTION("fixed (seed, step) is deterministic") {
    auto a = sample_inter_batch(ds, cfg, 31);
    auto b = sample_inter_batch(ds, cfg, 31);
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].source_id_index == b[i].source_id_index);
      CHECK(a[i].target_id_index == b[i].target_id_index);
    }
  }
}

TEST_CASE("inter pairings are uniform over unordered identity pairs") {
  // Oracle: sid uniform over 4, tid uniform over the remaining 3, so each of
  // the C(4,2)=6 unordered pairs has probability 1/6. Chi-square-style 3-sigma
  // bound on each binomial count.
  auto root = testutil::scratch_dir() + "/four_ids";
  make_toy_corpus(root, 4, 2, 16, 21);
  auto ds = ingest_dataset(root, 16);
  SamplerConfig cfg{1, 99, 1, true};
  std::map<std::pair<int64_t, int64_t>, int64_t> counts;
  const int64_t n = 10000;
  for (int64_t step = 0; step < n; ++step) {
    auto p = sample_inter_batch(ds, cfg, step)[0];
    auto key = std::minmax(p.source_id_index, p.target_id_index);
    counts[{key.first, key.second}] += 1;
  }
  REQUIRE(counts.size() == 6);
  double p = 1.0 / 6.0;
  double sigma = std::sqrt(n * p * (1 - p));
  for (const auto& [pair, c] : counts)
    CHECK(std::abs(c - n * p) <= 3.0 * sigma);
}

TEST_CASE("id cache build, round-trip and invalidation") {
  auto root = testutil::scratch_dir() + "/cache2x2";
  make_toy_corpus(root, 2, 2, 16, 8);
  auto ds = ingest_dataset(root, 16);
  auto extract = [](const torch::Tensor& img) {
    auto v = img.flatten().slice(0, 0, 8) + 2.0;  // nonzero, deterministic
    return v / v.norm();
  };
  auto cache = build_id_cache(ds, extract, 0xABCDu);
  REQUIRE(cache.vectors.size() == 4);
  for (const auto& [ref, v] : cache.vectors)
    CHECK(std::abs(v.norm().item<float>() - 1.0f) <= 1e-5f);

  auto path = testutil::scratch_dir() + "/test.idcache";
  save_id_cache(cache, path);
  auto loaded = load_id_cache(path, 0xABCDu);
  REQUIRE(loaded.vectors.size() == cache.vectors.size());
  for (const auto& [ref, v] : cache.vectors)
    CHECK(torch::equal(loaded.vectors.at(ref), v));  // bitwise

  CHECK_THROWS_WITH(load_id_cache(path, 0x1234u),
                    Catch::Matchers::ContainsSubstring("fingerprint mismatch") &&
                        Catch::Matchers::ContainsSubstring("rebuild required"));
  CHECK_THROWS_AS(load_id_cache(path + ".missing", 0xABCDu), CacheError);
}

TEST_CASE("non-unit extractor output is rejected by the cache builder") {
  auto root = testutil::scratch_dir() + "/cache2x2";
  auto ds = ingest_dataset(root, 16);
  auto bad = [](const torch::Tensor& img) { return img.flatten().slice(0, 0, 8) * 3.0; };
  CHECK_THROWS_AS(build_id_cache(ds, bad, 1), CacheError);
}
