#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "facke/benchmark.hpp"
#include "helpers.hpp"

using namespace facke;
namespace fs = std::filesystem;

namespace {

std::vector<EvalPair> small_pairs() {
  return build_eval_pairs(testutil::shared_dataset(), 6, 123);
}

}  // namespace

TEST_CASE("eval pairing is seeded and two-class") {
  const auto& ds = testutil::shared_dataset();
  auto a = build_eval_pairs(ds, 6, 123);
  auto b = build_eval_pairs(ds, 6, 123);
  REQUIRE(a.size() == 12);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].source_id == b[i].source_id);
    CHECK(a[i].target_id == b[i].target_id);
    CHECK(a[i].mode == b[i].mode);
  }
  int intra = 0, inter = 0;
  for (const auto& p : a) {
    if (p.mode == PairMode::kIntra) {
      ++intra;
      CHECK(p.source_id == p.target_id);
      CHECK(p.source_img == p.target_img);  // self-swap pairs
    } else {
      ++inter;
      CHECK(p.source_id != p.target_id);
    }
  }
  CHECK(intra == 6);
  CHECK(inter == 6);

  FaceDataset tiny;
  CHECK_THROWS_AS(build_eval_pairs(tiny, 4, 1), SamplingError);
}

TEST_CASE("eval pairs persist through the text format") {
  const auto& ds = testutil::shared_dataset();
  auto pairs = small_pairs();
  auto path = testutil::scratch_dir() + "/pairs.txt";
  save_eval_pairs(pairs, ds, path);
  auto loaded = load_eval_pairs(ds, path);
  REQUIRE(loaded.size() == pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    CHECK(loaded[i].source_id == pairs[i].source_id);
    CHECK(loaded[i].source_img == pairs[i].source_img);
    CHECK(loaded[i].target_id == pairs[i].target_id);
    CHECK(loaded[i].target_img == pairs[i].target_img);
    CHECK(loaded[i].mode == pairs[i].mode);
  }
}

TEST_CASE("trivial models expose the metric semantics") {
  const auto& ds = testutil::shared_dataset();
  auto& train_ex = testutil::shared_extractor();
  auto pairs = small_pairs();

  // independent eval extractor (different seed and width)
  static IdentityExtractor eval_ex = [] {
    auto cfg = testutil::small_extractor_config(2, 32);
    cfg.base_channels = 12;
    return train_desk_extractor(testutil::shared_dataset(), cfg).extractor;
  }();

  SECTION("identity model: zero recon, baseline retrieval") {
    SwapFn ident = [](const torch::Tensor&, const torch::Tensor& target) { return target; };
    auto m = evaluate_model(ident, pairs, ds, train_ex, eval_ex, "identity");
    CHECK(m.recon_loss == Catch::Approx(0.0).margin(1e-7));

    double baseline = 0;
    int64_t n = 0;
    for (const auto& p : pairs)
      if (p.mode == PairMode::kInter) {
        baseline += id_retrieval_distance(ds.image(p.target_id, p.target_img),
                                          ds.image(p.source_id, p.source_img), eval_ex);
        ++n;
      }
    CHECK(m.id_retrieval == Catch::Approx(baseline / n).margin(1e-7));
    CHECK_FALSE(m.extractor_warning);
  }

  SECTION("copy-source model: zero identity metrics, maximal recon") {
    SwapFn copy = [](const torch::Tensor& source, const torch::Tensor&) { return source; };
    SwapFn ident = [](const torch::Tensor&, const torch::Tensor& target) { return target; };
    auto m_copy = evaluate_model(copy, pairs, ds, train_ex, eval_ex);
    auto m_ident = evaluate_model(ident, pairs, ds, train_ex, eval_ex);
    CHECK(m_copy.id_loss <= 1e-6);
    CHECK(m_copy.id_retrieval <= 1e-5);
    CHECK(m_copy.recon_loss >= m_ident.recon_loss);  // why all three metrics are needed
  }

  SECTION("same extractor on both roles raises the warning flag") {
    SwapFn ident = [](const torch::Tensor&, const torch::Tensor& target) { return target; };
    auto m = evaluate_model(ident, pairs, ds, train_ex, train_ex);
    CHECK(m.extractor_warning);
  }

  SECTION("one-class pairings are rejected") {
    std::vector<EvalPair> intra_only(pairs.begin(), pairs.begin() + 6);
    SwapFn ident = [](const torch::Tensor&, const torch::Tensor& target) { return target; };
    CHECK_THROWS_AS(evaluate_model(ident, intra_only, ds, train_ex, eval_ex),
                    std::invalid_argument);
  }
}

TEST_CASE("face matrix layout") {
  const auto& ds = testutil::shared_dataset();
  std::vector<torch::Tensor> faces;
  for (int64_t id = 0; id < 8 && id < ds.num_identities(); ++id) faces.push_back(ds.image(id, 0));
  while (faces.size() < 8) faces.push_back(ds.image(0, 1));
  SwapFn ident = [](const torch::Tensor&, const torch::Tensor& target) { return target; };

  SECTION("k = 8 gives a 9x9 grid with original borders and self-swap diagonal") {
    auto grid = face_matrix(ident, faces);
    int64_t res = ds.resolution;
    CHECK(grid.sizes() == torch::IntArrayRef({3, 9 * res, 9 * res}));
    auto cell = [&](int64_t r, int64_t c) {
      return grid.slice(1, r * res, (r + 1) * res).slice(2, c * res, (c + 1) * res);
    };
    for (int64_t i = 0; i < 8; ++i) {
      CHECK(torch::equal(cell(0, i + 1), faces[i]));  // top row: originals
      CHECK(torch::equal(cell(i + 1, 0), faces[i]));  // left column: originals
      CHECK(torch::equal(cell(i + 1, i + 1), faces[i]));  // identity-model diagonal
    }
  }

  SECTION("a failing cell renders as a placeholder and the grid completes") {
    int calls = 0;
    SwapFn flaky = [&](const torch::Tensor&, const torch::Tensor& target) -> torch::Tensor {
      if (++calls == 3) throw std::runtime_error("boom");
      return target;
    };
    std::vector<torch::Tensor> two{faces[0], faces[1]};
    auto grid = face_matrix(flaky, two);
    CHECK(grid.isfinite().all().item<bool>());
    CHECK(grid.sizes() == torch::IntArrayRef({3, 3 * ds.resolution, 3 * ds.resolution}));
  }

  SECTION("fewer than two faces is rejected") {
    CHECK_THROWS_AS(face_matrix(ident, {faces[0]}), std::invalid_argument);
  }
}

TEST_CASE("grid reports render and persist") {
  AblationGrid grid;
  grid.axis = "fm";
  AblationCell ok;
  ok.name = "simswap-wfm";
  ok.metrics.recon_loss = 0.125;
  ok.metrics.id_loss = 0.5;
  ok.metrics.id_retrieval = 0.75;
  AblationCell bad;
  bad.name = "simswap-nfm";
  bad.failed = true;
  bad.error = "diverged";
  grid.cells = {ok, bad};

  auto table = render_grid_table(grid);
  CHECK(table.find("simswap-wfm") != std::string::npos);
  CHECK(table.find("0.125") != std::string::npos);
  CHECK(table.find("FAILED: diverged") != std::string::npos);

  auto run_dir = testutil::scratch_dir() + "/grid_run";
  write_grid_reports(grid, run_dir);
  CHECK(fs::exists(fs::path(run_dir) / "reports" / "ablation.txt"));
  CHECK(fs::exists(fs::path(run_dir) / "reports" / "ablation.jsonl"));
}

TEST_CASE("fm ablation emits the eight Table-2 cells deterministically") {
  const auto& ds = testutil::tiny_dataset();
  torch::manual_seed(55);
  static IdentityExtractor ex(testutil::small_extractor_config(1, 16));
  auto cache = precompute_id_vectors(ds, ex);
  auto pairs = build_eval_pairs(ds, 2, 5);

  Config base;
  base.set("train.iterations", "2");
  base.set("train.eval_every", "2");
  base.set("dataset.batch_size", "2");
  base.set("dataset.resolution", "16");
  base.set("gan.base_channels", "8");
  base.set("gan.num_id_blocks", "1");
  base.set("disc.base_channels", "8");
  base.set("extractor.embed_dim", "32");

  auto grid1 = run_fm_ablation(base, ds, ex, ex, cache, pairs);
  auto grid2 = run_fm_ablation(base, ds, ex, ex, cache, pairs);
  REQUIRE(grid1.cells.size() == 8);
  std::vector<std::string> expected{"simswap-ofm",    "simswap-wfm",    "simswap-wfm_bar",
                                    "simswap-nfm",    "simswap-ig-ofm", "simswap-ig-wfm",
                                    "simswap-ig-wfm_bar", "simswap-ig-nfm"};
  for (size_t i = 0; i < 8; ++i) {
    CHECK(grid1.cells[i].name == expected[i]);
    CHECK_FALSE(grid1.cells[i].failed);
    // deterministic rerun: bit-identical metrics
    CHECK(grid1.cells[i].metrics.recon_loss == grid2.cells[i].metrics.recon_loss);
    CHECK(grid1.cells[i].metrics.id_loss == grid2.cells[i].metrics.id_loss);
    CHECK(grid1.cells[i].metrics.id_retrieval == grid2.cells[i].metrics.id_retrieval);
  }
}

TEST_CASE("ddpm lr ablation emits the five Table-3 rows") {
  const auto& ds = testutil::tiny_dataset();
  torch::manual_seed(56);
  static IdentityExtractor ex(testutil::small_extractor_config(1, 16));
  auto pairs = build_eval_pairs(ds, 2, 5);

  Config base;
  base.set("ablate.axis", "ddpm_lr");
  base.set("train.model", "ddpm");
  base.set("train.iterations", "2");
  base.set("train.eval_every", "2");
  base.set("dataset.batch_size", "2");
  base.set("dataset.resolution", "16");
  base.set("diffusion.resolution", "16");
  base.set("diffusion.base_channels", "8");
  base.set("diffusion.steps", "4");
  base.set("extractor.embed_dim", "32");

  auto run_dir = testutil::scratch_dir() + "/ddpm_grid";
  fs::remove_all(run_dir);
  IdCache cache;  // unused by the ddpm axis
  auto grid = run_ablation(base, ds, ex, ex, cache, pairs, run_dir);
  REQUIRE(grid.cells.size() == 5);
  CHECK(grid.cells[0].name == "pretrained");
  CHECK(grid.cells[1].name == "finetuned-lr1e-4");
  CHECK(grid.cells[2].name == "finetuned-lr5e-5");
  CHECK(grid.cells[3].name == "finetuned-lr1e-5");
  CHECK(grid.cells[4].name == "finetuned-lr5e-6");
  for (const auto& cell : grid.cells) CHECK_FALSE(cell.failed);
  CHECK(fs::exists(fs::path(run_dir) / "reports" / "ablation.txt"));

  CHECK_THROWS_AS(run_ddpm_lr_ablation(base, ds, ex, ex, pairs, ""), std::invalid_argument);

  Config bogus = base;
  bogus.set("ablate.axis", "bogus");
  CHECK_THROWS_AS(run_ablation(bogus, ds, ex, ex, cache, pairs, run_dir), ConfigError);
}
