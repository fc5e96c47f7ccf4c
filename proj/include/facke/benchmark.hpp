#ifndef FACKE_BENCHMARK_HPP
#define FACKE_BENCHMARK_HPP

#include <torch/torch.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facke/common.hpp"
#include "facke/dataset.hpp"
#include "facke/diffusion.hpp"
#include "facke/identity.hpp"
#include "facke/losses.hpp"
#include "facke/train.hpp"

namespace facke {

struct MetricsRecord {
  double recon_loss = 0;    // mean L1 on intra self-swaps
  double id_loss = 0;       // mean identity loss vs source, training extractor
  double id_retrieval = 0;  // mean embedding distance vs source, eval extractor
  std::string model_tag;
  int64_t step = 0;
  bool extractor_warning = false;  // training and eval extractor coincide
};

struct EvalPair {
  int64_t source_id = 0, source_img = 0;
  int64_t target_id = 0, target_img = 0;
  PairMode mode = PairMode::kIntra;
};

// Fixed, seeded evaluation pairing: intra self-swap pairs for reconstruction
// and inter pairs for the identity metrics. Persisted with reports so numbers
// stay comparable across runs.
inline std::vector<EvalPair> build_eval_pairs(const FaceDataset& ds, int64_t pairs_per_class,
                                              uint64_t seed) {
  if (ds.num_identities() < 2) throw SamplingError("evaluation pairing needs >= 2 identities");
  std::mt19937_64 rng(mix_seed(seed, 0, 0x55u));
  std::vector<EvalPair> out;
  for (int64_t i = 0; i < pairs_per_class; ++i) {
    int64_t id = detail::draw(rng, ds.num_identities());
    int64_t img = detail::draw(rng, ds.images_of(id));
    out.push_back({id, img, id, img, PairMode::kIntra});
  }
  for (int64_t i = 0; i < pairs_per_class; ++i) {
    int64_t sid = detail::draw(rng, ds.num_identities());
    int64_t tid = detail::draw(rng, ds.num_identities() - 1);
    if (tid >= sid) ++tid;
    out.push_back({sid, detail::draw(rng, ds.images_of(sid)), tid,
                   detail::draw(rng, ds.images_of(tid)), PairMode::kInter});
  }
  return out;
}

inline void save_eval_pairs(const std::vector<EvalPair>& pairs, const FaceDataset& ds,
                            const std::string& path) {
  std::ofstream out(path);
  for (const auto& p : pairs)
    out << (p.mode == PairMode::kIntra ? "intra" : "inter") << " "
        << ds.image_refs[p.source_id][p.source_img] << " "
        << ds.image_refs[p.target_id][p.target_img] << "\n";
}

inline std::vector<EvalPair> load_eval_pairs(const FaceDataset& ds, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read eval pairs: " + path);
  auto locate = [&](const std::string& ref, int64_t& id, int64_t& img) {
    for (int64_t i = 0; i < ds.num_identities(); ++i)
      for (int64_t j = 0; j < ds.images_of(i); ++j)
        if (ds.image_refs[i][j] == ref) {
          id = i;
          img = j;
          return;
        }
    throw std::runtime_error("eval pair references unknown image: " + ref);
  };
  std::vector<EvalPair> out;
  std::string mode, sref, tref;
  while (in >> mode >> sref >> tref) {
    EvalPair p;
    p.mode = mode == "intra" ? PairMode::kIntra : PairMode::kInter;
    locate(sref, p.source_id, p.source_img);
    locate(tref, p.target_id, p.target_img);
    out.push_back(p);
  }
  return out;
}

// The three paper metrics over a fixed pairing. Reconstruction is measured on
// intra self-swaps only; identity metrics on inter swaps against the source.
inline MetricsRecord evaluate_model(const SwapFn& swap, const std::vector<EvalPair>& pairs,
                                    const FaceDataset& ds, IdentityExtractor& train_ex,
                                    IdentityExtractor& eval_ex, const std::string& tag = "",
                                    int64_t step = 0) {
  bool has_intra = false, has_inter = false;
  for (const auto& p : pairs) (p.mode == PairMode::kIntra ? has_intra : has_inter) = true;
  if (!has_intra || !has_inter)
    throw std::invalid_argument("evaluation pairing must contain both intra and inter pairs");

  MetricsRecord rec;
  rec.model_tag = tag;
  rec.step = step;
  rec.extractor_warning = train_ex->fingerprint() == eval_ex->fingerprint();

  double recon_sum = 0, id_sum = 0, retr_sum = 0;
  int64_t n_intra = 0, n_inter = 0;
  for (const auto& p : pairs) {
    const auto& src = ds.image(p.source_id, p.source_img);
    const auto& tgt = ds.image(p.target_id, p.target_img);
    auto result = swap(src, tgt);
    if (p.mode == PairMode::kIntra) {
      recon_sum += (result - tgt).abs().mean().item<double>();
      ++n_intra;
    } else {
      auto v_r = extract_identity(train_ex, result);
      auto v_s = extract_identity(train_ex, src);
      id_sum += identity_loss(v_r, v_s).item<double>();
      retr_sum += id_retrieval_distance(result, src, eval_ex);
      ++n_inter;
    }
  }
  rec.recon_loss = recon_sum / n_intra;
  rec.id_loss = id_sum / n_inter;
  rec.id_retrieval = retr_sum / n_inter;
  return rec;
}

// (k+1)x(k+1) qualitative grid: cell (i, j) swaps source i onto target j;
// the first row and column show the originals.
inline torch::Tensor face_matrix(const SwapFn& swap, const std::vector<torch::Tensor>& faces) {
  if (faces.size() < 2) throw std::invalid_argument("face matrix needs k >= 2 faces");
  int64_t k = static_cast<int64_t>(faces.size());
  int64_t res = faces[0].size(-1);
  auto grid = torch::full({3, (k + 1) * res, (k + 1) * res}, -0.25f);
  auto put = [&](int64_t r, int64_t c, const torch::Tensor& img) {
    grid.slice(1, r * res, (r + 1) * res).slice(2, c * res, (c + 1) * res) = img;
  };
  for (int64_t j = 0; j < k; ++j) put(0, j + 1, faces[j]);
  for (int64_t i = 0; i < k; ++i) {
    put(i + 1, 0, faces[i]);
    for (int64_t j = 0; j < k; ++j) {
      try {
        put(i + 1, j + 1, swap(faces[i], faces[j]));
      } catch (const std::exception&) {
        // error placeholder cell; the rest of the grid still renders
        auto cell = torch::zeros({3, res, res});
        cell[0] = 0.8f;
        cell[1] = -0.8f;
        cell[2] = -0.8f;
        put(i + 1, j + 1, cell);
      }
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Ablation grids

struct AblationCell {
  std::string name;
  bool failed = false;
  std::string error;
  MetricsRecord metrics;
};

struct AblationGrid {
  std::string axis;  // "fm" or "ddpm_lr"
  std::vector<AblationCell> cells;
};

inline std::string render_metrics_row(const std::string& name, const MetricsRecord& m) {
  std::ostringstream out;
  out << std::left << std::setw(22) << name << std::fixed << std::setprecision(3)
      << std::setw(12) << m.recon_loss << std::setw(12) << m.id_loss << std::setw(12)
      << m.id_retrieval;
  return out.str();
}

inline std::string render_grid_table(const AblationGrid& grid) {
  std::ostringstream out;
  out << std::left << std::setw(22) << "Method" << std::setw(12) << "Recon" << std::setw(12)
      << "ID Loss" << std::setw(12) << "ID Retrieval" << "\n";
  for (const auto& cell : grid.cells) {
    if (cell.failed)
      out << std::left << std::setw(22) << cell.name << "FAILED: " << cell.error << "\n";
    else
      out << render_metrics_row(cell.name, cell.metrics) << "\n";
  }
  return out.str();
}

inline void write_grid_reports(const AblationGrid& grid, const std::string& run_dir) {
  if (run_dir.empty()) return;
  std::filesystem::create_directories(std::filesystem::path(run_dir) / "reports");
  std::ofstream txt(std::filesystem::path(run_dir) / "reports" / "ablation.txt");
  txt << render_grid_table(grid);
  std::ofstream jsonl(std::filesystem::path(run_dir) / "reports" / "ablation.jsonl");
  for (const auto& cell : grid.cells) {
    nlohmann::json j{{"cell", cell.name}, {"failed", cell.failed}};
    if (cell.failed) j["error"] = cell.error;
    else {
      j["recon_loss"] = cell.metrics.recon_loss;
      j["id_loss"] = cell.metrics.id_loss;
      j["id_retrieval"] = cell.metrics.id_retrieval;
      j["extractor_warning"] = cell.metrics.extractor_warning;
    }
    jsonl << j.dump() << "\n";
  }
}

inline MetricHook make_metric_hook(const std::vector<EvalPair>& pairs, const FaceDataset& ds,
                                   IdentityExtractor& train_ex, IdentityExtractor& eval_ex) {
  return [&pairs, &ds, &train_ex, &eval_ex](const SwapFn& swap) {
    auto m = evaluate_model(swap, pairs, ds, train_ex, eval_ex);
    return std::map<std::string, double>{{"recon_loss", m.recon_loss},
                                         {"id_loss", m.id_loss},
                                         {"id_retrieval", m.id_retrieval}};
  };
}

inline MetricsRecord metrics_from_record(const CheckpointRecord& rec, const std::string& tag,
                                         bool extractor_warning) {
  MetricsRecord m;
  m.recon_loss = rec.metrics.at("recon_loss");
  m.id_loss = rec.metrics.at("id_loss");
  m.id_retrieval = rec.metrics.at("id_retrieval");
  m.model_tag = tag;
  m.step = rec.step;
  m.extractor_warning = extractor_warning;
  return m;
}

// FM-variant x Identity-Grouping grid (8 cells) over SimSwap training; only
// the axis keys vary between cells. A cell whose training aborts is recorded
// as failed and the grid completes.
inline AblationGrid run_fm_ablation(const Config& base, const FaceDataset& ds,
                                    IdentityExtractor& train_ex, IdentityExtractor& eval_ex,
                                    const IdCache& cache, const std::vector<EvalPair>& pairs,
                                    const std::string& run_dir = "") {
  AblationGrid grid;
  grid.axis = "fm";
  bool warn = train_ex->fingerprint() == eval_ex->fingerprint();
  auto hook = make_metric_hook(pairs, ds, train_ex, eval_ex);
  for (bool ig : {false, true})
    for (const std::string& fm : {"ofm", "wfm", "wfm_bar", "nfm"}) {
      Config cfg = base;
      cfg.set("fm_variant", fm);
      cfg.set("dataset.identity_grouping", ig ? "true" : "false");
      AblationCell cell;
      cell.name = std::string(ig ? "simswap-ig-" : "simswap-") + fm;
      try {
        auto tc = TrainConfig::from_config(cfg, ds.resolution);
        auto result = train_gan(ds, tc, train_ex, cache,
                                run_dir.empty() ? "" : run_dir + "/" + cell.name, hook);
        cell.metrics = metrics_from_record(select_best_checkpoint(result.checkpoints),
                                           cell.name, warn);
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      grid.cells.push_back(cell);
    }
  write_grid_reports(grid, run_dir);
  return grid;
}

// ILVR swap closure for a noise-prediction model; inputs are resized to the
// model resolution and the result back to out_resolution.
template <typename Model>
inline SwapFn make_ilvr_swap_fn(Model model, DiffusionSchedule sched, LowPassFilter filter,
                                uint64_t seed, int64_t out_resolution) {
  return [model, sched, filter, seed, out_resolution](const torch::Tensor& source,
                                                      const torch::Tensor& target) mutable {
    namespace F = torch::nn::functional;
    int64_t res = 0;
    {
      torch::NoGradGuard ng;
      res = model->cfg.resolution;
    }
    auto resize = [](const torch::Tensor& img, int64_t r) {
      if (img.size(-1) == r) return img;
      return F::interpolate(img.unsqueeze(0),
                            F::InterpolateFuncOptions().size(std::vector<int64_t>{r, r}).mode(torch::kArea))
          .squeeze(0);
    };
    auto gen = make_generator(mix_seed(seed, 0, 0xBBu));
    auto out = ilvr_swap(model, resize(source, res), resize(target, res), filter, sched, gen);
    return resize(out, out_resolution);
  };
}

// DDPM learning-rate grid: the pretrained row plus one finetuned row per rate
// (Table-3 layout). With no train.init checkpoint a base model is trained
// first and plays the pretrained role.
inline AblationGrid run_ddpm_lr_ablation(const Config& base, const FaceDataset& ds,
                                         IdentityExtractor& train_ex, IdentityExtractor& eval_ex,
                                         const std::vector<EvalPair>& pairs,
                                         const std::string& run_dir) {
  if (run_dir.empty()) throw std::invalid_argument("ddpm_lr ablation needs a run directory");
  AblationGrid grid;
  grid.axis = "ddpm_lr";
  bool warn = train_ex->fingerprint() == eval_ex->fingerprint();
  auto tc = TrainConfig::from_config(base, ds.resolution);
  auto sched = make_schedule(tc.ddpm_steps, tc.beta_start, tc.beta_end);
  LowPassFilter filter{base.i64("diffusion.ilvr_scale"), LowPassMode::kAverage};

  auto eval_ckpt = [&](const std::string& ckpt_path, const std::string& name) {
    AblationCell cell;
    cell.name = name;
    try {
      torch::manual_seed(tc.seed);
      NoisePredictor model(NoisePredictorConfig{tc.ddpm_resolution, tc.ddpm_base_channels});
      load_checkpoint(*model, ckpt_path);
      auto swap = make_ilvr_swap_fn(model, sched, filter, tc.seed, ds.resolution);
      auto m = evaluate_model(swap, pairs, ds, train_ex, eval_ex, name);
      m.extractor_warning = warn;
      cell.metrics = m;
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
    return cell;
  };

  std::string pretrained = tc.init_checkpoint;
  if (pretrained.empty()) {
    auto result = finetune_ddpm(ds, tc, tc.lr, run_dir + "/pretrained");
    pretrained = result.checkpoints.back().path;
  }
  grid.cells.push_back(eval_ckpt(pretrained, "pretrained"));

  for (const auto& lr_str : base.list("ablate.lrs")) {
    TrainConfig ft = tc;
    ft.init_checkpoint = pretrained;
    AblationCell cell;
    cell.name = "finetuned-lr" + lr_str;
    try {
      auto result = finetune_ddpm(ds, ft, std::stod(lr_str), run_dir + "/" + cell.name);
      cell = eval_ckpt(result.checkpoints.back().path, cell.name);
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
    grid.cells.push_back(cell);
  }
  write_grid_reports(grid, run_dir);
  return grid;
}

// Entry point matching the CLI `ablate` subcommand.
inline AblationGrid run_ablation(const Config& cfg, const FaceDataset& ds,
                                 IdentityExtractor& train_ex, IdentityExtractor& eval_ex,
                                 const IdCache& cache, const std::vector<EvalPair>& pairs,
                                 const std::string& run_dir = "") {
  auto axis = cfg.str("ablate.axis");
  if (axis == "fm") return run_fm_ablation(cfg, ds, train_ex, eval_ex, cache, pairs, run_dir);
  if (axis == "ddpm_lr") return run_ddpm_lr_ablation(cfg, ds, train_ex, eval_ex, pairs, run_dir);
  throw ConfigError("unknown ablate.axis '" + axis + "' (expected fm | ddpm_lr)");
}

}  // namespace facke

#endif
