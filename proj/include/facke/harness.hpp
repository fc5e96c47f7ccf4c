#ifndef FACKE_HARNESS_HPP
#define FACKE_HARNESS_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facke/benchmark.hpp"
#include "facke/checkpoint.hpp"
#include "facke/config.hpp"
#include "facke/dataset.hpp"
#include "facke/identity.hpp"
#include "facke/image_io.hpp"
#include "facke/train.hpp"

namespace facke {

constexpr const char* kToolVersion = "facke 0.1.0";

struct StageStatus {
  std::string status;  // done | skipped | failed
  std::vector<std::string> artifacts;
  std::string error;
};

struct RunManifest {
  std::string run_id;
  std::string config_echo;
  uint64_t seed = 0;
  std::map<std::string, StageStatus> stages;
  bool failed = false;
  std::string failed_stage;

  nlohmann::json to_json() const {
    nlohmann::json j{{"run_id", run_id},
                     {"tool_version", kToolVersion},
                     {"seed", seed},
                     {"config_echo", config_echo},
                     {"failed", failed}};
    if (failed) j["failed_stage"] = failed_stage;
    for (const auto& [name, st] : stages) {
      nlohmann::json s{{"status", st.status}, {"artifacts", st.artifacts}};
      if (!st.error.empty()) s["error"] = st.error;
      j["stages"][name] = s;
    }
    return j;
  }
};

namespace detail {

inline void write_manifest(const RunManifest& m, const std::string& run_dir) {
  std::filesystem::create_directories(run_dir);
  std::ofstream out(std::filesystem::path(run_dir) / "manifest.json");
  out << m.to_json().dump(2) << "\n";
}

inline uint64_t dataset_fingerprint(const FaceDataset& ds) {
  uint64_t h = fnv1a64(std::to_string(ds.resolution));
  for (const auto& refs : ds.image_refs)
    for (const auto& r : refs) h = fnv1a64(r, h);
  return h;
}

}  // namespace detail

struct ExtractorPair {
  IdentityExtractor train_ex{nullptr};
  IdentityExtractor eval_ex{nullptr};
};

inline ExtractorConfig extractor_config_from(const Config& c, int resolution, bool eval_role) {
  ExtractorConfig e;
  e.embed_dim = c.i64("extractor.embed_dim");
  e.base_channels = eval_role ? static_cast<int64_t>(c.i64("extractor.base_channels") *
                                                     c.f64("extractor.eval_width_mult"))
                              : c.i64("extractor.base_channels");
  e.resolution = resolution;
  e.iterations = c.i64("extractor.iterations");
  e.batch_size = c.i64("extractor.batch_size");
  e.lr = c.f64("extractor.lr");
  e.margin = c.f64("extractor.margin");
  e.scale = c.f64("extractor.scale");
  e.seed = static_cast<uint64_t>(eval_role ? c.i64("extractor.eval_seed")
                                           : c.i64("extractor.train_seed"));
  return e;
}

// Executes the configured stages in order: ingest -> extractors -> train ->
// eval. Idempotent stages are skipped when their outputs already exist and
// fingerprints match. The manifest is written before returning on both
// success and failure.
inline RunManifest run_pipeline(const Config& cfg, const std::string& run_dir) {
  namespace fs = std::filesystem;
  RunManifest manifest;
  manifest.run_id = fs::path(run_dir).filename().string();
  manifest.config_echo = cfg.echo();
  manifest.seed = static_cast<uint64_t>(cfg.i64("seed"));
  fs::create_directories(fs::path(run_dir) / "ckpt");
  fs::create_directories(fs::path(run_dir) / "reports");
  fs::create_directories(fs::path(run_dir) / "samples");
  {
    std::ofstream echo(fs::path(run_dir) / "config.echo");
    echo << cfg.echo();
  }

  auto stages = cfg.list("stage");
  auto wants = [&](const std::string& s) {
    return stages.empty() || std::find(stages.begin(), stages.end(), s) != stages.end();
  };

  FaceDataset ds;
  ExtractorPair ex;
  IdCache cache;
  std::vector<EvalPair> pairs;
  TrainResult train_result;
  std::string current_stage;

  try {
    // ---- ingest
    if (wants("ingest")) {
      current_stage = "ingest";
      ds = ingest_dataset(cfg.str("dataset.root"), static_cast<int>(cfg.i64("dataset.resolution")));
      auto fp = detail::dataset_fingerprint(ds);
      auto dsm_path = (fs::path(run_dir) / "reports" / "dataset.json").string();
      StageStatus st;
      st.artifacts = {dsm_path};
      if (fs::exists(dsm_path)) {
        auto j = nlohmann::json::parse(std::ifstream(dsm_path));
        st.status = j.value("fingerprint", std::string()) == hex64(fp) ? "skipped" : "done";
      } else {
        st.status = "done";
      }
      if (st.status == "done") {
        nlohmann::json j{{"root", ds.root},
                         {"resolution", ds.resolution},
                         {"identities", ds.num_identities()},
                         {"images", ds.num_images()},
                         {"fingerprint", hex64(fp)}};
        std::ofstream out(dsm_path);
        out << j.dump(2) << "\n";
      }
      manifest.stages["ingest"] = st;
    }

    // ---- extractors + id cache
    if (wants("extractors") && ds.num_identities() > 0) {
      current_stage = "extractors";
      StageStatus st;
      for (bool eval_role : {false, true}) {
        auto ecfg = extractor_config_from(cfg, ds.resolution, eval_role);
        auto path = (fs::path(run_dir) / "ckpt" /
                     (eval_role ? "extractor_eval.fckp" : "extractor_train.fckp"))
                        .string();
        auto& slot = eval_role ? ex.eval_ex : ex.train_ex;
        bool loaded = false;
        if (fs::exists(path)) {
          try {
            torch::manual_seed(ecfg.seed);
            IdentityExtractor candidate(ecfg);
            load_checkpoint(*candidate, path);
            slot = candidate;
            loaded = true;
          } catch (const TrainError&) {
            loaded = false;  // config changed; retrain
          }
        }
        if (!loaded) {
          auto trained = train_desk_extractor(ds, ecfg);
          slot = trained.extractor;
          save_checkpoint(*slot, path,
                          {"extractor", ecfg.iterations, cfg.echo(),
                           {{"held_out_accuracy", trained.held_out_accuracy}}});
          st.status = "done";
        }
        st.artifacts.push_back(path);
      }
      if (st.status.empty()) st.status = "skipped";

      auto cache_path = (fs::path(run_dir) / "id_train.idcache").string();
      bool cache_ok = false;
      if (fs::exists(cache_path)) {
        try {
          cache = load_id_cache(cache_path, ex.train_ex->fingerprint());
          cache_ok = true;
        } catch (const CacheError&) {
          cache_ok = false;
        }
      }
      if (!cache_ok) {
        cache = precompute_id_vectors(ds, ex.train_ex);
        save_id_cache(cache, cache_path);
        st.status = "done";
      }
      st.artifacts.push_back(cache_path);
      manifest.stages["extractors"] = st;
    }

    // ---- train
    if (wants("train") && ds.num_identities() > 0) {
      current_stage = "train";
      StageStatus st;
      auto tc = TrainConfig::from_config(cfg, ds.resolution);
      auto model = cfg.str("train.model");
      std::string tag = model == "cvae" ? "cvae" : model == "cvae-gan" ? "cvae-gan" : model;
      char final_name[64];
      snprintf(final_name, sizeof(final_name), "ckpt/%s_%07lld.fckp", tag.c_str(),
               static_cast<long long>(tc.iterations));
      auto final_path = (fs::path(run_dir) / final_name).string();
      if (fs::exists(final_path)) {
        st.status = "skipped";
        st.artifacts.push_back(final_path);
      } else {
        pairs = build_eval_pairs(ds, cfg.i64("eval.num_pairs"),
                                 static_cast<uint64_t>(cfg.i64("eval.seed")));
        save_eval_pairs(pairs, ds, (fs::path(run_dir) / "reports" / "eval_pairs.txt").string());
        MetricHook hook;
        if (ex.train_ex && ex.eval_ex) hook = make_metric_hook(pairs, ds, ex.train_ex, ex.eval_ex);
        if (model == "simswap")
          train_result = train_gan(ds, tc, ex.train_ex, cache, run_dir, hook);
        else if (model == "cvae-gan")
          train_result = train_cvae_gan(ds, tc, ex.train_ex, cache, run_dir, hook, false);
        else if (model == "cvae")
          train_result = train_cvae_gan(ds, tc, ex.train_ex, cache, run_dir, hook, true);
        else if (model == "ddpm")
          train_result = finetune_ddpm(ds, tc, tc.lr, run_dir);
        else
          throw ConfigError("unknown train.model '" + model + "'");
        st.status = "done";
        for (const auto& rec : train_result.checkpoints) st.artifacts.push_back(rec.path);
      }
      manifest.stages["train"] = st;
    }

    // ---- eval
    if (wants("eval") && ds.num_identities() > 0 && ex.train_ex && ex.eval_ex) {
      current_stage = "eval";
      StageStatus st;
      auto report_path = (fs::path(run_dir) / "reports" / "metrics.jsonl").string();
      if (fs::exists(report_path) && train_result.checkpoints.empty()) {
        st.status = "skipped";
        st.artifacts = {report_path};
      } else {
        if (pairs.empty()) {
          auto pairs_path = (fs::path(run_dir) / "reports" / "eval_pairs.txt").string();
          pairs = fs::exists(pairs_path)
                      ? load_eval_pairs(ds, pairs_path)
                      : build_eval_pairs(ds, cfg.i64("eval.num_pairs"),
                                         static_cast<uint64_t>(cfg.i64("eval.seed")));
          if (!fs::exists(pairs_path)) save_eval_pairs(pairs, ds, pairs_path);
        }
        if (train_result.checkpoints.empty())
          throw TrainError("eval stage needs a completed train stage in the same run");
        bool warn = ex.train_ex->fingerprint() == ex.eval_ex->fingerprint();
        MetricsRecord m;
        if (cfg.str("train.model") == "ddpm") {
          // diffusion checkpoints store only the training loss; evaluate the
          // last one through the ILVR swap closure
          auto tc = TrainConfig::from_config(cfg, ds.resolution);
          torch::manual_seed(tc.seed);
          NoisePredictor model(NoisePredictorConfig{tc.ddpm_resolution, tc.ddpm_base_channels});
          const auto& last = train_result.checkpoints.back();
          load_checkpoint(*model, last.path);
          auto sched = make_schedule(tc.ddpm_steps, tc.beta_start, tc.beta_end);
          LowPassFilter filter{cfg.i64("diffusion.ilvr_scale"),
                               cfg.str("diffusion.lowpass") == "bicubic" ? LowPassMode::kBicubic
                                                                         : LowPassMode::kAverage};
          auto swap = make_ilvr_swap_fn(model, sched, filter, tc.seed, ds.resolution);
          m = evaluate_model(swap, pairs, ds, ex.train_ex, ex.eval_ex, "ddpm", last.step);
        } else {
          auto best = select_best_checkpoint(train_result.checkpoints);
          m = metrics_from_record(best, cfg.str("train.model"), warn);
        }
        std::ofstream txt(fs::path(run_dir) / "reports" / "metrics.txt");
        txt << render_metrics_row(m.model_tag + "@" + std::to_string(m.step), m) << "\n";
        if (m.extractor_warning)
          txt << "WARNING: evaluation extractor fingerprint equals the training extractor\n";
        std::ofstream jsonl(report_path);
        jsonl << nlohmann::json{{"model", m.model_tag},
                                {"step", m.step},
                                {"recon_loss", m.recon_loss},
                                {"id_loss", m.id_loss},
                                {"id_retrieval", m.id_retrieval},
                                {"extractor_warning", m.extractor_warning}}
                     .dump()
              << "\n";
        st.status = "done";
        st.artifacts = {report_path};
      }
      manifest.stages["eval"] = st;
    }
  } catch (const std::exception& e) {
    manifest.failed = true;
    manifest.failed_stage = current_stage;
    auto& st = manifest.stages[current_stage];
    st.status = "failed";
    st.error = e.what();
    detail::write_manifest(manifest, run_dir);
    throw;
  }

  detail::write_manifest(manifest, run_dir);
  return manifest;
}

}  // namespace facke

#endif
