// facke: desk-scale face swapping lab (CGAN / CVAE / DDPM+ILVR).
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "facke/benchmark.hpp"
#include "facke/harness.hpp"
#include "facke/toyfaces.hpp"

namespace fs = std::filesystem;
using namespace facke;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string run_dir;
  int64_t seed = -1;
};

Config effective_config(const GlobalOpts& g) {
  Config cfg = g.config_path.empty() ? Config() : Config::from_file(g.config_path);
  if (g.seed >= 0) cfg.set("seed", std::to_string(g.seed));
  return cfg;
}

std::string effective_run_dir(const GlobalOpts& g, const Config& cfg) {
  if (!g.run_dir.empty()) return g.run_dir;
  return (fs::path(cfg.str("run.dir")) / "default").string();
}

IdentityExtractor load_or_train_extractor(const Config& cfg, const FaceDataset& ds,
                                          const std::string& run_dir, bool eval_role) {
  auto ecfg = extractor_config_from(cfg, ds.resolution, eval_role);
  auto path = (fs::path(run_dir) / "ckpt" /
               (eval_role ? "extractor_eval.fckp" : "extractor_train.fckp"))
                  .string();
  if (fs::exists(path)) {
    torch::manual_seed(ecfg.seed);
    IdentityExtractor ex(ecfg);
    load_checkpoint(*ex, path);
    return ex;
  }
  auto trained = train_desk_extractor(ds, ecfg);
  fs::create_directories(fs::path(run_dir) / "ckpt");
  save_checkpoint(*trained.extractor, path,
                  {"extractor", ecfg.iterations, cfg.echo(),
                   {{"held_out_accuracy", trained.held_out_accuracy}}});
  return trained.extractor;
}

// Rebuilds a model from a checkpoint via the config echo stored in its header
// and wraps it as a swap closure.
SwapFn swap_fn_from_checkpoint(const std::string& ckpt_path, IdentityExtractor train_ex,
                               int64_t out_resolution, uint64_t seed) {
  auto header = read_checkpoint_header(ckpt_path);
  Config cfg = header.config_echo.empty() ? Config() : Config::from_string(header.config_echo);
  if (header.tag == "simswap") {
    GeneratorConfig gc{cfg.i64("dataset.resolution"), cfg.i64("gan.base_channels"),
                       cfg.i64("gan.num_id_blocks"), cfg.i64("extractor.embed_dim"),
                       cfg.i64("gan.downsamples")};
    auto g = std::make_shared<SwapGeneratorImpl>(gc);
    load_checkpoint(*g, ckpt_path);
    return [g, train_ex](const torch::Tensor& source, const torch::Tensor& target) mutable {
      torch::NoGradGuard ng;
      g->eval();
      return g->forward(target, extract_identity(train_ex, source));
    };
  }
  if (header.tag == "cvae" || header.tag == "cvae-gan") {
    GeneratorConfig gc{cfg.i64("dataset.resolution"), cfg.i64("gan.base_channels"),
                       cfg.i64("gan.num_id_blocks"), cfg.i64("extractor.embed_dim")};
    auto g = std::make_shared<CvaeGeneratorImpl>(gc);
    load_checkpoint(*g, ckpt_path);
    return [g, train_ex](const torch::Tensor& source, const torch::Tensor& target) mutable {
      torch::NoGradGuard ng;
      g->eval();
      auto dist = g->encode(target, source);
      return g->decode(dist.mu, extract_identity(train_ex, source));  // z = mu
    };
  }
  if (header.tag == "ddpm") {
    NoisePredictor model(NoisePredictorConfig{cfg.i64("diffusion.resolution"), cfg.i64("diffusion.base_channels")});
    load_checkpoint(*model, ckpt_path);
    auto sched = make_schedule(cfg.i64("diffusion.steps"), cfg.f64("diffusion.beta_start"),
                               cfg.f64("diffusion.beta_end"));
    LowPassFilter filter{cfg.i64("diffusion.ilvr_scale"),
                         cfg.str("diffusion.lowpass") == "bicubic" ? LowPassMode::kBicubic
                                                                   : LowPassMode::kAverage};
    return make_ilvr_swap_fn(model, sched, filter, seed, out_resolution);
  }
  throw TrainError("checkpoint tag '" + header.tag + "' is not a swap model");
}

std::vector<torch::Tensor> load_face_dir(const std::string& dir, int resolution) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  std::vector<torch::Tensor> faces;
  for (const auto& f : files) faces.push_back(load_face(f, resolution));
  if (faces.size() < 2) throw IngestError("face directory needs >= 2 images: " + dir);
  return faces;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facke: conditional generative face swapping lab"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "flat key=value config file");
  app.add_option("--seed", g.seed, "override the base seed");
  app.add_option("--run-dir", g.run_dir, "run directory for artifacts");

  auto* sc_ingest = app.add_subcommand("ingest", "ingest a corpus and write the dataset manifest");

  auto* sc_trainex = app.add_subcommand("train-extractor", "train an identity extractor");
  std::string role = "train";
  sc_trainex->add_option("--role", role, "train|eval")->check(CLI::IsMember({"train", "eval"}));

  auto* sc_train = app.add_subcommand("train", "run the training pipeline");
  std::string model_opt;
  sc_train->add_option("--model", model_opt, "simswap|cvae|cvae-gan|ddpm")
      ->check(CLI::IsMember({"simswap", "cvae", "cvae-gan", "ddpm"}));

  auto* sc_eval = app.add_subcommand("eval", "evaluate a checkpoint on a fixed pairing");
  std::string eval_ckpt, pairs_path;
  sc_eval->add_option("--model", eval_ckpt, "checkpoint file")->required();
  sc_eval->add_option("--pairs", pairs_path, "eval pairs file (built+saved if missing)");

  auto* sc_matrix = app.add_subcommand("matrix", "render a face matrix grid");
  std::string matrix_ckpt, faces_dir, matrix_out = "matrix.png";
  sc_matrix->add_option("--model", matrix_ckpt, "checkpoint file")->required();
  sc_matrix->add_option("--faces", faces_dir, "directory of square face images")->required();
  sc_matrix->add_option("--out", matrix_out, "output image path");

  auto* sc_ablate = app.add_subcommand("ablate", "run an ablation grid");
  std::string grid_path;
  sc_ablate->add_option("--grid", grid_path, "grid spec (flat key=value)")->required();

  auto* sc_swap = app.add_subcommand("swap", "swap one source identity onto one target");
  std::string swap_ckpt, src_path, tgt_path, swap_out = "swap.png";
  sc_swap->add_option("--model", swap_ckpt, "checkpoint file")->required();
  sc_swap->add_option("--source", src_path, "source face image")->required();
  sc_swap->add_option("--target", tgt_path, "target face image")->required();
  sc_swap->add_option("--out", swap_out, "output image path");

  auto* sc_ilvr = app.add_subcommand("ilvr-swap", "diffusion swap with ILVR conditioning");
  std::string ilvr_ckpt, ilvr_src, ilvr_tgt, ilvr_out = "ilvr_swap.png";
  int64_t ilvr_scale = 4, ilvr_steps = -1;
  sc_ilvr->add_option("--model", ilvr_ckpt, "ddpm checkpoint file")->required();
  sc_ilvr->add_option("--source", ilvr_src, "source face image")->required();
  sc_ilvr->add_option("--target", ilvr_tgt, "target face image")->required();
  sc_ilvr->add_option("--scale", ilvr_scale, "low-pass scale N");
  sc_ilvr->add_option("--steps", ilvr_steps, "diffusion steps T (default: schedule length)");
  sc_ilvr->add_option("--out", ilvr_out, "output image path");

  auto* sc_corpus = app.add_subcommand("make-corpus", "generate a procedural toy face corpus");
  std::string corpus_dir;
  int64_t corpus_ids = 16, corpus_per_id = 8, corpus_res = 64;
  sc_corpus->add_option("--out", corpus_dir, "corpus root directory")->required();
  sc_corpus->add_option("--ids", corpus_ids, "number of identities");
  sc_corpus->add_option("--per-id", corpus_per_id, "images per identity");
  sc_corpus->add_option("--resolution", corpus_res, "image resolution");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    Config cfg = effective_config(g);
    std::string run_dir = effective_run_dir(g, cfg);
    uint64_t seed = static_cast<uint64_t>(cfg.i64("seed"));

    if (sc_corpus->parsed()) {
      make_toy_corpus(corpus_dir, static_cast<int>(corpus_ids), static_cast<int>(corpus_per_id),
                      static_cast<int>(corpus_res), seed);
      std::cout << "wrote " << corpus_ids << " identities x " << corpus_per_id << " images to "
                << corpus_dir << "\n";
      return 0;
    }

    if (sc_ingest->parsed()) {
      cfg.set("stage", "ingest");
      auto manifest = run_pipeline(cfg, run_dir);
      const auto& st = manifest.stages.at("ingest");
      std::cout << "ingest " << st.status << ": " << st.artifacts.front() << "\n";
      return 0;
    }

    if (sc_trainex->parsed()) {
      auto ds = ingest_dataset(cfg.str("dataset.root"),
                               static_cast<int>(cfg.i64("dataset.resolution")));
      bool eval_role = role == "eval";
      auto ecfg = extractor_config_from(cfg, ds.resolution, eval_role);
      auto trained = train_desk_extractor(ds, ecfg);
      fs::create_directories(fs::path(run_dir) / "ckpt");
      auto path = (fs::path(run_dir) / "ckpt" /
                   (eval_role ? "extractor_eval.fckp" : "extractor_train.fckp"))
                      .string();
      save_checkpoint(*trained.extractor, path,
                      {"extractor", ecfg.iterations, cfg.echo(),
                       {{"held_out_accuracy", trained.held_out_accuracy}}});
      std::cout << "extractor (" << role << ") held-out accuracy "
                << trained.held_out_accuracy << ", fingerprint "
                << hex64(trained.extractor->fingerprint()) << " -> " << path << "\n";
      return 0;
    }

    if (sc_train->parsed()) {
      if (!model_opt.empty()) cfg.set("train.model", model_opt);
      auto manifest = run_pipeline(cfg, run_dir);
      for (const auto& [name, st] : manifest.stages)
        std::cout << name << ": " << st.status << "\n";
      return 0;
    }

    if (sc_eval->parsed()) {
      auto ds = ingest_dataset(cfg.str("dataset.root"),
                               static_cast<int>(cfg.i64("dataset.resolution")));
      auto train_ex = load_or_train_extractor(cfg, ds, run_dir, false);
      auto eval_ex = load_or_train_extractor(cfg, ds, run_dir, true);
      std::vector<EvalPair> pairs;
      if (!pairs_path.empty() && fs::exists(pairs_path)) {
        pairs = load_eval_pairs(ds, pairs_path);
      } else {
        pairs = build_eval_pairs(ds, cfg.i64("eval.num_pairs"),
                                 static_cast<uint64_t>(cfg.i64("eval.seed")));
        if (!pairs_path.empty()) save_eval_pairs(pairs, ds, pairs_path);
      }
      auto header = read_checkpoint_header(eval_ckpt);
      auto swap = swap_fn_from_checkpoint(eval_ckpt, train_ex, ds.resolution, seed);
      auto m = evaluate_model(swap, pairs, ds, train_ex, eval_ex, header.tag, header.step);
      std::cout << std::left << std::setw(22) << "Method" << std::setw(12) << "Recon"
                << std::setw(12) << "ID Loss" << std::setw(12) << "ID Retrieval" << "\n"
                << render_metrics_row(m.model_tag + "@" + std::to_string(m.step), m) << "\n";
      if (m.extractor_warning)
        std::cout << "WARNING: evaluation extractor fingerprint equals the training extractor\n";
      return 0;
    }

    if (sc_matrix->parsed()) {
      auto ds = ingest_dataset(cfg.str("dataset.root"),
                               static_cast<int>(cfg.i64("dataset.resolution")));
      auto train_ex = load_or_train_extractor(cfg, ds, run_dir, false);
      auto faces = load_face_dir(faces_dir, ds.resolution);
      auto swap = swap_fn_from_checkpoint(matrix_ckpt, train_ex, ds.resolution, seed);
      save_face(face_matrix(swap, faces), matrix_out);
      std::cout << "wrote " << (faces.size() + 1) << "x" << (faces.size() + 1)
                << " face matrix to " << matrix_out << "\n";
      return 0;
    }

    if (sc_ablate->parsed()) {
      Config grid_cfg = Config::from_file(grid_path);
      if (g.seed >= 0) grid_cfg.set("seed", std::to_string(g.seed));
      auto ds = ingest_dataset(grid_cfg.str("dataset.root"),
                               static_cast<int>(grid_cfg.i64("dataset.resolution")));
      auto train_ex = load_or_train_extractor(grid_cfg, ds, run_dir, false);
      auto eval_ex = load_or_train_extractor(grid_cfg, ds, run_dir, true);
      auto cache = precompute_id_vectors(ds, train_ex);
      auto pairs = build_eval_pairs(ds, grid_cfg.i64("eval.num_pairs"),
                                    static_cast<uint64_t>(grid_cfg.i64("eval.seed")));
      auto grid = run_ablation(grid_cfg, ds, train_ex, eval_ex, cache, pairs, run_dir);
      std::cout << render_grid_table(grid);
      return 0;
    }

    if (sc_swap->parsed()) {
      int res = static_cast<int>(cfg.i64("dataset.resolution"));
      auto ds = ingest_dataset(cfg.str("dataset.root"), res);
      auto train_ex = load_or_train_extractor(cfg, ds, run_dir, false);
      auto swap = swap_fn_from_checkpoint(swap_ckpt, train_ex, res, seed);
      save_face(swap(load_face(src_path, res), load_face(tgt_path, res)), swap_out);
      std::cout << "wrote " << swap_out << "\n";
      return 0;
    }

    if (sc_ilvr->parsed()) {
      auto header = read_checkpoint_header(ilvr_ckpt);
      if (header.tag != "ddpm")
        throw TrainError("ilvr-swap needs a ddpm checkpoint, got tag '" + header.tag + "'");
      Config ck = header.config_echo.empty() ? cfg : Config::from_string(header.config_echo);
      int res = static_cast<int>(ck.i64("diffusion.resolution"));
      NoisePredictor model(NoisePredictorConfig{res, ck.i64("diffusion.base_channels")});
      load_checkpoint(*model, ilvr_ckpt);
      int64_t T = ilvr_steps > 0 ? ilvr_steps : ck.i64("diffusion.steps");
      auto sched = make_schedule(T, ck.f64("diffusion.beta_start"), ck.f64("diffusion.beta_end"));
      LowPassFilter filter{ilvr_scale, ck.str("diffusion.lowpass") == "bicubic"
                                           ? LowPassMode::kBicubic
                                           : LowPassMode::kAverage};
      auto gen = make_generator(mix_seed(seed, 0, 0xBBu));
      auto out = ilvr_swap(model, load_face(ilvr_src, res), load_face(ilvr_tgt, res), filter,
                           sched, gen);
      save_face(out, ilvr_out);
      std::cout << "wrote " << ilvr_out << " (N=" << ilvr_scale << ", T=" << T << ")\n";
      return 0;
    }

    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
