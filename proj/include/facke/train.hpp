#ifndef FACKE_TRAIN_HPP
#define FACKE_TRAIN_HPP

#include <torch/torch.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facke/checkpoint.hpp"
#include "facke/common.hpp"
#include "facke/config.hpp"
#include "facke/cvae.hpp"
#include "facke/dataset.hpp"
#include "facke/diffusion.hpp"
#include "facke/discriminator.hpp"
#include "facke/generator.hpp"
#include "facke/identity.hpp"
#include "facke/losses.hpp"

namespace facke {

using SwapFn = std::function<torch::Tensor(const torch::Tensor& source, const torch::Tensor& target)>;

// Optional metric hook invoked at every checkpoint with the current model's
// swap closure; the returned values are attached to the checkpoint record.
using MetricHook = std::function<std::map<std::string, double>(const SwapFn&)>;

struct TrainConfig {
  std::string model = "simswap";
  int64_t iterations = 1000;
  int64_t eval_every = 500;
  uint64_t seed = 0;
  double lr = 4e-4;
  double lr_d = 4e-4;
  double beta1 = 0.0;
  double beta2 = 0.99;
  int64_t d_steps_per_g = 1;
  bool flip = false;
  SamplerConfig sampler;
  GeneratorConfig gen;
  DiscriminatorConfig disc;
  LossWeights weights;
  FmVariant fm;
  GpInterpolant gp = GpInterpolant::kConvex;
  CvaeWeights cvae;
  // diffusion
  int64_t ddpm_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int64_t ddpm_resolution = 32;
  int64_t ddpm_base_channels = 32;
  std::string init_checkpoint;
  std::string config_echo;

  static TrainConfig from_config(const Config& c, int resolution) {
    TrainConfig t;
    t.model = c.str("train.model");
    t.iterations = c.i64("train.iterations");
    t.eval_every = c.i64("train.eval_every");
    t.seed = static_cast<uint64_t>(c.i64("seed"));
    t.lr = c.f64("train.lr");
    t.lr_d = c.f64("train.lr_d");
    t.beta1 = c.f64("train.beta1");
    t.beta2 = c.f64("train.beta2");
    t.d_steps_per_g = c.i64("train.d_steps_per_g");
    t.flip = c.flag("train.flip");
    t.sampler = {c.i64("dataset.batch_size"), t.seed, c.i64("dataset.num_workers"),
                 c.flag("dataset.identity_grouping")};
    t.gen = {resolution, c.i64("gan.base_channels"), c.i64("gan.num_id_blocks"),
             c.i64("extractor.embed_dim"), c.i64("gan.downsamples")};
    t.disc = {c.i64("disc.layers"), c.i64("disc.base_channels")};
    t.weights = {c.f64("lambda_id"), c.f64("lambda_recon"), c.f64("lambda_gp"), c.f64("lambda_wfm")};
    t.fm = FmVariant::from_string(c.str("fm_variant"), c.i64("fm_split_layer"));
    t.gp = c.str("gp_interpolant") == "paper" ? GpInterpolant::kPaper : GpInterpolant::kConvex;
    t.cvae = {c.f64("cvae.kl_weight"), c.f64("cvae.recon_intra"), c.f64("cvae.recon_inter"),
              c.f64("lambda_id")};
    t.ddpm_steps = c.i64("diffusion.steps");
    t.beta_start = c.f64("diffusion.beta_start");
    t.beta_end = c.f64("diffusion.beta_end");
    t.ddpm_resolution = c.i64("diffusion.resolution");
    t.ddpm_base_channels = c.i64("diffusion.base_channels");
    t.init_checkpoint = c.str("train.init");
    t.config_echo = c.echo();
    return t;
  }
};

struct LogEntry {
  int64_t step = 0;
  PairMode mode = PairMode::kIntra;
  std::map<std::string, double> losses;
};

struct TrainResult {
  std::vector<CheckpointRecord> checkpoints;
  std::vector<LogEntry> log;
};

namespace detail {

inline void check_finite(const torch::Tensor& v, const char* term, int64_t step) {
  double x = v.item<double>();
  if (!std::isfinite(x))
    throw TrainError(std::string("non-finite loss in term '") + term + "' at step " +
                     std::to_string(step) + "; aborting");
}

inline torch::Tensor stack_side(const std::vector<BatchPair>& batch, bool source) {
  std::vector<torch::Tensor> v;
  for (const auto& p : batch) v.push_back(source ? p.source : p.target);
  return torch::stack(v);
}

inline torch::Tensor id_vectors_for(const FaceDataset& ds, const IdCache& cache,
                                    const std::vector<BatchPair>& batch) {
  std::vector<torch::Tensor> v;
  for (const auto& p : batch)
    v.push_back(cache.vectors.at(ds.image_refs[p.source_id_index][p.source_img_index]));
  return torch::stack(v);
}

inline void write_log(const std::string& run_dir, const std::vector<LogEntry>& log) {
  if (run_dir.empty()) return;
  std::ofstream out(std::filesystem::path(run_dir) / "train_log.jsonl");
  for (const auto& e : log) {
    nlohmann::json j{{"step", e.step}, {"mode", e.mode == PairMode::kIntra ? "intra" : "inter"}};
    for (const auto& [k, v] : e.losses) j[k] = v;
    out << j.dump() << "\n";
  }
}

inline CheckpointRecord save_record(const torch::nn::Module& m, const std::string& run_dir,
                                    const std::string& tag, int64_t step,
                                    const std::string& config_echo,
                                    const std::map<std::string, double>& metrics) {
  CheckpointRecord rec;
  rec.step = step;
  rec.tag = tag;
  rec.metrics = metrics;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(std::filesystem::path(run_dir) / "ckpt");
    char name[64];
    snprintf(name, sizeof(name), "ckpt/%s_%07lld.fckp", tag.c_str(),
             static_cast<long long>(step));
    rec.path = (std::filesystem::path(run_dir) / name).string();
    save_checkpoint(m, rec.path, {tag, step, config_echo, metrics});
  }
  return rec;
}

}  // namespace detail

// SimSwap training: strictly alternating intra (even) / inter (odd) batches,
// one D update then one G update per iteration.
inline TrainResult train_gan(const FaceDataset& ds, const TrainConfig& cfg,
                             IdentityExtractor& train_ex, const IdCache& cache,
                             const std::string& run_dir = "", const MetricHook& metrics = nullptr) {
  torch::manual_seed(cfg.seed);
  SwapGenerator g(cfg.gen);
  MultiScaleDiscriminator d(cfg.disc);
  torch::optim::Adam opt_g(g->parameters(),
                           torch::optim::AdamOptions(cfg.lr).betas({cfg.beta1, cfg.beta2}));
  torch::optim::Adam opt_d(d->parameters(),
                           torch::optim::AdamOptions(cfg.lr_d).betas({cfg.beta1, cfg.beta2}));
  auto gp_gen = make_generator(mix_seed(cfg.seed, 0, 0xABu));
  auto aug_gen = make_generator(mix_seed(cfg.seed, 0, 0xACu));
  for (auto& p : train_ex->parameters()) p.set_requires_grad(false);
  train_ex->eval();

  auto critic = [&](const torch::Tensor& x) { return critic_value(d, x); };
  auto swap_fn = [&](const torch::Tensor& source, const torch::Tensor& target) {
    return generate_swap(g, target, extract_identity(train_ex, source));
  };

  TrainResult result;
  for (int64_t step = 0; step < cfg.iterations; ++step) {
    PairMode mode = step % 2 == 0 ? PairMode::kIntra : PairMode::kInter;
    auto batch = mode == PairMode::kIntra ? sample_intra_batch(ds, cfg.sampler, step)
                                          : sample_inter_batch(ds, cfg.sampler, step);
    auto target = detail::stack_side(batch, false);
    auto v_src = detail::id_vectors_for(ds, cache, batch);
    if (cfg.flip) {
      auto coin = torch::rand({target.size(0)}, aug_gen);
      for (int64_t i = 0; i < target.size(0); ++i)
        if (coin[i].item<float>() < 0.5f) target[i] = target[i].flip({-1});
    }

    g->train();
    d->train();

    // discriminator
    torch::Tensor d_loss, gp;
    for (int64_t k = 0; k < cfg.d_steps_per_g; ++k) {
      torch::Tensor fake;
      {
        torch::NoGradGuard ng;
        fake = g->forward(target, v_src);
      }
      auto real_out = d->forward(target);
      auto fake_out = d->forward(fake);
      auto hinge = adv_loss_d(real_out, fake_out);
      gp = gradient_penalty(critic, target, fake, gp_gen, cfg.gp, /*create_graph=*/true);
      d_loss = hinge + cfg.weights.lambda_gp * gp;
      detail::check_finite(hinge, "adv_d", step);
      detail::check_finite(gp, "gp", step);
      opt_d.zero_grad();
      d_loss.backward();
      opt_d.step();
    }

    // generator
    auto result_img = g->forward(target, v_src);
    auto v_res = train_ex->embed(result_img);
    GenSubLosses sub;
    sub.id = identity_loss(v_res, v_src);
    sub.recon = recon_loss(result_img, target);
    auto fake_out = d->forward(result_img);
    DiscOutput real_out_det;
    {
      torch::NoGradGuard ng;
      real_out_det = d->forward(target);
    }
    sub.adv_g = adv_loss_g(fake_out);
    sub.fm = feature_matching_loss(fake_out, real_out_det, cfg.fm);
    auto g_loss = total_loss_g(sub, cfg.weights, mode);
    detail::check_finite(sub.id, "id", step);
    detail::check_finite(sub.recon, "recon", step);
    detail::check_finite(sub.adv_g, "adv_g", step);
    detail::check_finite(sub.fm, "fm", step);
    opt_g.zero_grad();
    g_loss.backward();
    opt_g.step();

    result.log.push_back({step, mode,
                          {{"d_loss", d_loss.item<double>()},
                           {"gp", gp.item<double>()},
                           {"id", sub.id.item<double>()},
                           {"recon", sub.recon.item<double>()},
                           {"adv_g", sub.adv_g.item<double>()},
                           {"fm", sub.fm.item<double>()},
                           {"g_loss", g_loss.item<double>()}}});

    if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.iterations) {
      auto m = metrics ? metrics(swap_fn) : std::map<std::string, double>{};
      m["g_loss"] = g_loss.item<double>();
      result.checkpoints.push_back(
          detail::save_record(*g, run_dir, "simswap", step + 1, cfg.config_echo, m));
      g->train();
    }
  }
  detail::write_log(run_dir, result.log);
  return result;
}

// CVAE-GAN: the CVAE generator drops into the same adversarial loop; the KL
// term joins the generator objective. With pure_cvae the discriminator is
// disabled and the odd/even reconstruction weighting of the CVAE schedule
// applies (this reproduces the blur/paste failure mode).
inline TrainResult train_cvae_gan(const FaceDataset& ds, const TrainConfig& cfg,
                                  IdentityExtractor& train_ex, const IdCache& cache,
                                  const std::string& run_dir = "",
                                  const MetricHook& metrics = nullptr, bool pure_cvae = false) {
  torch::manual_seed(cfg.seed);
  CvaeGenerator g(cfg.gen);
  MultiScaleDiscriminator d(cfg.disc);
  torch::optim::Adam opt_g(g->parameters(),
                           torch::optim::AdamOptions(cfg.lr).betas({cfg.beta1, cfg.beta2}));
  torch::optim::Adam opt_d(d->parameters(),
                           torch::optim::AdamOptions(cfg.lr_d).betas({cfg.beta1, cfg.beta2}));
  auto gp_gen = make_generator(mix_seed(cfg.seed, 0, 0xABu));
  auto z_gen = make_generator(mix_seed(cfg.seed, 0, 0xADu));
  for (auto& p : train_ex->parameters()) p.set_requires_grad(false);
  train_ex->eval();

  auto critic = [&](const torch::Tensor& x) { return critic_value(d, x); };
  auto swap_fn = [&](const torch::Tensor& source, const torch::Tensor& target) {
    torch::NoGradGuard ng;
    g->eval();
    auto dist = g->encode(target, source);
    // deterministic inference: z = mu
    return g->decode(dist.mu, extract_identity(train_ex, source));
  };

  std::string tag = pure_cvae ? "cvae" : "cvae-gan";
  TrainResult result;
  for (int64_t step = 0; step < cfg.iterations; ++step) {
    PairMode mode = step % 2 == 0 ? PairMode::kIntra : PairMode::kInter;
    auto batch = mode == PairMode::kIntra ? sample_intra_batch(ds, cfg.sampler, step)
                                          : sample_inter_batch(ds, cfg.sampler, step);
    auto source = detail::stack_side(batch, true);
    auto target = detail::stack_side(batch, false);
    auto v_src = detail::id_vectors_for(ds, cache, batch);

    g->train();

    torch::Tensor d_loss = torch::zeros({}), gp = torch::zeros({});
    if (!pure_cvae) {
      d->train();
      torch::Tensor fake;
      {
        torch::NoGradGuard ng;
        fake = g->decode(reparameterize(g->encode(target, source), z_gen), v_src);
      }
      auto real_out = d->forward(target);
      auto fake_out = d->forward(fake);
      auto hinge = adv_loss_d(real_out, fake_out);
      gp = gradient_penalty(critic, target, fake, gp_gen, cfg.gp, true);
      d_loss = hinge + cfg.weights.lambda_gp * gp;
      detail::check_finite(d_loss, "adv_d", step);
      opt_d.zero_grad();
      d_loss.backward();
      opt_d.step();
    }

    auto dist = g->encode(target, source);
    auto z = reparameterize(dist, z_gen);
    auto result_img = g->decode(z, v_src);
    auto kl = kl_loss(dist);
    auto v_res = train_ex->embed(result_img);
    auto id_l = identity_loss(v_res, v_src);
    detail::check_finite(kl, "kl", step);
    detail::check_finite(id_l, "id", step);

    torch::Tensor g_loss;
    torch::Tensor recon_l;
    if (pure_cvae) {
      recon_l = (result_img - target).pow(2).mean();  // MSE per the CVAE objective
      g_loss = cvae_total_loss(recon_l, kl, id_l, mode, cfg.cvae);
    } else {
      GenSubLosses sub;
      sub.id = id_l;
      recon_l = recon_loss(result_img, target);
      sub.recon = recon_l;
      auto fake_out = d->forward(result_img);
      DiscOutput real_out_det;
      {
        torch::NoGradGuard ng;
        real_out_det = d->forward(target);
      }
      sub.adv_g = adv_loss_g(fake_out);
      sub.fm = feature_matching_loss(fake_out, real_out_det, cfg.fm);
      detail::check_finite(sub.adv_g, "adv_g", step);
      detail::check_finite(sub.fm, "fm", step);
      g_loss = total_loss_g(sub, cfg.weights, mode) + cfg.cvae.kl_weight * kl;
    }
    detail::check_finite(recon_l, "recon", step);
    opt_g.zero_grad();
    g_loss.backward();
    opt_g.step();

    result.log.push_back({step, mode,
                          {{"d_loss", d_loss.item<double>()},
                           {"kl", kl.item<double>()},
                           {"id", id_l.item<double>()},
                           {"recon", recon_l.item<double>()},
                           {"g_loss", g_loss.item<double>()},
                           {"kl_weight", cfg.cvae.kl_weight}}});

    if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.iterations) {
      auto m = metrics ? metrics(swap_fn) : std::map<std::string, double>{};
      m["g_loss"] = g_loss.item<double>();
      result.checkpoints.push_back(
          detail::save_record(*g, run_dir, tag, step + 1, cfg.config_echo, m));
      g->train();
    }
  }
  detail::write_log(run_dir, result.log);
  return result;
}

// DDPM (fine-)tuning; with an empty init checkpoint this is from-scratch
// training of the same objective.
inline TrainResult finetune_ddpm(const FaceDataset& ds, const TrainConfig& cfg, double lr,
                                 const std::string& run_dir = "") {
  torch::manual_seed(cfg.seed);
  NoisePredictor model(NoisePredictorConfig{cfg.ddpm_resolution, cfg.ddpm_base_channels});
  if (!cfg.init_checkpoint.empty()) {
    auto h = load_checkpoint(*model, cfg.init_checkpoint);
    if (h.tag != "ddpm")
      throw TrainError("init checkpoint has architecture tag '" + h.tag + "', expected 'ddpm'");
  }
  auto sched = make_schedule(cfg.ddpm_steps, cfg.beta_start, cfg.beta_end);
  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(lr));
  auto noise_gen = make_generator(mix_seed(cfg.seed, 0, 0xAEu));

  // flatten the corpus; diffusion trains on single images
  std::vector<torch::Tensor> pool;
  for (int64_t id = 0; id < ds.num_identities(); ++id)
    for (int64_t i = 0; i < ds.images_of(id); ++i) {
      auto img = ds.image(id, i).unsqueeze(0);
      if (img.size(-1) != cfg.ddpm_resolution)
        img = torch::nn::functional::interpolate(
            img, torch::nn::functional::InterpolateFuncOptions()
                     .size(std::vector<int64_t>{cfg.ddpm_resolution, cfg.ddpm_resolution})
                     .mode(torch::kArea));
      pool.push_back(img.squeeze(0));
    }

  TrainResult result;
  for (int64_t step = 0; step < cfg.iterations; ++step) {
    std::mt19937_64 rng(mix_seed(cfg.seed, step, 0x99u));
    std::vector<torch::Tensor> imgs;
    for (int64_t b = 0; b < cfg.sampler.batch_size; ++b)
      imgs.push_back(pool[detail::draw(rng, static_cast<int64_t>(pool.size()))]);
    model->train();
    auto loss = ddpm_train_loss(model, torch::stack(imgs), noise_gen, sched);
    detail::check_finite(loss, "ddpm", step);
    opt.zero_grad();
    loss.backward();
    opt.step();
    result.log.push_back({step, PairMode::kIntra, {{"ddpm_loss", loss.item<double>()}}});

    if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.iterations) {
      std::map<std::string, double> m{{"ddpm_loss", loss.item<double>()}};
      result.checkpoints.push_back(
          detail::save_record(*model, run_dir, "ddpm", step + 1, cfg.config_echo, m));
    }
  }
  detail::write_log(run_dir, result.log);
  return result;
}

// Lowest (mean id retrieval + mean recon loss); ties go to the earliest step.
inline CheckpointRecord select_best_checkpoint(const std::vector<CheckpointRecord>& series) {
  if (series.empty()) throw TrainError("empty checkpoint series");
  const CheckpointRecord* best = nullptr;
  double best_sum = 0;
  for (const auto& rec : series) {
    auto it_r = rec.metrics.find("recon_loss");
    auto it_i = rec.metrics.find("id_retrieval");
    if (it_r == rec.metrics.end() || it_i == rec.metrics.end())
      throw TrainError("checkpoint at step " + std::to_string(rec.step) +
                       " lacks recon_loss/id_retrieval metrics");
    double sum = it_r->second + it_i->second;
    if (!best || sum < best_sum || (sum == best_sum && rec.step < best->step)) {
      best = &rec;
      best_sum = sum;
    }
  }
  return *best;
}

}  // namespace facke

#endif
