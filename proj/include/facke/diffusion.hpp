#ifndef FACKE_DIFFUSION_HPP
#define FACKE_DIFFUSION_HPP

#include <torch/torch.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "facke/common.hpp"

namespace facke {

struct DiffusionSchedule {
  int64_t T = 0;
  torch::Tensor betas;       // [T], betas[t-1] = beta_t
  torch::Tensor alphas;      // [T]
  torch::Tensor alpha_bars;  // [T+1], alpha_bars[0] = 1

  double beta(int64_t t) const { return betas[t - 1].item<double>(); }
  double alpha(int64_t t) const { return alphas[t - 1].item<double>(); }
  double alpha_bar(int64_t t) const { return alpha_bars[t].item<double>(); }
};

inline DiffusionSchedule make_schedule(int64_t T, double beta_start, double beta_end,
                                       const std::string& kind = "linear") {
  if (kind != "linear") throw std::invalid_argument("unknown schedule kind: " + kind);
  if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
  if (!(beta_start > 0 && beta_start <= beta_end && beta_end < 1))
    throw std::invalid_argument("schedule needs 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.T = T;
  s.betas = T == 1 ? torch::tensor({beta_start}, torch::kFloat64)
                   : torch::linspace(beta_start, beta_end, T, torch::kFloat64);
  s.alphas = 1.0 - s.betas;
  s.alpha_bars = torch::cat({torch::ones({1}, torch::kFloat64), torch::cumprod(s.alphas, 0)});
  return s;
}

inline void check_step(const DiffusionSchedule& s, int64_t t, int64_t lo) {
  if (t < lo || t > s.T)
    throw std::invalid_argument("diffusion step t=" + std::to_string(t) + " out of [" +
                                std::to_string(lo) + ", " + std::to_string(s.T) + "]");
}

// One forward transition: x_t = sqrt(1-beta_t) x_{t-1} + sqrt(beta_t) z.
inline torch::Tensor forward_step(const torch::Tensor& x_prev, int64_t t, const torch::Tensor& z,
                                  const DiffusionSchedule& sched) {
  check_step(sched, t, 1);
  double b = sched.beta(t);
  return std::sqrt(1.0 - b) * x_prev + std::sqrt(b) * z;
}

// Closed-form marginal: x_t = sqrt(abar_t) x_0 + sqrt(1-abar_t) z; t=0 is x_0.
inline torch::Tensor forward_marginal(const torch::Tensor& x0, int64_t t, const torch::Tensor& z,
                                      const DiffusionSchedule& sched) {
  check_step(sched, t, 0);
  if (t == 0) return x0;
  double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * z;
}

// ---------------------------------------------------------------------------
// Noise predictor

inline torch::Tensor sinusoidal_time_embedding(const torch::Tensor& t, int64_t dim) {
  int64_t half = dim / 2;
  auto freqs = torch::exp(torch::arange(half, torch::kFloat32) *
                          (-std::log(10000.0) / std::max<int64_t>(half - 1, 1)));
  auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({args.sin(), args.cos()}, 1);
}

struct TimeResBlockImpl : torch::nn::Module {
  torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::Linear temb{nullptr};
  torch::nn::Conv2d skip{nullptr};

  TimeResBlockImpl(int64_t cin, int64_t cout, int64_t temb_dim) {
    using namespace torch::nn;
    norm1 = register_module("norm1", GroupNorm(GroupNormOptions(std::min<int64_t>(8, cin), cin)));
    conv1 = register_module("conv1", Conv2d(Conv2dOptions(cin, cout, 3).padding(1)));
    temb = register_module("temb", Linear(temb_dim, cout));
    norm2 = register_module("norm2", GroupNorm(GroupNormOptions(std::min<int64_t>(8, cout), cout)));
    conv2 = register_module("conv2", Conv2d(Conv2dOptions(cout, cout, 3).padding(1)));
    if (cin != cout) skip = register_module("skip", Conv2d(Conv2dOptions(cin, cout, 1)));
  }

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb) {
    auto h = conv1->forward(torch::silu(norm1->forward(x)));
    h = h + temb->forward(emb).unsqueeze(-1).unsqueeze(-1);
    h = conv2->forward(torch::silu(norm2->forward(h)));
    return h + (skip ? skip->forward(x) : x);
  }
};
TORCH_MODULE(TimeResBlock);

struct NoisePredictorConfig {
  int64_t resolution = 32;
  int64_t base_channels = 32;
  int64_t time_dim = 128;
};

// Small U-shaped eps-predictor with sinusoidal time embedding.
struct NoisePredictorImpl : torch::nn::Module {
  NoisePredictorConfig cfg;
  torch::nn::Linear temb1{nullptr}, temb2{nullptr};
  torch::nn::Conv2d stem{nullptr}, out_conv{nullptr};
  torch::nn::GroupNorm out_norm{nullptr};
  TimeResBlock res_d1{nullptr}, res_d2{nullptr}, res_b1{nullptr}, res_b2{nullptr},
      res_u1{nullptr}, res_u2{nullptr};

  NoisePredictorImpl(const NoisePredictorConfig& cfg_) : cfg(cfg_) {
    using namespace torch::nn;
    int64_t c = cfg.base_channels;
    temb1 = register_module("temb1", Linear(64, cfg.time_dim));
    temb2 = register_module("temb2", Linear(cfg.time_dim, cfg.time_dim));
    stem = register_module("stem", Conv2d(Conv2dOptions(3, c, 3).padding(1)));
    res_d1 = register_module("res_d1", TimeResBlock(c, c, cfg.time_dim));
    res_d2 = register_module("res_d2", TimeResBlock(c, 2 * c, cfg.time_dim));
    res_b1 = register_module("res_b1", TimeResBlock(2 * c, 2 * c, cfg.time_dim));
    res_b2 = register_module("res_b2", TimeResBlock(2 * c, 2 * c, cfg.time_dim));
    res_u1 = register_module("res_u1", TimeResBlock(4 * c, 2 * c, cfg.time_dim));
    res_u2 = register_module("res_u2", TimeResBlock(3 * c, c, cfg.time_dim));
    out_norm = register_module("out_norm", GroupNorm(GroupNormOptions(std::min<int64_t>(8, c), c)));
    out_conv = register_module("out_conv", Conv2d(Conv2dOptions(c, 3, 3).padding(1)));
  }

  // x: [B,3,H,W], t: [B] integer steps in [1, T].
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& t) {
    namespace F = torch::nn::functional;
    auto emb = temb2->forward(torch::silu(temb1->forward(sinusoidal_time_embedding(t, 64))));
    auto h1 = res_d1->forward(stem->forward(x), emb);          // full res, c
    auto h2 = res_d2->forward(torch::avg_pool2d(h1, 2), emb);  // 1/2, 2c
    auto hb = torch::avg_pool2d(h2, 2);                        // 1/4
    hb = res_b2->forward(res_b1->forward(hb, emb), emb);
    auto u1 = F::interpolate(hb, F::InterpolateFuncOptions()
                                     .scale_factor(std::vector<double>{2, 2})
                                     .mode(torch::kNearest));
    u1 = res_u1->forward(torch::cat({u1, h2}, 1), emb);
    auto u2 = F::interpolate(u1, F::InterpolateFuncOptions()
                                     .scale_factor(std::vector<double>{2, 2})
                                     .mode(torch::kNearest));
    u2 = res_u2->forward(torch::cat({u2, h1}, 1), emb);
    return out_conv->forward(torch::silu(out_norm->forward(u2)));
  }
};
TORCH_MODULE(NoisePredictor);

// eps-prediction objective: E ||eps - eps_theta(x_t, t)||^2, t ~ U[1, T].
template <typename Model>
inline torch::Tensor ddpm_train_loss(Model& model, const torch::Tensor& x0_batch,
                                     torch::Generator& gen, const DiffusionSchedule& sched) {
  auto x0 = x0_batch.dim() == 3 ? x0_batch.unsqueeze(0) : x0_batch;
  int64_t b = x0.size(0);
  auto t = torch::randint(1, sched.T + 1, {b}, gen, torch::kInt64);
  auto eps = torch::randn(x0.sizes(), gen, x0.options());
  auto ab = sched.alpha_bars.index_select(0, t).to(x0.dtype()).view({b, 1, 1, 1});
  auto x_t = ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps;
  auto pred = model->forward(x_t, t);
  return (eps - pred).pow(2).mean();
}

namespace detail {

// Reverse transition with an explicit noise draw (z must be zero at t = 1).
template <typename Model>
inline torch::Tensor reverse_step_core(Model& model, const torch::Tensor& x_t, int64_t t,
                                       const torch::Tensor& z, const DiffusionSchedule& sched) {
  auto tb = torch::full({x_t.size(0)}, t, torch::kInt64);
  auto eps = model->forward(x_t, tb);
  double a = sched.alpha(t);
  double ab = sched.alpha_bar(t);
  double b = sched.beta(t);
  auto mean = (x_t - (b / std::sqrt(1.0 - ab)) * eps) / std::sqrt(a);
  return mean + std::sqrt(b) * z;  // sigma_t^2 = beta_t
}

}  // namespace detail

template <typename Model>
inline torch::Tensor reverse_step(Model& model, const torch::Tensor& x_t0, int64_t t,
                                  torch::Generator& gen, const DiffusionSchedule& sched) {
  check_step(sched, t, 1);
  auto x_t = x_t0.dim() == 3 ? x_t0.unsqueeze(0) : x_t0;
  auto z = t > 1 ? torch::randn(x_t.sizes(), gen, x_t.options()) : torch::zeros_like(x_t);
  auto out = detail::reverse_step_core(model, x_t, t, z, sched);
  return x_t0.dim() == 3 ? out.squeeze(0) : out;
}

// ---------------------------------------------------------------------------
// ILVR

enum class LowPassMode { kAverage, kBicubic };

struct LowPassFilter {
  int64_t scale = 4;
  LowPassMode mode = LowPassMode::kAverage;
};

// phi_N: downsample then upsample by N. The average/nearest pair is an exact
// idempotent linear projection.
inline torch::Tensor low_pass(const torch::Tensor& x0, const LowPassFilter& f) {
  if (f.scale == 1) return x0;
  auto x = x0.dim() == 3 ? x0.unsqueeze(0) : x0;
  if (x.size(-1) % f.scale != 0 || x.size(-2) % f.scale != 0)
    throw std::invalid_argument("low-pass scale N=" + std::to_string(f.scale) +
                                " does not divide the resolution");
  namespace F = torch::nn::functional;
  torch::Tensor out;
  if (f.mode == LowPassMode::kAverage) {
    // Pairwise 2x2 reductions keep the projection bitwise idempotent for
    // power-of-two scales: re-averaging a constant block is exact.
    using torch::indexing::None;
    using torch::indexing::Slice;
    auto down = x;
    int64_t s = f.scale;
    while (s % 2 == 0) {
      auto a = down.index({"...", Slice(0, None, 2), Slice(0, None, 2)});
      auto b = down.index({"...", Slice(0, None, 2), Slice(1, None, 2)});
      auto c = down.index({"...", Slice(1, None, 2), Slice(0, None, 2)});
      auto d = down.index({"...", Slice(1, None, 2), Slice(1, None, 2)});
      down = ((a + b) + (c + d)) * 0.25;
      s /= 2;
    }
    if (s > 1) down = torch::avg_pool2d(down, s);
    out = F::interpolate(down, F::InterpolateFuncOptions()
                                   .scale_factor(std::vector<double>{double(f.scale), double(f.scale)})
                                   .mode(torch::kNearest));
  } else {
    auto down = F::interpolate(x, F::InterpolateFuncOptions()
                                      .scale_factor(std::vector<double>{1.0 / f.scale, 1.0 / f.scale})
                                      .mode(torch::kBicubic)
                                      .align_corners(false));
    out = F::interpolate(down, F::InterpolateFuncOptions()
                                   .scale_factor(std::vector<double>{double(f.scale), double(f.scale)})
                                   .mode(torch::kBicubic)
                                   .align_corners(false));
  }
  return x0.dim() == 3 ? out.squeeze(0) : out;
}

using IlvrObserver =
    std::function<void(int64_t t, const torch::Tensor& x_t, const torch::Tensor& y_t)>;

// ILVR face swap: denoise from a noised source while pinning the low-pass band
// to the target's forward trajectory. One noise draw per step is shared
// between the reverse transition and the target trajectory, so the low-pass
// residuals of the noise cancel.
template <typename Model>
inline torch::Tensor ilvr_swap(Model& model, const torch::Tensor& source,
                               const torch::Tensor& target, const LowPassFilter& filter,
                               const DiffusionSchedule& sched, torch::Generator& gen,
                               int64_t t_start = -1, const IlvrObserver& observer = nullptr) {
  if (source.sizes() != target.sizes()) throw std::invalid_argument("source/target shape mismatch");
  if (t_start < 0) t_start = sched.T;
  check_step(sched, t_start, 1);
  torch::NoGradGuard guard;
  model->eval();

  bool single = source.dim() == 3;
  auto src = single ? source.unsqueeze(0) : source;
  auto tgt = single ? target.unsqueeze(0) : target;
  low_pass(src, filter);  // validates divisibility up front

  auto x = forward_marginal(src, t_start, torch::randn(src.sizes(), gen, src.options()), sched);
  for (int64_t t = t_start; t >= 1; --t) {
    auto z = t > 1 ? torch::randn(src.sizes(), gen, src.options()) : torch::zeros_like(src);
    auto x_prev = detail::reverse_step_core(model, x, t, z, sched);
    auto y_prev = forward_marginal(tgt, t - 1, z, sched);
    // N=1 makes phi the identity and the refinement collapses to x = y.
    x = filter.scale == 1 ? y_prev
                          : low_pass(y_prev, filter) + x_prev - low_pass(x_prev, filter);
    if (observer) observer(t - 1, x, y_prev);
  }
  return single ? x.squeeze(0) : x;
}

}  // namespace facke

#endif
