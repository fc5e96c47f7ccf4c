#ifndef FACKE_GENERATOR_HPP
#define FACKE_GENERATOR_HPP

#include <torch/torch.h>

#include <vector>

#include "facke/common.hpp"

namespace facke {

constexpr double kAdainEps = 1e-5;

// Instance-normalize each channel over HxW, then apply per-channel scale and
// shift. gamma/beta are [B, C] or [C].
inline torch::Tensor adain(const torch::Tensor& features, torch::Tensor gamma, torch::Tensor beta,
                           double eps = kAdainEps) {
  auto mean = features.mean({2, 3}, /*keepdim=*/true);
  auto var = features.var({2, 3}, /*unbiased=*/false, /*keepdim=*/true);
  auto normed = (features - mean) / torch::sqrt(var + eps);
  if (gamma.dim() == 1) gamma = gamma.unsqueeze(0);
  if (beta.dim() == 1) beta = beta.unsqueeze(0);
  return normed * gamma.unsqueeze(-1).unsqueeze(-1) + beta.unsqueeze(-1).unsqueeze(-1);
}

// Affine projection of an ID vector to per-channel AdaIN parameters.
struct AdainProjImpl : torch::nn::Module {
  torch::nn::Linear proj{nullptr};
  int64_t channels;

  AdainProjImpl(int64_t id_dim, int64_t channels_) : channels(channels_) {
    proj = register_module("proj", torch::nn::Linear(id_dim, 2 * channels_));
    torch::NoGradGuard g;
    proj->weight.normal_(0, 0.02);
    proj->bias.zero_();
  }

  // gamma starts at 1 so an untrained block is identity-like.
  std::pair<torch::Tensor, torch::Tensor> project(const torch::Tensor& id_vec) {
    auto p = proj->forward(id_vec.dim() == 1 ? id_vec.unsqueeze(0) : id_vec);
    return {p.slice(1, 0, channels) + 1.0, p.slice(1, channels, 2 * channels)};
  }

  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& id_vec) {
    auto [gamma, beta] = project(id_vec);
    return adain(features, gamma, beta);
  }
};
TORCH_MODULE(AdainProj);

// Residual block with two AdaIN-modulated convolutions.
struct IdBlockImpl : torch::nn::Module {
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  AdainProj ada1{nullptr}, ada2{nullptr};

  IdBlockImpl(int64_t channels, int64_t id_dim) {
    using namespace torch::nn;
    conv1 = register_module("conv1", Conv2d(Conv2dOptions(channels, channels, 3).padding(1)));
    conv2 = register_module("conv2", Conv2d(Conv2dOptions(channels, channels, 3).padding(1)));
    ada1 = register_module("ada1", AdainProj(id_dim, channels));
    ada2 = register_module("ada2", AdainProj(id_dim, channels));
  }

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& id_vec) {
    auto h = torch::relu(ada1->forward(conv1->forward(x), id_vec));
    h = ada2->forward(conv2->forward(h), id_vec);
    return x + h;
  }
};
TORCH_MODULE(IdBlock);

struct GeneratorConfig {
  int64_t resolution = 64;
  int64_t base_channels = 16;
  int64_t num_id_blocks = 6;
  int64_t id_dim = 128;
  // Stride-2 stages in the encoder (mirrored in the decoder). The bottleneck
  // sits at resolution / 2^downsamples; small inputs keep fidelity with fewer
  // stages.
  int64_t downsamples = 3;

  int64_t latent_channels() const { return base_channels << downsamples; }
};

// Encoder -> ID blocks with AdaIN injection -> decoder. Output is tanh-bounded
// to [-1, 1] at the input resolution. Batch norm (not instance norm) in the
// conversion path: per-sample normalization would discard the target's global
// color, which the decoder cannot reconstruct.
struct SwapGeneratorImpl : torch::nn::Module {
  GeneratorConfig cfg;
  torch::nn::Sequential encoder{nullptr};
  std::vector<IdBlock> id_blocks;
  torch::nn::Sequential decoder{nullptr};

  SwapGeneratorImpl(const GeneratorConfig& cfg_) : cfg(cfg_) {
    using namespace torch::nn;
    int64_t c = cfg.base_channels;
    if (cfg.downsamples < 1) throw std::invalid_argument("downsamples must be >= 1");
    if (cfg.resolution % (1 << cfg.downsamples) != 0)
      throw std::invalid_argument("resolution must be divisible by 2^downsamples");
    encoder = Sequential(Conv2d(Conv2dOptions(3, c, 7).padding(3)), BatchNorm2d(c), ReLU());
    for (int64_t i = 0; i < cfg.downsamples; ++i) {
      int64_t ci = c << i, co = c << (i + 1);
      encoder->push_back(Conv2d(Conv2dOptions(ci, co, 3).stride(2).padding(1)));
      encoder->push_back(BatchNorm2d(co));
      encoder->push_back(ReLU());
    }
    register_module("encoder", encoder);
    int64_t latent = cfg.latent_channels();
    for (int64_t i = 0; i < cfg.num_id_blocks; ++i)
      id_blocks.push_back(register_module("id_block_" + std::to_string(i),
                                          IdBlock(latent, cfg.id_dim)));
    decoder = Sequential();
    for (int64_t i = cfg.downsamples; i > 0; --i) {
      int64_t ci = c << i, co = c << (i - 1);
      decoder->push_back(
          Upsample(UpsampleOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest)));
      decoder->push_back(Conv2d(Conv2dOptions(ci, co, 3).padding(1)));
      decoder->push_back(BatchNorm2d(co));
      decoder->push_back(ReLU());
    }
    decoder->push_back(Conv2d(Conv2dOptions(c, 3, 7).padding(3)));
    decoder->push_back(Tanh());
    register_module("decoder", decoder);
  }

  torch::Tensor inject(torch::Tensor latent, const torch::Tensor& id_vec) {
    for (auto& blk : id_blocks) latent = blk->forward(latent, id_vec);
    return latent;
  }

  torch::Tensor forward(const torch::Tensor& target, const torch::Tensor& id_vec) {
    if (target.size(-1) != cfg.resolution || target.size(-2) != cfg.resolution)
      throw std::invalid_argument("target resolution does not match generator config");
    bool single = target.dim() == 3;
    auto x = single ? target.unsqueeze(0) : target;
    auto id = id_vec.dim() == 1 ? id_vec.unsqueeze(0).expand({x.size(0), id_vec.size(0)}) : id_vec;
    auto out = decoder->forward(inject(encoder->forward(x), id));
    return single ? out.squeeze(0) : out;
  }
};
TORCH_MODULE(SwapGenerator);

inline torch::Tensor generate_swap(SwapGenerator& g, const torch::Tensor& target,
                                   const torch::Tensor& id_vec) {
  torch::NoGradGuard guard;
  g->eval();
  return g->forward(target, id_vec);
}

}  // namespace facke

#endif
