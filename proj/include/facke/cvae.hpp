#ifndef FACKE_CVAE_HPP
#define FACKE_CVAE_HPP

#include <torch/torch.h>

#include "facke/common.hpp"
#include "facke/dataset.hpp"
#include "facke/generator.hpp"

namespace facke {

constexpr double kLogvarClamp = 20.0;

struct LatentDistribution {
  torch::Tensor mu;      // [B, C_z, H_z, W_z]
  torch::Tensor logvar;  // same shape, clamped to [-20, 20]
};

struct CvaeWeights {
  double kl_weight = 1e-4;
  double recon_intra = 10.0;
  double recon_inter = 1.0;
  double id_weight = 30.0;

  void validate() const {
    if (kl_weight < 0 || recon_intra < 0 || recon_inter < 0 || id_weight < 0)
      throw std::invalid_argument("cvae weights must be nonnegative");
  }
};

// Conditional VAE generator with a 2D convolutional latent. The condition
// image enters by channel concatenation; ID injection reuses the AdaIN block
// stack on the reparameterized latent.
struct CvaeGeneratorImpl : torch::nn::Module {
  GeneratorConfig cfg;
  torch::nn::Sequential cond_encoder{nullptr};
  torch::nn::Conv2d mu_head{nullptr}, logvar_head{nullptr};
  std::vector<IdBlock> id_blocks;
  torch::nn::Sequential decoder{nullptr};

  CvaeGeneratorImpl(const GeneratorConfig& cfg_) : cfg(cfg_) {
    using namespace torch::nn;
    if (cfg.downsamples != 3)
      throw std::invalid_argument("CVAE generator uses a fixed 3-stage encoder");
    int64_t c = cfg.base_channels;
    int64_t cz = cfg.latent_channels();
    cond_encoder = Sequential(
        Conv2d(Conv2dOptions(6, c, 7).padding(3)), InstanceNorm2d(InstanceNorm2dOptions(c).affine(true)), ReLU(),
        Conv2d(Conv2dOptions(c, 2 * c, 3).stride(2).padding(1)), InstanceNorm2d(InstanceNorm2dOptions(2 * c).affine(true)), ReLU(),
        Conv2d(Conv2dOptions(2 * c, 4 * c, 3).stride(2).padding(1)), InstanceNorm2d(InstanceNorm2dOptions(4 * c).affine(true)), ReLU(),
        Conv2d(Conv2dOptions(4 * c, 8 * c, 3).stride(2).padding(1)), InstanceNorm2d(InstanceNorm2dOptions(8 * c).affine(true)), ReLU());
    register_module("cond_encoder", cond_encoder);
    mu_head = register_module("mu_head", Conv2d(Conv2dOptions(8 * c, cz, 3).padding(1)));
    logvar_head = register_module("logvar_head", Conv2d(Conv2dOptions(8 * c, cz, 3).padding(1)));
    for (int64_t i = 0; i < cfg.num_id_blocks; ++i)
      id_blocks.push_back(register_module("id_block_" + std::to_string(i), IdBlock(cz, cfg.id_dim)));
    decoder = Sequential(
        Upsample(UpsampleOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest)),
        Conv2d(Conv2dOptions(cz, 4 * c, 3).padding(1)), InstanceNorm2d(InstanceNorm2dOptions(4 * c).affine(true)), ReLU(),
        Upsample(UpsampleOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest)),
        Conv2d(Conv2dOptions(4 * c, 2 * c, 3).padding(1)), InstanceNorm2d(InstanceNorm2dOptions(2 * c).affine(true)), ReLU(),
        Upsample(UpsampleOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest)),
        Conv2d(Conv2dOptions(2 * c, c, 3).padding(1)), InstanceNorm2d(InstanceNorm2dOptions(c).affine(true)), ReLU(),
        Conv2d(Conv2dOptions(c, 3, 7).padding(3)), Tanh());
    register_module("decoder", decoder);
  }

  LatentDistribution encode(const torch::Tensor& x0, const torch::Tensor& y0) {
    auto x = x0.dim() == 3 ? x0.unsqueeze(0) : x0;
    auto y = y0.dim() == 3 ? y0.unsqueeze(0) : y0;
    if (x.sizes() != y.sizes()) throw std::invalid_argument("target/condition shape mismatch");
    auto h = cond_encoder->forward(torch::cat({x, y}, 1));
    return {mu_head->forward(h), logvar_head->forward(h).clamp(-kLogvarClamp, kLogvarClamp)};
  }

  torch::Tensor decode(const torch::Tensor& z0, const torch::Tensor& id_vec) {
    auto z = z0.dim() == 3 ? z0.unsqueeze(0) : z0;
    if (z.size(1) != cfg.latent_channels())
      throw std::invalid_argument("latent channel count does not match config");
    auto id = id_vec.dim() == 1 ? id_vec.unsqueeze(0).expand({z.size(0), id_vec.size(0)}) : id_vec;
    auto h = z;
    for (auto& blk : id_blocks) h = blk->forward(h, id);
    auto out = decoder->forward(h);
    return z0.dim() == 3 ? out.squeeze(0) : out;
  }

  // SwapGenerator-compatible surface: the CVAE-GAN assembly swaps this in for
  // the CGAN generator unchanged.
  torch::Tensor forward(const torch::Tensor& target, const torch::Tensor& id_vec,
                        const torch::Tensor& condition, torch::Generator& gen) {
    auto dist = encode(target, condition);
    auto z = reparameterize(dist, gen);
    return decode(z, id_vec);
  }

  static torch::Tensor reparameterize(const LatentDistribution& dist, torch::Generator& gen) {
    auto noise = torch::randn(dist.mu.sizes(), gen, dist.mu.options());
    return dist.mu + torch::exp(dist.logvar * 0.5) * noise;
  }
};
TORCH_MODULE(CvaeGenerator);

inline LatentDistribution encode(CvaeGenerator& g, const torch::Tensor& x, const torch::Tensor& y) {
  return g->encode(x, y);
}

inline torch::Tensor reparameterize(const LatentDistribution& dist, torch::Generator& gen) {
  return CvaeGeneratorImpl::reparameterize(dist, gen);
}

inline torch::Tensor decode(CvaeGenerator& g, const torch::Tensor& z, const torch::Tensor& id_vec) {
  return g->decode(z, id_vec);
}

// D_KL(N(mu, sigma^2) || N(0, 1)), mean over latent elements.
inline torch::Tensor kl_loss(const LatentDistribution& dist) {
  if (!dist.mu.isfinite().all().item<bool>() || !dist.logvar.isfinite().all().item<bool>())
    throw std::invalid_argument("non-finite latent distribution");
  return 0.5 * (dist.mu.pow(2) + dist.logvar.exp() - 1.0 - dist.logvar).mean();
}

inline torch::Tensor cvae_total_loss(const torch::Tensor& recon, const torch::Tensor& kl,
                                     const torch::Tensor& id_loss, PairMode mode,
                                     const CvaeWeights& w) {
  w.validate();
  double recon_w = mode == PairMode::kIntra ? w.recon_intra : w.recon_inter;
  return recon_w * recon + w.kl_weight * kl + w.id_weight * id_loss;
}

}  // namespace facke

#endif
