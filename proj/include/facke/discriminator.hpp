#ifndef FACKE_DISCRIMINATOR_HPP
#define FACKE_DISCRIMINATOR_HPP

#include <torch/torch.h>

#include <vector>

#include "facke/common.hpp"

namespace facke {

struct ScaleOutput {
  std::vector<torch::Tensor> features;  // shallowest -> deepest, M maps
  torch::Tensor logits;                 // unbounded patch logits
};
using DiscOutput = std::vector<ScaleOutput>;

struct DiscriminatorConfig {
  int64_t layers = 4;  // feature taps M per scale
  int64_t base_channels = 16;
};

// PatchGAN discriminator exposing every intermediate activation.
struct PatchDiscriminatorImpl : torch::nn::Module {
  std::vector<torch::nn::Sequential> blocks;
  torch::nn::Conv2d out_conv{nullptr};

  PatchDiscriminatorImpl(const DiscriminatorConfig& cfg) {
    using namespace torch::nn;
    int64_t in = 3;
    int64_t c = cfg.base_channels;
    for (int64_t i = 0; i < cfg.layers; ++i) {
      auto block = Sequential(Conv2d(Conv2dOptions(in, c, 4).stride(2).padding(1)),
                              LeakyReLU(LeakyReLUOptions().negative_slope(0.2)));
      blocks.push_back(register_module("block_" + std::to_string(i), block));
      in = c;
      c = std::min<int64_t>(c * 2, 8 * cfg.base_channels);
    }
    out_conv = register_module("out_conv", Conv2d(Conv2dOptions(in, 1, 4).stride(1).padding(1)));
  }

  // Small activations are replication-padded up to the kernel size so deep
  // stacks remain valid at desk-scale resolutions.
  static torch::Tensor ensure_min_size(torch::Tensor h) {
    int64_t ph = std::max<int64_t>(0, 4 - h.size(2));
    int64_t pw = std::max<int64_t>(0, 4 - h.size(3));
    if (ph > 0 || pw > 0) h = torch::replication_pad2d(h, {0, pw, 0, ph});
    return h;
  }

  ScaleOutput forward(const torch::Tensor& img) {
    ScaleOutput out;
    auto h = img;
    for (auto& blk : blocks) {
      h = blk->forward(ensure_min_size(h));
      out.features.push_back(h);
    }
    out.logits = out_conv->forward(ensure_min_size(h));
    return out;
  }
};
TORCH_MODULE(PatchDiscriminator);

// Two collaborating patch discriminators; the second sees a 2x average-pooled
// input.
struct MultiScaleDiscriminatorImpl : torch::nn::Module {
  PatchDiscriminator d_full{nullptr}, d_half{nullptr};
  int64_t layers_per_d;

  MultiScaleDiscriminatorImpl(const DiscriminatorConfig& cfg) : layers_per_d(cfg.layers) {
    d_full = register_module("d_full", PatchDiscriminator(cfg));
    d_half = register_module("d_half", PatchDiscriminator(cfg));
  }

  DiscOutput forward(const torch::Tensor& img0) {
    auto img = img0.dim() == 3 ? img0.unsqueeze(0) : img0;
    DiscOutput out;
    out.push_back(d_full->forward(img));
    out.push_back(d_half->forward(torch::avg_pool2d(img, 2)));
    return out;
  }
};
TORCH_MODULE(MultiScaleDiscriminator);

inline DiscOutput discriminate(MultiScaleDiscriminator& d, const torch::Tensor& img) {
  return d->forward(img);
}

// Per-sample scalar critic value: patch-mean logits averaged over scales.
// This is the D(x) that the gradient penalty differentiates.
inline torch::Tensor critic_value(MultiScaleDiscriminator& d, const torch::Tensor& img) {
  auto out = d->forward(img);
  torch::Tensor v;
  for (const auto& scale : out) {
    auto m = scale.logits.mean({1, 2, 3});
    v = v.defined() ? v + m : m;
  }
  return v / static_cast<double>(out.size());
}

}  // namespace facke

#endif
