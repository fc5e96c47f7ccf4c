#ifndef FACKE_IDENTITY_HPP
#define FACKE_IDENTITY_HPP

#include <torch/torch.h>

#include <cmath>
#include <string>
#include <vector>

#include "facke/common.hpp"
#include "facke/dataset.hpp"

namespace facke {

struct ExtractorConfig {
  int64_t embed_dim = 128;
  int64_t base_channels = 16;
  int64_t resolution = 64;
  int64_t iterations = 1500;
  int64_t batch_size = 16;
  double lr = 1e-3;
  double margin = 0.2;   // additive margin on the true-class cosine
  double scale = 16.0;   // logit scale
  uint64_t seed = 1;
};

// Small convolutional embedder standing in for a pretrained face recognizer.
// Four stride-2 blocks, global pooling, L2-normalized 128-d output.
struct IdentityExtractorImpl : torch::nn::Module {
  torch::nn::Sequential backbone{nullptr};
  torch::nn::Linear head{nullptr};
  int64_t embed_dim;
  int64_t resolution;

  IdentityExtractorImpl(const ExtractorConfig& cfg)
      : embed_dim(cfg.embed_dim), resolution(cfg.resolution) {
    using namespace torch::nn;
    int64_t c = cfg.base_channels;
    backbone = Sequential(
        Conv2d(Conv2dOptions(3, c, 3).stride(2).padding(1)), BatchNorm2d(c), LeakyReLU(LeakyReLUOptions().negative_slope(0.1)),
        Conv2d(Conv2dOptions(c, 2 * c, 3).stride(2).padding(1)), BatchNorm2d(2 * c), LeakyReLU(LeakyReLUOptions().negative_slope(0.1)),
        Conv2d(Conv2dOptions(2 * c, 4 * c, 3).stride(2).padding(1)), BatchNorm2d(4 * c), LeakyReLU(LeakyReLUOptions().negative_slope(0.1)),
        Conv2d(Conv2dOptions(4 * c, 8 * c, 3).stride(2).padding(1)), BatchNorm2d(8 * c), LeakyReLU(LeakyReLUOptions().negative_slope(0.1)));
    head = Linear(8 * c, cfg.embed_dim);
    register_module("backbone", backbone);
    register_module("head", head);
  }

  // Differentiable embedding; inputs outside the native resolution are resized.
  torch::Tensor embed(torch::Tensor x) {
    if (x.dim() == 3) x = x.unsqueeze(0);
    if (x.size(2) != resolution || x.size(3) != resolution)
      x = torch::nn::functional::interpolate(
          x, torch::nn::functional::InterpolateFuncOptions()
                 .size(std::vector<int64_t>{resolution, resolution})
                 .mode(torch::kBilinear)
                 .align_corners(false));
    auto f = backbone->forward(x);
    f = torch::adaptive_avg_pool2d(f, {1, 1}).flatten(1);
    auto v = head->forward(f);
    return torch::nn::functional::normalize(v, torch::nn::functional::NormalizeFuncOptions().dim(1));
  }

  uint64_t fingerprint() const { return module_fingerprint(*this); }
};
TORCH_MODULE(IdentityExtractor);

inline torch::Tensor extract_identity(IdentityExtractor& ex, const torch::Tensor& img) {
  if (!img.isfinite().all().item<bool>()) throw std::invalid_argument("non-finite pixels in input image");
  torch::NoGradGuard guard;
  ex->eval();
  auto v = ex->embed(img.dim() == 3 ? img.unsqueeze(0) : img);
  return img.dim() == 3 ? v.squeeze(0) : v;
}

inline double cosine_similarity(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.numel() != b.numel()) throw std::invalid_argument("identity vector dimension mismatch");
  auto na = a.norm().item<double>();
  auto nb = b.norm().item<double>();
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("zero identity vector");
  return (a.flatten().dot(b.flatten()).item<double>()) / (na * nb);
}

// L2 distance between normalized embeddings under the evaluation extractor.
inline double id_retrieval_distance(const torch::Tensor& result, const torch::Tensor& source,
                                    IdentityExtractor& eval_ex) {
  auto vr = extract_identity(eval_ex, result);
  auto vs = extract_identity(eval_ex, source);
  vr = vr / vr.norm();
  vs = vs / vs.norm();
  return (vr - vs).norm().item<double>();
}

struct TrainedExtractor {
  IdentityExtractor extractor{nullptr};
  double held_out_accuracy = 0.0;
};

// Classifier training with an additive-margin softmax head; the normalized
// penultimate features are the ID vectors.
inline TrainedExtractor train_desk_extractor(const FaceDataset& ds, const ExtractorConfig& cfg) {
  int64_t usable = 0;
  for (int64_t id = 0; id < ds.num_identities(); ++id)
    if (ds.images_of(id) >= 2) ++usable;
  if (ds.num_identities() < 2 || usable < 2)
    throw TrainError("extractor training needs >= 2 identities with >= 2 images each");

  torch::manual_seed(cfg.seed);
  IdentityExtractor ex(cfg);
  int64_t num_classes = ds.num_identities();
  auto class_weights =
      torch::empty({num_classes, cfg.embed_dim}).normal_(0, 0.01).set_requires_grad(true);

  // Deterministic 80/20 split per identity, at least one image held out.
  std::vector<std::pair<int64_t, int64_t>> train_set, held_out;
  for (int64_t id = 0; id < ds.num_identities(); ++id) {
    int64_t n = ds.images_of(id);
    int64_t ntrain = n >= 2 ? std::max<int64_t>(1, (n * 4) / 5) : n;
    if (ntrain == n && n >= 2) ntrain = n - 1;
    for (int64_t i = 0; i < n; ++i)
      (i < ntrain ? train_set : held_out).push_back({id, i});
  }

  std::vector<torch::Tensor> params;
  for (auto& p : ex->parameters()) params.push_back(p);
  params.push_back(class_weights);
  torch::optim::Adam opt(params, torch::optim::AdamOptions(cfg.lr));

  std::mt19937_64 rng(mix_seed(cfg.seed, 0, 0x33u));
  ex->train();
  for (int64_t it = 0; it < cfg.iterations; ++it) {
    std::vector<torch::Tensor> imgs;
    std::vector<int64_t> labels;
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      auto [id, i] = train_set[detail::draw(rng, static_cast<int64_t>(train_set.size()))];
      imgs.push_back(ds.image(id, i));
      labels.push_back(id);
    }
    auto x = torch::stack(imgs);
    auto y = torch::tensor(labels);
    auto v = ex->embed(x);
    auto w = torch::nn::functional::normalize(
        class_weights, torch::nn::functional::NormalizeFuncOptions().dim(1));
    auto cos = v.mm(w.t());
    auto onehot = torch::zeros_like(cos).scatter_(1, y.unsqueeze(1), 1.0);
    auto logits = cfg.scale * (cos - cfg.margin * onehot);
    auto loss = torch::nn::functional::cross_entropy(logits, y);
    opt.zero_grad();
    loss.backward();
    opt.step();
  }

  ex->eval();
  torch::NoGradGuard guard;
  int64_t correct = 0;
  auto w = torch::nn::functional::normalize(class_weights,
                                            torch::nn::functional::NormalizeFuncOptions().dim(1));
  for (const auto& [id, i] : held_out) {
    auto v = ex->embed(ds.image(id, i).unsqueeze(0));
    if (v.mm(w.t()).argmax(1).item<int64_t>() == id) ++correct;
  }
  double acc = held_out.empty() ? 0.0 : static_cast<double>(correct) / held_out.size();
  return {ex, acc};
}

inline IdCache precompute_id_vectors(const FaceDataset& ds, IdentityExtractor& ex) {
  if (ds.resolution < 8)
    throw CacheError("dataset resolution too small for the identity extractor");
  return build_id_cache(
      ds, [&](const torch::Tensor& img) { return extract_identity(ex, img); }, ex->fingerprint());
}

}  // namespace facke

#endif
