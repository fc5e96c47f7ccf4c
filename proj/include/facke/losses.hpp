#ifndef FACKE_LOSSES_HPP
#define FACKE_LOSSES_HPP

#include <torch/torch.h>

#include <functional>
#include <string>
#include <vector>

#include "facke/common.hpp"
#include "facke/dataset.hpp"
#include "facke/discriminator.hpp"

namespace facke {

struct LossWeights {
  double lambda_id = 30.0;
  double lambda_recon = 10.0;
  double lambda_gp = 1e-5;
  double lambda_wfm = 10.0;

  void validate() const {
    if (lambda_id < 0 || lambda_recon < 0 || lambda_gp < 0 || lambda_wfm < 0)
      throw std::invalid_argument("loss weights must be nonnegative");
  }
};

enum class FmKind { kOFm, kWFm, kWFmBar, kNFm };

struct FmVariant {
  FmKind kind = FmKind::kWFm;
  int64_t split_layer = 2;  // m, 1-based

  static FmVariant from_string(const std::string& s, int64_t m) {
    if (s == "ofm") return {FmKind::kOFm, m};
    if (s == "wfm") return {FmKind::kWFm, m};
    if (s == "wfm_bar") return {FmKind::kWFmBar, m};
    if (s == "nfm") return {FmKind::kNFm, m};
    throw ConfigError("unknown fm_variant '" + s + "' (expected ofm|wfm|wfm_bar|nfm)");
  }

  // 1-based layer indices included in the matching term.
  std::vector<int64_t> layer_set(int64_t num_layers) const {
    if (split_layer < 1 || split_layer > num_layers)
      throw std::invalid_argument("fm_split_layer out of [1, M]");
    std::vector<int64_t> out;
    switch (kind) {
      case FmKind::kOFm:
        for (int64_t i = 1; i <= num_layers; ++i) out.push_back(i);
        break;
      case FmKind::kWFm:
        for (int64_t i = split_layer; i <= num_layers; ++i) out.push_back(i);
        break;
      case FmKind::kWFmBar:
        for (int64_t i = 1; i < split_layer; ++i) out.push_back(i);
        break;
      case FmKind::kNFm:
        break;
    }
    return out;
  }
};

// L_Id = 1 - <v_R, v_S> / (|v_R| |v_S|). Accepts [d] or [B, d]; batches are
// mean-reduced.
inline torch::Tensor identity_loss(const torch::Tensor& v_r, const torch::Tensor& v_s) {
  auto a = v_r.dim() == 1 ? v_r.unsqueeze(0) : v_r;
  auto b = v_s.dim() == 1 ? v_s.unsqueeze(0) : v_s;
  if (a.sizes() != b.sizes()) throw std::invalid_argument("identity vector shape mismatch");
  auto na = a.norm(2, 1);
  auto nb = b.norm(2, 1);
  if ((na == 0).any().item<bool>() || (nb == 0).any().item<bool>())
    throw std::invalid_argument("zero identity vector");
  auto cos = (a * b).sum(1) / (na * nb);
  return (1.0 - cos).mean();
}

inline torch::Tensor recon_loss(const torch::Tensor& result, const torch::Tensor& target) {
  if (result.sizes() != target.sizes()) throw std::invalid_argument("image shape mismatch");
  return (result - target).abs().mean();
}

// Hinge discriminator loss, averaged over patches then over scales.
inline torch::Tensor adv_loss_d(const std::vector<torch::Tensor>& real_logits,
                                const std::vector<torch::Tensor>& fake_logits) {
  torch::Tensor total;
  for (size_t s = 0; s < real_logits.size(); ++s) {
    auto term = torch::relu(1.0 - real_logits[s]).mean() + torch::relu(1.0 + fake_logits[s]).mean();
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(real_logits.size());
}

inline torch::Tensor adv_loss_g(const std::vector<torch::Tensor>& fake_logits) {
  torch::Tensor total;
  for (const auto& l : fake_logits) {
    auto term = -l.mean();
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(fake_logits.size());
}

inline std::vector<torch::Tensor> logits_of(const DiscOutput& out) {
  std::vector<torch::Tensor> l;
  for (const auto& s : out) l.push_back(s.logits);
  return l;
}

inline torch::Tensor adv_loss_d(const DiscOutput& real, const DiscOutput& fake) {
  return adv_loss_d(logits_of(real), logits_of(fake));
}

inline torch::Tensor adv_loss_g(const DiscOutput& fake) { return adv_loss_g(logits_of(fake)); }

enum class GpInterpolant {
  kConvex,  // eps*x + (1-eps)*x~, the cited WGAN-GP form
  kPaper,   // eps*x - (1-eps)*x~, the printed form
};

// E[(|grad_xhat D(xhat)|_2 - 1)^2] with per-sample eps ~ U[0,1]. The critic
// maps an image batch to per-sample scalars. With create_graph the result is
// differentiable w.r.t. the critic's parameters.
inline torch::Tensor gradient_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& critic,
                                      const torch::Tensor& real, const torch::Tensor& fake,
                                      torch::Generator& gen,
                                      GpInterpolant kind = GpInterpolant::kConvex,
                                      bool create_graph = true) {
  if (real.sizes() != fake.sizes()) throw std::invalid_argument("real/fake shape mismatch");
  auto eps = torch::rand({real.size(0), 1, 1, 1}, gen, real.options());
  auto x_hat = kind == GpInterpolant::kConvex ? eps * real + (1.0 - eps) * fake
                                              : eps * real - (1.0 - eps) * fake;
  x_hat = x_hat.detach().requires_grad_(true);
  auto v = critic(x_hat);
  auto grads = torch::autograd::grad({v.sum()}, {x_hat}, /*grad_outputs=*/{},
                                     /*retain_graph=*/create_graph, /*create_graph=*/create_graph);
  auto norm = grads[0].flatten(1).norm(2, 1);
  return (norm - 1.0).pow(2).mean();
}

// Sum over scales and selected layers of mean-reduced L1 feature distances.
inline torch::Tensor feature_matching_loss(const DiscOutput& feats_r, const DiscOutput& feats_t,
                                           const FmVariant& variant) {
  if (feats_r.size() != feats_t.size())
    throw std::invalid_argument("feature list scale-count mismatch");
  torch::Tensor total = torch::zeros({});
  for (size_t s = 0; s < feats_r.size(); ++s) {
    if (feats_r[s].features.size() != feats_t[s].features.size())
      throw std::invalid_argument("feature list length mismatch");
    auto layers = variant.layer_set(static_cast<int64_t>(feats_r[s].features.size()));
    for (int64_t i : layers)
      total = total + (feats_r[s].features[i - 1] - feats_t[s].features[i - 1]).abs().mean();
  }
  return total;
}

struct GenSubLosses {
  torch::Tensor id;
  torch::Tensor recon;
  torch::Tensor adv_g;
  torch::Tensor fm;
};

// Generator objective; reconstruction is optimized only on intra-ID batches.
// The gradient penalty belongs to the discriminator objective.
inline torch::Tensor total_loss_g(const GenSubLosses& sub, const LossWeights& w, PairMode mode) {
  w.validate();
  auto total = w.lambda_id * sub.id + sub.adv_g + w.lambda_wfm * sub.fm;
  if (mode == PairMode::kIntra) total = total + w.lambda_recon * sub.recon;
  return total;
}

}  // namespace facke

#endif
