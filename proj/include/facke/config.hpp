#ifndef FACKE_CONFIG_HPP
#define FACKE_CONFIG_HPP

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "facke/common.hpp"

namespace facke {

struct KeyDef {
  std::string name;
  std::string def;
  std::string doc;
};

// Flat `key = value` configuration with a closed key schema. Unknown keys are
// rejected with the offending line number.
class Config {
 public:
  static const std::vector<KeyDef>& schema() {
    static const std::vector<KeyDef> keys = {
        {"seed", "0", "global base seed"},
        {"run.dir", "runs", "root directory for run artifacts"},
        {"stage", "", "comma list of pipeline stages (empty = all): ingest,extractors,train,eval"},

        {"dataset.root", "", "corpus root: <root>/<identity>/<images>"},
        {"dataset.resolution", "64", "square image resolution after ingestion"},
        {"dataset.batch_size", "4", "pairs per training batch"},
        {"dataset.num_workers", "1", "sampler worker count (values are worker-invariant)"},
        {"dataset.identity_grouping", "true", "intra batches pair two distinct images per identity"},

        {"extractor.embed_dim", "128", "identity embedding dimension"},
        {"extractor.base_channels", "16", "width of the first extractor conv block"},
        {"extractor.iterations", "1500", "extractor training iterations"},
        {"extractor.batch_size", "16", "extractor training batch size"},
        {"extractor.lr", "1e-3", "extractor Adam step size"},
        {"extractor.margin", "0.2", "additive margin of the softmax head"},
        {"extractor.scale", "16", "logit scale of the margin softmax head"},
        {"extractor.train_seed", "1", "seed of the training-role extractor"},
        {"extractor.eval_seed", "2", "seed of the evaluation-role extractor"},
        {"extractor.eval_width_mult", "1.5", "width multiplier of the evaluation extractor"},

        {"gan.base_channels", "16", "generator encoder width"},
        {"gan.num_id_blocks", "6", "residual AdaIN blocks in the ID injection stack"},
        {"gan.downsamples", "3", "stride-2 encoder stages; bottleneck is resolution / 2^n"},
        {"disc.layers", "4", "conv layers per patch discriminator (feature taps M)"},
        {"disc.base_channels", "16", "discriminator width"},

        {"lambda_id", "30", "identity loss weight"},
        {"lambda_recon", "10", "reconstruction loss weight (intra batches only)"},
        {"lambda_gp", "1e-5", "gradient penalty weight (discriminator objective)"},
        {"lambda_wfm", "10", "feature matching loss weight"},
        {"fm_variant", "wfm", "feature matching layer set: ofm|wfm|wfm_bar|nfm"},
        {"fm_split_layer", "2", "first deep layer m for wfm / last+1 shallow layer for wfm_bar"},
        {"gp_interpolant", "convex", "gradient penalty interpolant: convex|paper"},

        {"cvae.kl_weight", "1e-4", "posterior regularization weight"},
        {"cvae.recon_intra", "10", "reconstruction weight on intra batches"},
        {"cvae.recon_inter", "1", "reconstruction weight on inter batches"},
        {"cvae.latent_channels", "128", "channels of the 2D latent map"},

        {"diffusion.steps", "100", "diffusion step count T"},
        {"diffusion.beta_start", "1e-4", "first noise variance"},
        // Desk default: with T = 100, keeping alpha_bar(T) ~ 0.8 preserves
        // enough source signal for ILVR conditioning to carry identity.
        {"diffusion.beta_end", "0.004", "last noise variance"},
        {"diffusion.schedule", "linear", "noise schedule kind"},
        {"diffusion.base_channels", "32", "noise predictor width"},
        {"diffusion.resolution", "32", "diffusion model resolution"},
        {"diffusion.lowpass", "avg", "ILVR filter: avg (exact projection) | bicubic"},
        {"diffusion.ilvr_scale", "4", "default ILVR low-pass scale N"},

        {"train.model", "simswap", "simswap|cvae|cvae-gan|ddpm"},
        {"train.iterations", "1000", "training iterations"},
        {"train.lr", "4e-4", "generator Adam step size"},
        // G:D step ratio 4:1 keeps the patch discriminators from overpowering
        // the reconstruction objective at desk scale.
        {"train.lr_d", "1e-4", "discriminator Adam step size"},
        {"train.beta1", "0.0", "Adam beta1"},
        {"train.beta2", "0.99", "Adam beta2"},
        {"train.eval_every", "500", "checkpoint/metric cadence in iterations"},
        {"train.d_steps_per_g", "1", "discriminator updates per generator update"},
        {"train.flip", "false", "horizontal flip augmentation"},
        {"train.init", "", "initial checkpoint (ddpm finetuning)"},

        {"eval.num_pairs", "64", "pairs per class in the evaluation pairing"},
        {"eval.seed", "123", "seed of the persisted evaluation pairing"},

        {"ablate.axis", "fm", "ablation grid axis: fm | ddpm_lr"},
        {"ablate.lrs", "1e-4,5e-5,1e-5,5e-6", "finetune rates of the ddpm_lr grid"},
    };
    return keys;
  }

  Config() {
    for (const auto& k : schema()) values_[k.name] = k.def;
  }

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
  }

  static Config from_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) + ": expected `key = value`, got '" + line + "'");
      std::string key = trim(line.substr(0, eq));
      std::string val = trim(line.substr(eq + 1));
      if (!cfg.values_.count(key))
        throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
      cfg.values_[key] = val;
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& val) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
    it->second = val;
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
    return it->second;
  }

  int64_t i64(const std::string& key) const {
    try {
      return std::stoll(str(key));
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': not an integer: '" + str(key) + "'");
    }
  }

  double f64(const std::string& key) const {
    try {
      return std::stod(str(key));
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': not a number: '" + str(key) + "'");
    }
  }

  bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': not a boolean: '" + v + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(str(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  // Deterministic serialization of the effective configuration. Reparsing the
  // echo yields an identical config.
  std::string echo() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
    return out.str();
  }

  bool operator==(const Config& other) const { return values_ == other.values_; }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

inline Config parse_config(const std::string& path) { return Config::from_file(path); }

}  // namespace facke

#endif
