#ifndef FACKE_CHECKPOINT_HPP
#define FACKE_CHECKPOINT_HPP

#include <torch/torch.h>

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "facke/common.hpp"

namespace facke {

struct CheckpointHeader {
  std::string tag;       // architecture tag: simswap | cvae | cvae-gan | ddpm | extractor | disc
  int64_t step = 0;
  std::string config_echo;
  std::map<std::string, double> metrics;
};

struct CheckpointRecord {
  int64_t step = 0;
  std::string tag;
  std::string path;
  std::map<std::string, double> metrics;
};

namespace detail {

inline void write_string(std::ofstream& out, const std::string& s) {
  uint64_t len = s.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(s.data(), s.size());
}

inline std::string read_string(std::ifstream& in) {
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string s(len, '\0');
  in.read(s.data(), len);
  return s;
}

}  // namespace detail

// Binary checkpoint: header (tag, step, config echo, metrics) + named f32
// tensors. Weights round-trip bitwise.
inline void save_checkpoint(const torch::nn::Module& m, const std::string& path,
                            const CheckpointHeader& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TrainError("cannot write checkpoint: " + path);
  out.write("FACKECKP", 8);
  uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  detail::write_string(out, header.tag);
  out.write(reinterpret_cast<const char*>(&header.step), sizeof(header.step));
  detail::write_string(out, header.config_echo);
  uint64_t nmetrics = header.metrics.size();
  out.write(reinterpret_cast<const char*>(&nmetrics), sizeof(nmetrics));
  for (const auto& [k, v] : header.metrics) {
    detail::write_string(out, k);
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }

  auto params = m.named_parameters(true);
  auto buffers = m.named_buffers(true);
  uint64_t ntensors = params.size() + buffers.size();
  out.write(reinterpret_cast<const char*>(&ntensors), sizeof(ntensors));
  auto write_tensor = [&](const std::string& name, const torch::Tensor& t0) {
    auto t = t0.detach().contiguous().to(torch::kFloat32);
    detail::write_string(out, name);
    uint32_t ndim = static_cast<uint32_t>(t.dim());
    out.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
    for (int64_t d = 0; d < t.dim(); ++d) {
      int64_t s = t.size(d);
      out.write(reinterpret_cast<const char*>(&s), sizeof(s));
    }
    out.write(reinterpret_cast<const char*>(t.data_ptr<float>()), t.numel() * sizeof(float));
  };
  for (const auto& p : params) write_tensor("p:" + p.key(), p.value());
  for (const auto& b : buffers) write_tensor("b:" + b.key(), b.value());
}

inline CheckpointHeader read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrainError("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 8) != "FACKECKP") throw TrainError("not a checkpoint file: " + path);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != 1) throw TrainError("unsupported checkpoint version");
  CheckpointHeader h;
  h.tag = detail::read_string(in);
  in.read(reinterpret_cast<char*>(&h.step), sizeof(h.step));
  h.config_echo = detail::read_string(in);
  uint64_t nmetrics = 0;
  in.read(reinterpret_cast<char*>(&nmetrics), sizeof(nmetrics));
  for (uint64_t i = 0; i < nmetrics; ++i) {
    auto k = detail::read_string(in);
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    h.metrics[k] = v;
  }
  return h;
}

inline CheckpointHeader load_checkpoint(torch::nn::Module& m, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrainError("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 8) != "FACKECKP") throw TrainError("not a checkpoint file: " + path);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  CheckpointHeader h;
  h.tag = detail::read_string(in);
  in.read(reinterpret_cast<char*>(&h.step), sizeof(h.step));
  h.config_echo = detail::read_string(in);
  uint64_t nmetrics = 0;
  in.read(reinterpret_cast<char*>(&nmetrics), sizeof(nmetrics));
  for (uint64_t i = 0; i < nmetrics; ++i) {
    auto k = detail::read_string(in);
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    h.metrics[k] = v;
  }

  auto params = m.named_parameters(true);
  auto buffers = m.named_buffers(true);
  uint64_t ntensors = 0;
  in.read(reinterpret_cast<char*>(&ntensors), sizeof(ntensors));
  if (ntensors != params.size() + buffers.size())
    throw TrainError("checkpoint architecture mismatch: tensor count differs (" + path + ")");
  torch::NoGradGuard guard;
  for (uint64_t i = 0; i < ntensors; ++i) {
    auto name = detail::read_string(in);
    uint32_t ndim = 0;
    in.read(reinterpret_cast<char*>(&ndim), sizeof(ndim));
    std::vector<int64_t> shape(ndim);
    for (auto& s : shape) in.read(reinterpret_cast<char*>(&s), sizeof(s));
    auto t = torch::empty(shape, torch::kFloat32);
    in.read(reinterpret_cast<char*>(t.data_ptr<float>()), t.numel() * sizeof(float));

    torch::Tensor* dst = nullptr;
    if (name.rfind("p:", 0) == 0) dst = params.find(name.substr(2));
    else if (name.rfind("b:", 0) == 0) dst = buffers.find(name.substr(2));
    if (!dst) throw TrainError("checkpoint architecture mismatch: unknown tensor '" + name + "'");
    if (dst->sizes() != t.sizes())
      throw TrainError("checkpoint architecture mismatch: shape of '" + name + "' differs");
    dst->copy_(t);
  }
  if (!in) throw TrainError("truncated checkpoint: " + path);
  return h;
}

}  // namespace facke

#endif
