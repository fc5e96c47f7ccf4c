#ifndef FACKE_COMMON_HPP
#define FACKE_COMMON_HPP

#include <torch/torch.h>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace facke {

struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CacheError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream id for a (seed, step, tag) triple. All batch randomness derives from
// this value alone, never from worker-local state.
inline uint64_t mix_seed(uint64_t seed, uint64_t step, uint64_t tag) {
  return splitmix64(splitmix64(splitmix64(seed) ^ step) ^ tag);
}

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

// Content hash of a module's parameters and buffers, in registration order.
inline uint64_t module_fingerprint(const torch::nn::Module& m) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : m.named_parameters(/*recurse=*/true)) {
    h = fnv1a64(p.key(), h);
    auto t = p.value().detach().contiguous().to(torch::kFloat32);
    h = fnv1a64(t.data_ptr<float>(), t.numel() * sizeof(float), h);
  }
  for (const auto& b : m.named_buffers(/*recurse=*/true)) {
    h = fnv1a64(b.key(), h);
    auto t = b.value().detach().contiguous().to(torch::kFloat32);
    h = fnv1a64(t.data_ptr<float>(), t.numel() * sizeof(float), h);
  }
  return h;
}

// Seeded generator for an isolated noise stream.
inline torch::Generator make_generator(uint64_t seed) {
  auto gen = at::detail::createCPUGenerator();
  gen.set_current_seed(seed);
  return gen;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace facke

#endif
