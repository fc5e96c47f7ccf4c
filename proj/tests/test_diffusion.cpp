#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "facke/diffusion.hpp"

using namespace facke;

TEST_CASE("noise schedule identities") {
  SECTION("single step product") {
    auto s = make_schedule(1, 0.1, 0.1);
    CHECK(s.alpha_bar(0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(s.alpha_bar(1) == Catch::Approx(0.9).margin(1e-12));
  }

  SECTION("alpha_bar is strictly decreasing") {
    auto s = make_schedule(50, 1e-4, 0.02);
    for (int64_t t = 1; t <= s.T; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  }

  SECTION("the long reference schedule is fully destructive") {
    auto s = make_schedule(1000, 1e-4, 0.02);
    CHECK(s.alpha_bar(1000) < 1e-4);
  }

  SECTION("invalid parameters are rejected") {
    CHECK_THROWS_AS(make_schedule(0, 1e-4, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(10, 0.02, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(10, 1e-4, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(10, 1e-4, 0.02, "cosine"), std::invalid_argument);
  }
}

TEST_CASE("forward step identities") {
  auto x = torch::rand({3, 4, 4});

  SECTION("vanishing beta leaves the sample unchanged") {
    auto s = make_schedule(1, 1e-12, 1e-12);
    auto out = forward_step(x, 1, torch::randn_like(x), s);
    CHECK((out - x).abs().max().item<double>() <= 1e-5);
  }

  SECTION("zero noise is a pure contraction") {
    auto s = make_schedule(1, 0.19, 0.19);
    auto out = forward_step(x, 1, torch::zeros_like(x), s);
    CHECK((out - std::sqrt(1 - 0.19) * x).abs().max().item<double>() <= 1e-6);
  }

  SECTION("conditional variance equals beta_t") {
    auto s = make_schedule(1, 0.07, 0.07);
    const int64_t n = 100000;
    auto gen = make_generator(3);
    auto x0 = torch::full({n}, 0.3);
    auto out = forward_step(x0, 1, torch::randn({n}, gen), s);
    double var = out.var(/*unbiased=*/true).item<double>();
    double sigma = 0.07 * std::sqrt(2.0 / double(n - 1));
    CHECK(std::abs(var - 0.07) <= 3 * sigma);
  }

  SECTION("step bounds are enforced") {
    auto s = make_schedule(4, 1e-4, 0.02);
    CHECK_THROWS_AS(forward_step(x, 0, torch::zeros_like(x), s), std::invalid_argument);
    CHECK_THROWS_AS(forward_step(x, 5, torch::zeros_like(x), s), std::invalid_argument);
  }
}

TEST_CASE("forward marginal identities") {
  auto x = torch::rand({3, 4, 4});
  auto s = make_schedule(10, 0.1, 0.5);

  SECTION("t = 0 returns x0 exactly") {
    CHECK(torch::equal(forward_marginal(x, 0, torch::randn_like(x), s), x));
  }

  SECTION("fully noised limit returns the noise") {
    auto heavy = make_schedule(40, 0.5, 0.999);
    auto z = torch::randn_like(x);
    auto out = forward_marginal(x, 40, z, heavy);
    CHECK((out - z).abs().max().item<double>() <= 1e-4);
  }

  SECTION("iterated forward steps match the marginal in distribution") {
    // Monte-Carlo composition oracle on a single pixel, T = 10.
    const int64_t n = 10000;
    auto gen = make_generator(17);
    double x0 = 0.8;
    auto xt = torch::full({n}, x0);
    for (int64_t t = 1; t <= s.T; ++t) xt = forward_step(xt, t, torch::randn({n}, gen), s);

    double ab = s.alpha_bar(s.T);
    double expect_mean = std::sqrt(ab) * x0;
    double expect_var = 1.0 - ab;
    double mean = xt.mean().item<double>();
    double var = xt.var(/*unbiased=*/true).item<double>();
    double mean_sigma = std::sqrt(expect_var / n);
    double var_sigma = expect_var * std::sqrt(2.0 / double(n - 1));
    CHECK(std::abs(mean - expect_mean) <= 3 * mean_sigma);
    CHECK(std::abs(var - expect_var) <= 3 * var_sigma);
  }
}

namespace {

// Oracle noise model: inverts the marginal so the predicted eps is exact.
struct EpsOracleImpl {
  torch::Tensor x0;
  DiffusionSchedule sched;
  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& t) {
    auto ab = sched.alpha_bars.index_select(0, t).to(x_t.dtype()).view({-1, 1, 1, 1});
    return (x_t - ab.sqrt() * x0) / (1.0 - ab).sqrt();
  }
  void eval() {}
};

struct EpsOracle {
  std::shared_ptr<EpsOracleImpl> impl;
  EpsOracleImpl* operator->() const { return impl.get(); }
};

struct ZeroModelImpl {
  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor&) {
    return torch::zeros_like(x_t);
  }
  void eval() {}
};
struct ZeroModel {
  std::shared_ptr<ZeroModelImpl> impl = std::make_shared<ZeroModelImpl>();
  ZeroModelImpl* operator->() const { return impl.get(); }
};

}  // namespace

TEST_CASE("ddpm training loss oracles") {
  auto s = make_schedule(10, 0.05, 0.3);
  auto gen = make_generator(23);
  auto x0 = torch::rand({4, 3, 4, 4}) * 2 - 1;

  SECTION("an exact eps predictor reaches zero loss") {
    EpsOracle oracle{std::make_shared<EpsOracleImpl>(EpsOracleImpl{x0, s})};
    auto loss = ddpm_train_loss(oracle, x0, gen, s);
    CHECK(loss.item<double>() <= 1e-10);
  }

  SECTION("the zero predictor pays the noise energy") {
    ZeroModel zero;
    const int64_t n = 2000;
    auto big = torch::zeros({n, 3, 2, 2});
    auto loss = ddpm_train_loss(zero, big, gen, s);
    // E eps^2 = 1 per element; MC sigma of the mean of n*12 squared normals
    double sigma = std::sqrt(2.0 / double(n * 12));
    CHECK(std::abs(loss.item<double>() - 1.0) <= 4 * sigma);
  }

  SECTION("training reduces the loss on a two-image dataset") {
    torch::manual_seed(31);
    NoisePredictor model(NoisePredictorConfig{16, 8});
    auto data = torch::rand({2, 3, 16, 16}) * 2 - 1;
    torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(2e-3));
    auto g2 = make_generator(5);
    std::vector<double> losses;
    for (int step = 0; step < 600; ++step) {
      auto loss = ddpm_train_loss(model, data, g2, s);
      opt.zero_grad();
      loss.backward();
      opt.step();
      losses.push_back(loss.item<double>());
    }
    double head = 0, tail = 0;
    for (int i = 0; i < 50; ++i) head += losses[i];
    for (int i = 0; i < 50; ++i) tail += losses[losses.size() - 1 - i];
    CHECK(tail < head);
  }
}

TEST_CASE("reverse step identities") {
  auto s = make_schedule(5, 0.05, 0.2);
  torch::manual_seed(41);
  NoisePredictor model(NoisePredictorConfig{16, 8});
  auto x = torch::randn({2, 3, 16, 16});

  SECTION("t = 1 is deterministic") {
    auto g1 = make_generator(1);
    auto g2 = make_generator(2);
    torch::NoGradGuard ng;
    model->eval();
    CHECK(torch::equal(reverse_step(model, x, 1, g1, s), reverse_step(model, x, 1, g2, s)));
  }

  SECTION("output shape matches input") {
    auto g1 = make_generator(1);
    torch::NoGradGuard ng;
    CHECK(reverse_step(model, x, 3, g1, s).sizes() == x.sizes());
    CHECK(reverse_step(model, x[0], 3, g1, s).sizes() == x[0].sizes());
  }

  SECTION("oracle predictor inverts a single-step chain") {
    auto one = make_schedule(1, 0.3, 0.3);
    auto x0 = torch::rand({1, 3, 4, 4}) * 2 - 1;
    auto eps = torch::randn_like(x0);
    auto x1 = forward_marginal(x0, 1, eps, one);
    EpsOracle oracle{std::make_shared<EpsOracleImpl>(EpsOracleImpl{x0, one})};
    auto g1 = make_generator(1);
    auto rec = reverse_step(oracle, x1, 1, g1, one);
    CHECK((rec - x0).abs().max().item<double>() <= 1e-5);
  }

  SECTION("step bounds are enforced") {
    auto g1 = make_generator(1);
    CHECK_THROWS_AS(reverse_step(model, x, 0, g1, s), std::invalid_argument);
    CHECK_THROWS_AS(reverse_step(model, x, 6, g1, s), std::invalid_argument);
  }
}

TEST_CASE("low-pass filter is a linear idempotent projection") {
  auto x = torch::rand({3, 16, 16});
  LowPassFilter f{4, LowPassMode::kAverage};

  SECTION("N = 1 is the identity") {
    CHECK(torch::equal(low_pass(x, {1, LowPassMode::kAverage}), x));
  }

  SECTION("idempotence is bitwise") {
    auto once = low_pass(x, f);
    CHECK(torch::equal(low_pass(once, f), once));
  }

  SECTION("linearity") {
    auto y = torch::rand({3, 16, 16});
    auto lhs = low_pass(2.5 * x - 0.5 * y, f);
    auto rhs = 2.5 * low_pass(x, f) - 0.5 * low_pass(y, f);
    CHECK((lhs - rhs).abs().max().item<double>() <= 1e-6);
  }

  SECTION("non-dividing scale is rejected") {
    CHECK_THROWS_AS(low_pass(torch::rand({3, 18, 18}), f), std::invalid_argument);
  }

  SECTION("bicubic mode runs and preserves shape") {
    auto out = low_pass(x, {4, LowPassMode::kBicubic});
    CHECK(out.sizes() == x.sizes());
    CHECK(out.isfinite().all().item<bool>());
  }
}

TEST_CASE("ilvr swap maintains the low-pass constraint") {
  torch::manual_seed(51);
  NoisePredictor model(NoisePredictorConfig{16, 8});
  auto s = make_schedule(12, 1e-3, 0.05);
  auto src = torch::rand({3, 16, 16}) * 2 - 1;
  auto tgt = torch::rand({3, 16, 16}) * 2 - 1;

  SECTION("every refinement step pins the low band to the target trajectory") {
    for (int64_t N : {2, 4, 8}) {
      LowPassFilter f{N, LowPassMode::kAverage};
      auto gen = make_generator(7);
      double worst = 0;
      auto obs = [&](int64_t, const torch::Tensor& x_t, const torch::Tensor& y_t) {
        worst = std::max(worst,
                         (low_pass(x_t, f) - low_pass(y_t, f)).abs().max().item<double>());
      };
      ilvr_swap(model, src, tgt, f, s, gen, -1, obs);
      CHECK(worst <= 1e-6);
    }
  }

  SECTION("N = 1 reconstructs the target exactly") {
    auto gen = make_generator(7);
    auto out = ilvr_swap(model, src, tgt, {1, LowPassMode::kAverage}, s, gen);
    CHECK(torch::equal(out, tgt));  // y_0 trajectory endpoint is x0 itself
  }

  SECTION("shape mismatch is rejected") {
    auto gen = make_generator(7);
    CHECK_THROWS_AS(
        ilvr_swap(model, src, torch::rand({3, 8, 8}), {2, LowPassMode::kAverage}, s, gen),
        std::invalid_argument);
  }
}
