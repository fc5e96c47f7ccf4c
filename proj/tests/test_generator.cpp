#include <catch2/catch_amalgamated.hpp>

#include "facke/discriminator.hpp"
#include "facke/generator.hpp"

using namespace facke;

TEST_CASE("adain normalizes per channel") {
  torch::manual_seed(1);
  auto x = torch::randn({2, 4, 8, 8});

  SECTION("gamma=1 beta=0 gives zero mean unit variance") {
    auto out = adain(x, torch::ones({4}), torch::zeros({4}));
    auto mean = out.mean({2, 3});
    auto var = out.var({2, 3}, /*unbiased=*/false);
    CHECK(mean.abs().max().item<double>() <= 1e-5);
    CHECK((var - 1.0).abs().max().item<double>() <= 1e-3);
  }

  SECTION("arbitrary gamma beta set channel statistics") {
    auto gamma = torch::tensor({0.5f, 2.0f, 1.5f, 3.0f});
    auto beta = torch::tensor({-1.0f, 0.0f, 2.0f, 0.25f});
    auto out = adain(x, gamma, beta);
    for (int64_t c = 0; c < 4; ++c) {
      auto ch = out.select(1, c);
      CHECK(ch.mean().item<double>() ==
            Catch::Approx(beta[c].item<double>()).margin(1e-4));
      CHECK(ch.var(/*unbiased=*/false).sqrt().item<double>() ==
            Catch::Approx(gamma[c].item<double>()).margin(1e-3));
    }
  }

  SECTION("constant channel collapses to beta") {
    auto flat = torch::full({1, 2, 4, 4}, 3.0f);
    auto out = adain(flat, torch::ones({2}), torch::tensor({5.0f, -2.0f}));
    CHECK((out.select(1, 0) - 5.0f).abs().max().item<double>() <= 1e-4);
    CHECK((out.select(1, 1) + 2.0f).abs().max().item<double>() <= 1e-4);
  }
}

TEST_CASE("adain projection starts identity-like") {
  torch::manual_seed(2);
  AdainProj proj(16, 8);
  auto [gamma, beta] = proj->project(torch::zeros({16}));
  CHECK((gamma - 1.0).abs().max().item<double>() <= 1e-6);  // bias zero, +1 offset
  CHECK(beta.abs().max().item<double>() <= 1e-6);
}

TEST_CASE("swap generator contract") {
  torch::manual_seed(3);
  GeneratorConfig cfg{16, 8, 2, 32};
  SwapGenerator g(cfg);
  auto target = torch::rand({2, 3, 16, 16}) * 2 - 1;
  auto id_vec = torch::nn::functional::normalize(
      torch::randn({2, 32}), torch::nn::functional::NormalizeFuncOptions().dim(1));

  SECTION("output matches input shape with values in [-1, 1]") {
    auto out = generate_swap(g, target, id_vec);
    CHECK(out.sizes() == target.sizes());
    CHECK(out.min().item<double>() >= -1.0);
    CHECK(out.max().item<double>() <= 1.0);
  }

  SECTION("inference is deterministic") {
    auto a = generate_swap(g, target, id_vec);
    auto b = generate_swap(g, target, id_vec);
    CHECK(torch::equal(a, b));
  }

  SECTION("single image without batch dim works") {
    auto out = generate_swap(g, target[0], id_vec[0]);
    CHECK(out.sizes() == torch::IntArrayRef({3, 16, 16}));
  }

  SECTION("wrong resolution is rejected") {
    CHECK_THROWS_AS(g->forward(torch::rand({1, 3, 24, 24}), id_vec), std::invalid_argument);
  }
}

TEST_CASE("resolution must divide by 8") {
  CHECK_THROWS_AS(SwapGenerator(GeneratorConfig{20, 8, 2, 32}), std::invalid_argument);
}

TEST_CASE("id vector changes the generated image") {
  torch::manual_seed(4);
  SwapGenerator g(GeneratorConfig{16, 8, 2, 32});
  auto target = torch::rand({1, 3, 16, 16}) * 2 - 1;
  auto id_a = torch::nn::functional::normalize(
      torch::randn({1, 32}), torch::nn::functional::NormalizeFuncOptions().dim(1));
  auto id_b = torch::nn::functional::normalize(
      torch::randn({1, 32}), torch::nn::functional::NormalizeFuncOptions().dim(1));
  auto out_a = generate_swap(g, target, id_a);
  auto out_b = generate_swap(g, target, id_b);
  CHECK_FALSE(torch::equal(out_a, out_b));
}

TEST_CASE("multi-scale discriminator exposes M feature maps per scale") {
  torch::manual_seed(5);
  DiscriminatorConfig cfg{4, 8};
  MultiScaleDiscriminator d(cfg);
  auto img = torch::rand({2, 3, 32, 32}) * 2 - 1;
  auto out = discriminate(d, img);
  REQUIRE(out.size() == 2);
  for (const auto& scale : out) {
    CHECK(scale.features.size() == 4);
    CHECK(scale.logits.dim() == 4);
    CHECK(scale.logits.size(1) == 1);
  }
}

TEST_CASE("half-scale path sees the average-pooled input") {
  torch::manual_seed(6);
  MultiScaleDiscriminator d(DiscriminatorConfig{3, 8});
  auto img = torch::rand({1, 3, 32, 32});
  auto out = d->forward(img);
  auto manual = d->d_half->forward(torch::avg_pool2d(img, 2));
  CHECK(torch::equal(out[1].logits, manual.logits));
  for (size_t i = 0; i < manual.features.size(); ++i)
    CHECK(torch::equal(out[1].features[i], manual.features[i]));
}

TEST_CASE("zero image yields finite discriminator output") {
  torch::manual_seed(7);
  MultiScaleDiscriminator d(DiscriminatorConfig{4, 8});
  auto out = d->forward(torch::zeros({1, 3, 32, 32}));
  for (const auto& scale : out) {
    CHECK(scale.logits.isfinite().all().item<bool>());
    for (const auto& f : scale.features) CHECK(f.isfinite().all().item<bool>());
  }
  auto v = critic_value(d, torch::zeros({2, 3, 32, 32}));
  CHECK(v.sizes() == torch::IntArrayRef({2}));
  CHECK(v.isfinite().all().item<bool>());
}
