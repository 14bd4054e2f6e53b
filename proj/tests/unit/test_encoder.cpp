#include <cstring>

#include <doctest.h>

#include "asr/encoder.hpp"
#include "asr/rng.hpp"

using namespace asr;

namespace {

Tensor random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> data(static_cast<std::size_t>(h) * w * 3);
  for (auto& v : data) v = rng.uniform();
  return Tensor::from_data({h, w, 3}, std::move(data));
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("init_encoder_params is deterministic and seed-sensitive") {
  EncoderConfig cfg{2, 2, 4};
  EncoderParams a = init_encoder_params(cfg, 0);
  EncoderParams b = init_encoder_params(cfg, 0);
  CHECK(same_bits(a.stem1_kernel, b.stem1_kernel));
  CHECK(same_bits(a.merge_kernel, b.merge_kernel));
  for (double v : a.stem1_bias.data()) CHECK(v == 0.0);

  EncoderParams c = init_encoder_params(cfg, 1);
  CHECK(!same_bits(a.stem1_kernel, c.stem1_kernel));

  CHECK_THROWS_AS(init_encoder_params(EncoderConfig{2, 2, 0}, 0), DomainError);
}

TEST_CASE("encode output geometry and value guards") {
  EncoderConfig cfg{3, 2, 4};
  EncoderParams params = init_encoder_params(cfg, 5);
  GroupedFeatureMap f = encode(random_image(64, 64, 1), params, cfg);
  CHECK(f.height() == 16);
  CHECK(f.width() == 16);
  CHECK(f.channels() == 6);
  CHECK(f.groups == 3);

  CHECK_THROWS_AS(encode(random_image(30, 64, 1), params, cfg), ShapeError);
  CHECK_THROWS_AS(encode(Tensor::full({32, 32, 3}, 1.5), params, cfg), DomainError);
}

TEST_CASE("all-zero image with zero biases gives all-zero features") {
  EncoderConfig cfg{2, 2, 4};
  EncoderParams params = init_encoder_params(cfg, 9);
  GroupedFeatureMap f = encode(Tensor::zeros({32, 32, 3}), params, cfg);
  for (double v : f.values.data()) CHECK(v == 0.0);
}

TEST_CASE("encoder gradients pass the finite-difference oracle") {
  EncoderConfig cfg{2, 2, 2};
  EncoderParams p = init_encoder_params(cfg, 3);
  Tensor image = random_image(16, 16, 2);
  auto f = [&] { return sum(encode(image, p, cfg).values); };
  // kernels only: bias coordinates sit on exact relu kinks whenever an
  // entire input pixel vector is zero, where the subgradient convention and
  // a central difference disagree by construction
  std::vector<Tensor> params = {p.stem1_kernel, p.stem2_kernel, p.pyramid1_kernel,
                                p.pyramid2_kernel, p.merge_kernel};
  CHECK(grad_check(f, params, 120, 0x5ee) <= 1e-4);
}

TEST_CASE("mask_features") {
  EncoderConfig cfg{2, 2, 4};
  EncoderParams params = init_encoder_params(cfg, 11);
  Tensor image = random_image(32, 32, 4);
  GroupedFeatureMap f = encode(image, params, cfg);

  GroupedFeatureMap all = mask_features(f, Tensor::full({32, 32}, 1.0));
  CHECK(same_bits(all.values, f.values));

  GroupedFeatureMap none = mask_features(f, Tensor::zeros({32, 32}));
  for (double v : none.values.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(mask_features(f, Tensor::zeros({31, 32})), ShapeError);
  CHECK_THROWS_AS(mask_features(f, Tensor::full({32, 32}, 0.5)), DomainError);

  // 2x1 feature column [p, q] with downsampled mask [1, 0] -> [p, 0]
  GroupedFeatureMap tiny{1, 1, Tensor::from_data({2, 1, 1}, {3.0, 7.0})};
  std::vector<double> m(8 * 4, 0.0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) m[static_cast<std::size_t>(y) * 4 + x] = 1.0;
  GroupedFeatureMap masked = mask_features(tiny, Tensor::from_data({8, 4}, m));
  CHECK(masked.values.data()[0] == 3.0);
  CHECK(masked.values.data()[1] == 0.0);
}

TEST_CASE("mask_features is idempotent and commutes with group slicing") {
  EncoderConfig cfg{2, 3, 4};
  EncoderParams params = init_encoder_params(cfg, 13);
  Tensor image = random_image(32, 32, 6);
  GroupedFeatureMap f = encode(image, params, cfg);

  Rng rng(4);
  std::vector<double> m(32 * 32);
  for (auto& v : m) v = rng.coin() ? 1.0 : 0.0;
  Tensor mask = Tensor::from_data({32, 32}, m);

  GroupedFeatureMap once = mask_features(f, mask);
  GroupedFeatureMap twice = mask_features(once, mask);
  CHECK(same_bits(once.values, twice.values));

  for (int b = 0; b < f.groups; ++b) {
    GroupedFeatureMap sliced{1, f.group_dim, f.group(b)};
    GroupedFeatureMap masked_then_sliced{1, f.group_dim, once.group(b)};
    GroupedFeatureMap sliced_then_masked = mask_features(sliced, mask);
    CHECK(same_bits(masked_then_sliced.values, sliced_then_masked.values));
  }
}

TEST_CASE("nearest mask downsample keeps the mask binary") {
  Rng rng(8);
  std::vector<double> m(64 * 64);
  for (auto& v : m) v = rng.coin() ? 1.0 : 0.0;
  Tensor low = downsample_mask_nearest(Tensor::from_data({64, 64}, m), 16, 16);
  for (double v : low.data()) CHECK((v == 0.0 || v == 1.0));
}
