#include "asr/encoder.hpp"

#include <cmath>

#include "asr/rng.hpp"

namespace asr {

Tensor GroupedFeatureMap::group(int b) const {
  if (b < 0 || b >= groups) throw ShapeError("group: index out of range");
  return slice_channels(values, b * group_dim, group_dim);
}

namespace {

Tensor uniform_kernel(std::vector<int> shape, Rng& rng) {
  // fan_in = k*k*Cin for conv kernels
  const double fan_in = static_cast<double>(shape[0]) * shape[1] * shape[2];
  const double bound = std::sqrt(6.0 / fan_in);
  std::vector<double> data;
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) data.push_back(rng.uniform(-bound, bound));
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

}  // namespace

EncoderParams init_encoder_params(const EncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.groups < 1 || cfg.group_dim < 1 || cfg.stem_channels < 1)
    throw DomainError("init_encoder_params: dimensions must be positive");
  Rng rng(sub_seed(seed, 0x0e5c0de));
  const int s = cfg.stem_channels;
  const int bd = cfg.groups * cfg.group_dim;
  EncoderParams p;
  p.stem1_kernel = uniform_kernel({3, 3, 3, s}, rng);
  p.stem1_bias = Tensor::zeros({s}, true);
  p.stem2_kernel = uniform_kernel({3, 3, s, s}, rng);
  p.stem2_bias = Tensor::zeros({s}, true);
  p.pyramid1_kernel = uniform_kernel({3, 3, s, s}, rng);
  p.pyramid1_bias = Tensor::zeros({s}, true);
  p.pyramid2_kernel = uniform_kernel({3, 3, s, s}, rng);
  p.pyramid2_bias = Tensor::zeros({s}, true);
  p.merge_kernel = uniform_kernel({1, 1, s, bd}, rng);
  p.merge_bias = Tensor::zeros({bd}, true);
  return p;
}

GroupedFeatureMap encode(const Tensor& image, const EncoderParams& params,
                         const EncoderConfig& cfg) {
  if (image.rank() != 3 || image.dim(2) != 3)
    throw ShapeError("encode: image must be H x W x 3");
  if (image.dim(0) % kEncoderDownsample != 0 || image.dim(1) % kEncoderDownsample != 0)
    throw ShapeError("encode: spatial size must be divisible by 4");
  for (double v : image.data())
    if (v < 0.0 || v > 1.0)
      throw DomainError("encode: image values must lie in [0,1]");

  Tensor x = relu(conv2d(image, params.stem1_kernel, params.stem1_bias, 1));
  x = meanpool2(x);
  x = relu(conv2d(x, params.stem2_kernel, params.stem2_bias, 1));
  x = meanpool2(x);
  Tensor p1 = conv2d(x, params.pyramid1_kernel, params.pyramid1_bias, 1);
  Tensor p2 = conv2d(x, params.pyramid2_kernel, params.pyramid2_bias, 2);
  x = relu(add(p1, p2));
  Tensor f = relu(conv2d(x, params.merge_kernel, params.merge_bias, 1));
  return GroupedFeatureMap{cfg.groups, cfg.group_dim, f};
}

Tensor downsample_mask_nearest(const Tensor& mask, int out_h, int out_w) {
  if (mask.rank() != 2) throw ShapeError("downsample_mask_nearest: mask must be rank 2");
  const int h0 = mask.dim(0), w0 = mask.dim(1);
  if (h0 % out_h != 0 || w0 % out_w != 0 || h0 / out_h != w0 / out_w)
    throw ShapeError("downsample_mask_nearest: mask size is not an integer multiple");
  const int f = h0 / out_h;
  const auto md = mask.data();
  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const int sy = std::min(h0 - 1, y * f + f / 2);
      const int sx = std::min(w0 - 1, x * f + f / 2);
      out[static_cast<std::size_t>(y) * out_w + x] =
          md[static_cast<std::size_t>(sy) * w0 + sx];
    }
  return Tensor::from_data({out_h, out_w}, std::move(out));
}

GroupedFeatureMap mask_features(const GroupedFeatureMap& features, const Tensor& mask) {
  for (double v : mask.data())
    if (v != 0.0 && v != 1.0)
      throw DomainError("mask_features: mask must be binary");
  Tensor low = downsample_mask_nearest(mask, features.height(), features.width());
  return GroupedFeatureMap{features.groups, features.group_dim,
                           mul_spatial(features.values, low)};
}

}  // namespace asr
