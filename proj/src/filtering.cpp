#include "asr/filtering.hpp"

#include <cmath>

#include "asr/encoder.hpp"
#include "asr/rng.hpp"

namespace asr {

FilterStrategy filter_strategy_from_string(const std::string& s) {
  if (s == "projection") return FilterStrategy::projection;
  if (s == "cosine") return FilterStrategy::cosine;
  if (s == "concat") return FilterStrategy::concat;
  if (s == "none") return FilterStrategy::none;
  throw DomainError("unknown filter strategy: " + s);
}

std::string to_string(FilterStrategy s) {
  switch (s) {
    case FilterStrategy::projection: return "projection";
    case FilterStrategy::cosine: return "cosine";
    case FilterStrategy::concat: return "concat";
    case FilterStrategy::none: return "none";
  }
  throw DomainError("unknown filter strategy");
}

namespace {

Tensor uniform_kernel(std::vector<int> shape, Rng& rng) {
  const double fan_in = static_cast<double>(shape[0]) * shape[1] * shape[2];
  const double bound = std::sqrt(6.0 / fan_in);
  std::vector<double> data;
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) data.push_back(rng.uniform(-bound, bound));
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

Tensor unit_support_direction(const ClassVector& support_vec) {
  Tensor n = l2norm(support_vec.values);
  if (n.value() < kDegenerateNorm)
    throw DomainError("filtering: degenerate support vector");
  return div(support_vec.values, n);
}

}  // namespace

DecoderParams init_decoder_params(int in_channels, int width, std::uint64_t seed) {
  if (in_channels < 1 || width < 1)
    throw DomainError("init_decoder_params: dimensions must be positive");
  Rng rng(sub_seed(seed, 0xdec0de));
  DecoderParams p;
  p.conv1_kernel = uniform_kernel({3, 3, in_channels, width}, rng);
  p.conv1_bias = Tensor::zeros({width}, true);
  p.conv2_kernel = uniform_kernel({3, 3, width, width}, rng);
  p.conv2_bias = Tensor::zeros({width}, true);
  p.head_kernel = uniform_kernel({1, 1, width, 2}, rng);
  p.head_bias = Tensor::zeros({2}, true);
  p.in_channels = in_channels;
  p.width = width;
  return p;
}

GroupedFeatureMap project(const GroupedFeatureMap& recon_query,
                          const ClassVector& support_vec) {
  const int d = recon_query.channels();
  if (support_vec.dim() != d) throw ShapeError("project: dimension mismatch");
  Tensor u = unit_support_direction(support_vec);
  Tensor scalar_field = channel_matmul(recon_query.values, reshape(u, {d, 1}));
  Tensor out = channel_matmul(scalar_field, reshape(u, {1, d}));
  return GroupedFeatureMap{1, d, out};
}

GroupedFeatureMap fuse(FilterStrategy strategy, const GroupedFeatureMap& recon_query,
                       const ClassVector& support_vec) {
  switch (strategy) {
    case FilterStrategy::projection:
      return project(recon_query, support_vec);
    case FilterStrategy::cosine: {
      // cosine_map rejects degenerate reference vectors itself
      Tensor c = cosine_map(recon_query.values, support_vec.values);
      return GroupedFeatureMap{1, 1, c};
    }
    case FilterStrategy::concat: {
      if (support_vec.dim() != recon_query.channels())
        throw ShapeError("fuse: dimension mismatch");
      if (l2norm(support_vec.values).value() < kDegenerateNorm)
        throw DomainError("fuse: degenerate support vector");
      Tensor c = broadcast_concat(recon_query.values, support_vec.values);
      return GroupedFeatureMap{1, recon_query.channels() + support_vec.dim(), c};
    }
    case FilterStrategy::none:
      break;
  }
  throw DomainError("fuse: unknown strategy");
}

Tensor decode(const GroupedFeatureMap& fused, const DecoderParams& params) {
  if (fused.channels() != params.in_channels)
    throw ShapeError("decode: channel count does not match decoder");
  Tensor x = relu(conv2d(fused.values, params.conv1_kernel, params.conv1_bias, 1));
  x = relu(conv2d(x, params.conv2_kernel, params.conv2_bias, 1));
  Tensor logits = conv2d(x, params.head_kernel, params.head_bias, 1);
  return upsample_bilinear(logits, kEncoderDownsample);
}

Tensor predict_mask(const Tensor& logits) {
  if (logits.rank() != 3 || logits.dim(2) != 2)
    throw ShapeError("predict_mask: logits must be H x W x 2");
  const int h = logits.dim(0), w = logits.dim(1);
  const auto ld = logits.data();
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (std::size_t p = 0; p < out.size(); ++p)
    out[p] = ld[2 * p + 1] > ld[2 * p] ? 1.0 : 0.0;
  return Tensor::from_data({h, w}, std::move(out));
}

}  // namespace asr
