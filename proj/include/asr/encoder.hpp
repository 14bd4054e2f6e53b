#pragma once

#include <cstdint>

#include "asr/tensor.hpp"

namespace asr {

/// Feature map of shape H x W x (groups * group_dim) with explicit channel
/// groups: group b occupies channels [b*group_dim, (b+1)*group_dim).
struct GroupedFeatureMap {
  int groups = 1;
  int group_dim = 0;
  Tensor values;

  int height() const { return values.dim(0); }
  int width() const { return values.dim(1); }
  int channels() const { return values.dim(2); }
  Tensor group(int b) const;
};

struct EncoderConfig {
  int groups = 8;        // B
  int group_dim = 8;     // D
  int stem_channels = 16;
};

struct EncoderParams {
  Tensor stem1_kernel, stem1_bias;      // 3x3, 3 -> stem
  Tensor stem2_kernel, stem2_bias;      // 3x3, stem -> stem
  Tensor pyramid1_kernel, pyramid1_bias;  // 3x3 dilation 1
  Tensor pyramid2_kernel, pyramid2_bias;  // 3x3 dilation 2
  Tensor merge_kernel, merge_bias;      // 1x1, stem -> B*D
};

// Kernels drawn uniform in +-sqrt(6/fan_in), biases zero; deterministic in seed.
EncoderParams init_encoder_params(const EncoderConfig& cfg, std::uint64_t seed);

// Spatial reduction of the encoder (two 2x2 mean pools).
inline constexpr int kEncoderDownsample = 4;

// stem conv+relu -> pool -> conv+relu -> pool -> pyramid block (parallel 3x3
// convs, dilations 1 and 2, summed, relu) -> 1x1 conv to B*D channels + relu.
// Input values must lie in [0,1]; spatial size must be divisible by 4.
GroupedFeatureMap encode(const Tensor& image, const EncoderParams& params,
                         const EncoderConfig& cfg);

// Nearest-neighbour downsample of a full-resolution binary mask to feature
// resolution (block-center sample), then a pixel-wise multiply of every
// channel.
GroupedFeatureMap mask_features(const GroupedFeatureMap& features, const Tensor& mask);

// The downsampled mask itself (exposed for reuse and tests).
Tensor downsample_mask_nearest(const Tensor& mask, int out_h, int out_w);

}  // namespace asr
