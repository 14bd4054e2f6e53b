#pragma once

#include <cstdint>
#include <string>

#include "asr/reconstruction.hpp"

namespace asr {

enum class FilterStrategy { projection, cosine, concat, none };

FilterStrategy filter_strategy_from_string(const std::string& s);
std::string to_string(FilterStrategy s);

struct DecoderParams {
  Tensor conv1_kernel, conv1_bias;  // 3x3, in -> width
  Tensor conv2_kernel, conv2_bias;  // 3x3, width -> width
  Tensor head_kernel, head_bias;    // 1x1, width -> 2 logits
  int in_channels = 0;
  int width = 0;
};

DecoderParams init_decoder_params(int in_channels, int width, std::uint64_t seed);

// Signed projection of every pixel vector onto the (unit-normalized)
// reconstructed support vector.
GroupedFeatureMap project(const GroupedFeatureMap& recon_query,
                          const ClassVector& support_vec);

// Fusion strategies compared in the filtering ablation. Output channel
// count depends on the strategy: projection D, cosine 1, concat 2D.
GroupedFeatureMap fuse(FilterStrategy strategy, const GroupedFeatureMap& recon_query,
                       const ClassVector& support_vec);

// conv+relu, conv+relu, 1x1 to 2 logits, bilinear x4 upsample.
Tensor decode(const GroupedFeatureMap& fused, const DecoderParams& params);

// Per-pixel argmax; exact ties resolve to background.
Tensor predict_mask(const Tensor& logits);

}  // namespace asr
