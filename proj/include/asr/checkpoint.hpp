#pragma once

#include <string>
#include <vector>

#include "asr/tensor.hpp"

namespace asr {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Checkpoint format: a JSON manifest listing {name, shape, byte_offset} per
// parameter plus one flat little-endian float64 blob stored next to the
// manifest as "<manifest>.bin". The manifest also carries the (downsampled)
// training loss curve so evaluation reports can echo it.
void save_checkpoint(const std::string& manifest_path,
                     const std::vector<NamedTensor>& tensors,
                     const std::vector<double>& loss_curve);

// Loads blob values into the given tensors by name, validating shapes.
// Returns the stored loss curve.
std::vector<double> load_checkpoint(const std::string& manifest_path,
                                    std::vector<NamedTensor>& tensors);

}  // namespace asr
