#pragma once

#include "asr/encoder.hpp"
#include "asr/tensor.hpp"

namespace asr {

/// A channel group whose pooled sub-vector has near-zero norm; basis
/// directions are undefined there.
class DegenerateSubvector : public TensorError {
 public:
  explicit DegenerateSubvector(int group)
      : TensorError("degenerate sub-vector in group " + std::to_string(group)),
        group_(group) {}
  int group() const { return group_; }

 private:
  int group_;
};

/// Pooled length-(B*D) vector partitioned into B sub-vectors of dim D.
struct SemanticVector {
  int groups = 1;
  int group_dim = 0;
  Tensor values;
  Tensor sub(int b) const;
};

/// Softmax of sub-vector norms; entries > 0, sum 1.
struct SupportWeights {
  Tensor values;  // length B
};

/// Per-pixel raw sub-vector norms, H x W x B.
struct QueryWeightMap {
  Tensor values;
};

/// B unit vectors of dim D (rows of a B x D matrix).
struct BasisSet {
  int groups = 1;
  int dim = 0;
  Tensor matrix;
  Tensor vec(int b) const;
};

SemanticVector semantic_vector(const GroupedFeatureMap& features);
SupportWeights support_weights(const SemanticVector& v);
QueryWeightMap query_weight_map(const GroupedFeatureMap& features);
// Throws DegenerateSubvector when a sub-vector norm is below 1e-12.
BasisSet basis_set(const SemanticVector& v);

inline constexpr double kDegenerateNorm = 1e-12;

}  // namespace asr
