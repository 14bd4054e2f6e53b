#pragma once

#include <vector>

#include "asr/semantics.hpp"

namespace asr {

/// A dim-D class-level vector (reconstructed support vector, basis algebra).
struct ClassVector {
  Tensor values;
  int dim() const { return values.dim(0); }
};

// Which realization of the basis vectors reconstructs query pixels: the
// pixel's own normalized sub-vectors (making the reconstruction the exact
// groupwise sum) or the episode's support-derived basis.
enum class BasisMode { self_basis, support_basis };

// Weighted basis recombination of a support semantic vector:
// sum_b softmax-weight_b * unit sub-vector_b. Norm is at most 1.
ClassVector reconstruct_support(const SemanticVector& v);

// Per-pixel reconstruction of query features. Output has one group of dim D.
// In self mode zero-norm sub-vectors contribute zero; in support mode a
// support basis with matching (B, D) is required.
GroupedFeatureMap reconstruct_query(const GroupedFeatureMap& features, BasisMode mode,
                                    const BasisSet* support_basis = nullptr);

// Arithmetic mean of per-shot reconstructed vectors.
ClassVector kshot_aggregate(const std::vector<ClassVector>& vectors);

}  // namespace asr
