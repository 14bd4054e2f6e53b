#include "asr/reconstruction.hpp"

namespace asr {

ClassVector reconstruct_support(const SemanticVector& v) {
  SupportWeights w = support_weights(v);
  BasisSet basis = basis_set(v);  // propagates DegenerateSubvector
  Tensor combined = channel_matmul(reshape(w.values, {1, 1, v.groups}), basis.matrix);
  return ClassVector{reshape(combined, {v.group_dim})};
}

GroupedFeatureMap reconstruct_query(const GroupedFeatureMap& features, BasisMode mode,
                                    const BasisSet* support_basis) {
  if (mode == BasisMode::self_basis) {
    // norm_b * (sub_b / norm_b) collapses to the groupwise sum; zero-norm
    // sub-vectors contribute zero either way.
    return GroupedFeatureMap{1, features.group_dim,
                             group_sum(features.values, features.groups)};
  }
  if (support_basis == nullptr)
    throw TensorError("reconstruct_query: support mode requires a support basis");
  if (support_basis->groups != features.groups ||
      support_basis->dim != features.group_dim)
    throw ShapeError("reconstruct_query: basis (B, D) mismatch");
  QueryWeightMap weights = query_weight_map(features);
  return GroupedFeatureMap{1, features.group_dim,
                           channel_matmul(weights.values, support_basis->matrix)};
}

ClassVector kshot_aggregate(const std::vector<ClassVector>& vectors) {
  if (vectors.empty()) throw TensorError("kshot_aggregate: empty list");
  const int d = vectors.front().dim();
  for (const auto& v : vectors)
    if (v.dim() != d) throw ShapeError("kshot_aggregate: dimension mismatch");
  Tensor acc = vectors.front().values;
  for (std::size_t i = 1; i < vectors.size(); ++i) acc = add(acc, vectors[i].values);
  return ClassVector{mul(acc, 1.0 / static_cast<double>(vectors.size()))};
}

}  // namespace asr
