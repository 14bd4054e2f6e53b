#include "asr/semantics.hpp"

#include <cmath>

namespace asr {

Tensor SemanticVector::sub(int b) const {
  if (b < 0 || b >= groups) throw ShapeError("sub: group index out of range");
  return slice(values, b * group_dim, group_dim);
}

Tensor BasisSet::vec(int b) const {
  if (b < 0 || b >= groups) throw ShapeError("vec: group index out of range");
  return reshape(slice(reshape(matrix, {groups * dim}), b * dim, dim), {dim});
}

SemanticVector semantic_vector(const GroupedFeatureMap& features) {
  return SemanticVector{features.groups, features.group_dim, gap(features.values)};
}

SupportWeights support_weights(const SemanticVector& v) {
  std::vector<Tensor> norms;
  norms.reserve(v.groups);
  for (int b = 0; b < v.groups; ++b) norms.push_back(l2norm(v.sub(b)));
  SupportWeights w{softmax(stack_scalars(norms))};
  double s = 0.0;
  for (double x : w.values.data()) s += x;
  if (std::fabs(s - 1.0) > 1e-12)
    throw TensorError("support_weights: softmax output left the simplex");
  return w;
}

QueryWeightMap query_weight_map(const GroupedFeatureMap& features) {
  return QueryWeightMap{group_norms(features.values, features.groups)};
}

BasisSet basis_set(const SemanticVector& v) {
  std::vector<Tensor> rows;
  rows.reserve(v.groups);
  for (int b = 0; b < v.groups; ++b) {
    Tensor sub = v.sub(b);
    Tensor n = l2norm(sub);
    if (n.value() < kDegenerateNorm) throw DegenerateSubvector(b);
    rows.push_back(div(sub, n));
  }
  return BasisSet{v.groups, v.group_dim, reshape(concat(rows), {v.groups, v.group_dim})};
}

}  // namespace asr
