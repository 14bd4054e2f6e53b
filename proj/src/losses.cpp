#include "asr/losses.hpp"

namespace asr {

Tensor decoupling_loss(const Tensor& weights, int class_index) {
  if (weights.rank() != 1) throw ShapeError("decoupling_loss: weights must be rank 1");
  if (class_index < 0 || class_index >= weights.dim(0))
    throw ShapeError("decoupling_loss: class index out of range");
  Tensor wc = reshape(slice(weights, class_index, 1), {});
  return log(add(exp(neg(wc)), 1.0));
}

Tensor contrastive_loss(const SemanticVector& v_support, const SemanticVector& v_query) {
  if (v_support.groups != v_query.groups || v_support.group_dim != v_query.group_dim)
    throw ShapeError("contrastive_loss: group structure mismatch");
  const int b = v_support.groups;

  std::vector<Tensor> s_subs, q_subs, s_norms, q_norms;
  for (int i = 0; i < b; ++i) {
    s_subs.push_back(v_support.sub(i));
    q_subs.push_back(v_query.sub(i));
    s_norms.push_back(l2norm(s_subs.back()));
    q_norms.push_back(l2norm(q_subs.back()));
    if (s_norms.back().value() < kDegenerateNorm) throw DegenerateSubvector(i);
    if (q_norms.back().value() < kDegenerateNorm) throw DegenerateSubvector(i);
  }

  auto abs_cos = [&](int i, int j) {
    return abs(div(dot(s_subs[i], q_subs[j]), mul(s_norms[i], q_norms[j])));
  };

  Tensor exponent = Tensor::scalar(1.0);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j)
      exponent = i == j ? sub(exponent, abs_cos(i, j)) : add(exponent, abs_cos(i, j));
  return exp(exponent);
}

Tensor segmentation_loss(const Tensor& logits, const Tensor& mask) {
  return cross_entropy_with_logits(logits, mask);
}

bool contrastive_active(const LossWeights& weights, int step) {
  return static_cast<double>(step) >=
         weights.tau * static_cast<double>(weights.total_steps);
}

Tensor total_loss(const Tensor& l_dec, const Tensor& l_seg, const Tensor& l_con,
                  const LossWeights& weights, int step) {
  if (step < 0 || step >= weights.total_steps)
    throw DomainError("total_loss: step out of range");
  if (weights.alpha < 0 || weights.beta < 0 || weights.gamma < 0)
    throw DomainError("total_loss: loss weights must be nonnegative");
  if (weights.tau < 0 || weights.tau > 1)
    throw DomainError("total_loss: tau must lie in [0,1]");
  Tensor out = add(mul(l_dec, weights.alpha), mul(l_seg, weights.beta));
  if (contrastive_active(weights, step)) out = add(out, mul(l_con, weights.gamma));
  return out;
}

}  // namespace asr
