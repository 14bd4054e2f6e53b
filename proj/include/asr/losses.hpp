#pragma once

#include "asr/semantics.hpp"
#include "asr/tensor.hpp"

namespace asr {

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.1;
  double tau = 0.5;    // fraction of training after which the contrastive term is active
  int total_steps = 1;
};

// log(1 + exp(-w[class_index])): pushes the softmax reconstruction weight of
// the episode's own class toward 1.
Tensor decoupling_loss(const Tensor& weights, int class_index);

// exp(1 + S_off - S_diag) over the 2B sub-vectors, where S_off sums
// |cos| over the B(B-1) ordered cross-group pairs and S_diag over matched
// pairs. All sub-vectors must have norm >= 1e-12.
Tensor contrastive_loss(const SemanticVector& v_support, const SemanticVector& v_query);

// Mean per-pixel 2-class cross entropy with logits.
Tensor segmentation_loss(const Tensor& logits, const Tensor& mask);

// alpha*l_dec + beta*l_seg (+ gamma*l_con once step >= tau * total_steps).
Tensor total_loss(const Tensor& l_dec, const Tensor& l_seg, const Tensor& l_con,
                  const LossWeights& weights, int step);

bool contrastive_active(const LossWeights& weights, int step);

}  // namespace asr
