#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "asr/tensor.hpp"

namespace asr {

/// 2-D reconstruction setup: two unit basis vectors at angle theta and two
/// vectors written as convex combinations with weights (w11, 1-w11) and
/// (w21, 1-w21); scaling constants fixed at 1.
struct ReconSpec2D {
  double w11 = 0.0;
  double w21 = 0.0;
  double cos_theta = 1.0;
};

// Closed form 1 + (w11 + w21 - 2*w11*w21)*(cos theta - 1). Exact for the
// inner product <u1, u2> of the unnormalized convex combinations; the true
// normalized cosine differs (see verify_identity).
double paper_cosine_identity(const ReconSpec2D& spec);

struct IdentityCheck {
  double max_abs_error = 0.0;       // |<u1,u2> - closed form|, exact algebra
  double max_normalized_gap = 0.0;  // |cos(u1,u2) - closed form|, not small
};

// Samples (w11, w21, theta), builds explicit 2-D vectors, and compares the
// closed form against both the inner product and the true cosine.
IdentityCheck verify_identity(int n_samples, std::uint64_t seed = 7);

struct OrthogonalityStats {
  std::vector<std::vector<double>> matrix;  // |cos| entries, unit diagonal
  double mean_offdiag = 0.0;
};

// Input: per-class unit vectors (norm within 1e-6 of 1).
OrthogonalityStats orthogonality_matrix(
    const std::vector<std::pair<int, std::vector<double>>>& class_vectors);

struct SparsityProfile {
  std::map<int, std::vector<double>> mean_weights;
  std::map<int, double> entropy;  // Shannon entropy (nats) of the mean weights
};

// Input: per class, the observed reconstruction weight vectors (each on the
// simplex within 1e-9).
SparsityProfile sparsity_profile(
    const std::map<int, std::vector<std::vector<double>>>& weights_per_class);

/// Foreground-pixel confusion counts over class ids [0, n); id 0 is the
/// background. Entry (i, j) counts foreground pixels of true class i
/// predicted as class j (j = 0 when every candidate probability was below
/// threshold), so each row sums to the true foreground pixel count.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int n_classes);
  void add(const Tensor& true_labels, const Tensor& predicted_labels);
  const std::vector<std::vector<std::int64_t>>& counts() const { return counts_; }
  int size() const { return static_cast<int>(counts_.size()); }

 private:
  std::vector<std::vector<std::int64_t>> counts_;
};

}  // namespace asr
