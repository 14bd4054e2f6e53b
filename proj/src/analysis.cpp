#include "asr/analysis.hpp"

#include <cmath>
#include <numbers>

#include "asr/rng.hpp"

namespace asr {

double paper_cosine_identity(const ReconSpec2D& spec) {
  if (spec.w11 < 0 || spec.w11 > 1 || spec.w21 < 0 || spec.w21 > 1)
    throw DomainError("paper_cosine_identity: weights must lie in [0,1]");
  if (spec.cos_theta < -1 || spec.cos_theta > 1)
    throw DomainError("paper_cosine_identity: cos theta must lie in [-1,1]");
  return 1.0 + (spec.w11 + spec.w21 - 2.0 * spec.w11 * spec.w21) * (spec.cos_theta - 1.0);
}

IdentityCheck verify_identity(int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw DomainError("verify_identity: n_samples must be >= 1");
  Rng rng(seed);
  IdentityCheck check;
  for (int s = 0; s < n_samples; ++s) {
    const double w11 = rng.uniform();
    const double w21 = rng.uniform();
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double v1x = 1.0, v1y = 0.0;
    const double v2x = std::cos(theta), v2y = std::sin(theta);
    const double u1x = w11 * v1x + (1 - w11) * v2x;
    const double u1y = w11 * v1y + (1 - w11) * v2y;
    const double u2x = w21 * v1x + (1 - w21) * v2x;
    const double u2y = w21 * v1y + (1 - w21) * v2y;
    const double inner = u1x * u2x + u1y * u2y;
    const double closed = paper_cosine_identity({w11, w21, std::cos(theta)});
    check.max_abs_error = std::max(check.max_abs_error, std::fabs(inner - closed));
    const double n1 = std::hypot(u1x, u1y);
    const double n2 = std::hypot(u2x, u2y);
    if (n1 > 0 && n2 > 0) {
      const double true_cos = inner / (n1 * n2);
      check.max_normalized_gap =
          std::max(check.max_normalized_gap, std::fabs(true_cos - closed));
    }
  }
  return check;
}

OrthogonalityStats orthogonality_matrix(
    const std::vector<std::pair<int, std::vector<double>>>& class_vectors) {
  const std::size_t n = class_vectors.size();
  if (n < 2) throw DomainError("orthogonality_matrix: need at least two vectors");
  const std::size_t d = class_vectors.front().second.size();
  for (const auto& [id, v] : class_vectors) {
    if (v.size() != d) throw ShapeError("orthogonality_matrix: dimension mismatch");
    double s = 0.0;
    for (double x : v) s += x * x;
    if (std::fabs(std::sqrt(s) - 1.0) > 1e-6)
      throw DomainError("orthogonality_matrix: vector for class " + std::to_string(id) +
                        " is not unit norm");
  }
  OrthogonalityStats stats;
  stats.matrix.assign(n, std::vector<double>(n, 0.0));
  double off_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    stats.matrix[i][i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dp = 0.0;
      for (std::size_t k = 0; k < d; ++k)
        dp += class_vectors[i].second[k] * class_vectors[j].second[k];
      const double a = std::fabs(dp);
      stats.matrix[i][j] = a;
      stats.matrix[j][i] = a;
      off_sum += 2.0 * a;
    }
  }
  stats.mean_offdiag = off_sum / static_cast<double>(n * (n - 1));
  return stats;
}

SparsityProfile sparsity_profile(
    const std::map<int, std::vector<std::vector<double>>>& weights_per_class) {
  SparsityProfile profile;
  for (const auto& [cls, samples] : weights_per_class) {
    if (samples.empty())
      throw DomainError("sparsity_profile: empty sample list for class " +
                        std::to_string(cls));
    const std::size_t b = samples.front().size();
    std::vector<double> mean(b, 0.0);
    for (const auto& w : samples) {
      if (w.size() != b) throw ShapeError("sparsity_profile: weight length mismatch");
      double s = 0.0;
      for (double x : w) {
        if (x < -1e-9) throw DomainError("sparsity_profile: negative weight");
        s += x;
      }
      if (std::fabs(s - 1.0) > 1e-9)
        throw DomainError("sparsity_profile: weights off the simplex");
      for (std::size_t i = 0; i < b; ++i) mean[i] += w[i];
    }
    for (double& x : mean) x /= static_cast<double>(samples.size());
    double h = 0.0;
    for (double x : mean)
      if (x > 0.0) h -= x * std::log(x);
    profile.mean_weights[cls] = std::move(mean);
    profile.entropy[cls] = h;
  }
  return profile;
}

ConfusionMatrix::ConfusionMatrix(int n_classes) {
  if (n_classes < 1) throw DomainError("ConfusionMatrix: need at least one class");
  counts_.assign(n_classes, std::vector<std::int64_t>(n_classes, 0));
}

void ConfusionMatrix::add(const Tensor& true_labels, const Tensor& predicted_labels) {
  if (true_labels.shape() != predicted_labels.shape())
    throw ShapeError("ConfusionMatrix: label map shapes differ");
  const auto td = true_labels.data();
  const auto pd = predicted_labels.data();
  const int n = size();
  for (std::size_t p = 0; p < td.size(); ++p) {
    const int t = static_cast<int>(td[p]);
    const int pr = static_cast<int>(pd[p]);
    if (t < 0 || t >= n || pr < 0 || pr >= n)
      throw DomainError("ConfusionMatrix: class id out of range");
    if (t == 0) continue;  // only foreground pixels are counted
    ++counts_[t][pr];
  }
}

}  // namespace asr
