#include <cmath>
#include <numbers>

#include <doctest.h>

#include "asr/analysis.hpp"

using namespace asr;

TEST_CASE("paper_cosine_identity closed cases") {
  CHECK(paper_cosine_identity({1.0, 0.0, 0.3}) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(paper_cosine_identity({0.7, 0.2, 1.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(paper_cosine_identity({0.5, 0.5, 0.0}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(paper_cosine_identity({1.5, 0.0, 0.0}), DomainError);
  CHECK_THROWS_AS(paper_cosine_identity({0.5, 0.5, 2.0}), DomainError);
}

TEST_CASE("identity symmetry and monotonicity in cos theta") {
  for (double w1 : {0.1, 0.4, 0.9})
    for (double w2 : {0.2, 0.6, 1.0}) {
      CHECK(paper_cosine_identity({w1, w2, 0.3}) ==
            doctest::Approx(paper_cosine_identity({w2, w1, 0.3})).epsilon(1e-15));
      double prev = -2.0;
      for (double c = -1.0; c <= 1.0; c += 0.125) {
        const double v = paper_cosine_identity({w1, w2, c});
        CHECK(v >= prev - 1e-15);
        prev = v;
      }
    }
}

TEST_CASE("anti-aliasing coefficient peaks where |w11 - w21| approaches 1") {
  double best = -1.0, best_gap = 0.0;
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; j <= 100; ++j) {
      const double w1 = i / 100.0, w2 = j / 100.0;
      const double coeff = w1 + w2 - 2.0 * w1 * w2;
      if (coeff > best) {
        best = coeff;
        best_gap = std::fabs(w1 - w2);
      }
    }
  CHECK(best == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(best_gap == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("verify_identity: exact as an inner product, not as a cosine") {
  IdentityCheck check = verify_identity(10000, 7);
  CHECK(check.max_abs_error <= 1e-12);
  CHECK(check.max_normalized_gap > 0.1);

  // the specific (0.5, 0.5, 90 deg) point: identity 0.5, true cosine 1
  const double closed = paper_cosine_identity({0.5, 0.5, 0.0});
  CHECK(std::fabs(1.0 - closed) == doctest::Approx(0.5).epsilon(1e-15));

  // single sample at (1, 0, pi/2): u1 = v1, u2 = v2, identity exact
  IdentityCheck tiny = verify_identity(1, 12345);
  CHECK(tiny.max_abs_error <= 1e-12);
}

TEST_CASE("orthogonality_matrix") {
  std::vector<std::pair<int, std::vector<double>>> ortho = {
      {1, {1.0, 0.0}}, {2, {0.0, 1.0}}};
  OrthogonalityStats s = orthogonality_matrix(ortho);
  CHECK(s.matrix[0][0] == 1.0);
  CHECK(s.matrix[0][1] == doctest::Approx(0.0));
  CHECK(s.mean_offdiag == doctest::Approx(0.0));

  std::vector<std::pair<int, std::vector<double>>> same = {
      {1, {1.0, 0.0}}, {2, {1.0, 0.0}}, {3, {1.0, 0.0}}};
  OrthogonalityStats s2 = orthogonality_matrix(same);
  for (const auto& row : s2.matrix)
    for (double v : row) CHECK(v == doctest::Approx(1.0));

  // 60 degrees -> 0.5
  std::vector<std::pair<int, std::vector<double>>> sixty = {
      {1, {1.0, 0.0}}, {2, {0.5, std::sqrt(3.0) / 2.0}}};
  CHECK(orthogonality_matrix(sixty).mean_offdiag == doctest::Approx(0.5).epsilon(1e-12));

  // symmetry with unit diagonal
  std::vector<std::pair<int, std::vector<double>>> three = {
      {1, {1.0, 0.0, 0.0}}, {2, {0.0, 0.6, 0.8}}, {3, {0.707106781186547, 0.707106781186547, 0.0}}};
  OrthogonalityStats s3 = orthogonality_matrix(three);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s3.matrix[i][i] == 1.0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(s3.matrix[i][j] == s3.matrix[j][i]);
  }

  CHECK_THROWS_AS(orthogonality_matrix({{1, {1.0, 0.0}}}), DomainError);
  CHECK_THROWS_AS(orthogonality_matrix({{1, {1.0, 0.0}}, {2, {2.0, 0.0}}}), DomainError);
}

TEST_CASE("sparsity_profile") {
  std::map<int, std::vector<std::vector<double>>> onehot = {{9, {{1.0, 0.0, 0.0}}}};
  CHECK(sparsity_profile(onehot).entropy.at(9) == doctest::Approx(0.0));

  std::map<int, std::vector<std::vector<double>>> uniform = {
      {10, {{0.25, 0.25, 0.25, 0.25}}}};
  CHECK(sparsity_profile(uniform).entropy.at(10) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  std::map<int, std::vector<std::vector<double>>> skew = {{11, {{0.75, 0.25}}}};
  CHECK(sparsity_profile(skew).entropy.at(11) ==
        doctest::Approx(0.5623351446188083).epsilon(1e-12));

  // mean over samples, entropy within [0, ln B]
  std::map<int, std::vector<std::vector<double>>> multi = {
      {12, {{1.0, 0.0}, {0.0, 1.0}}}};
  SparsityProfile p = sparsity_profile(multi);
  CHECK(p.mean_weights.at(12)[0] == doctest::Approx(0.5));
  CHECK(p.entropy.at(12) <= std::log(2.0) + 1e-12);
  CHECK(p.entropy.at(12) >= 0.0);

  std::map<int, std::vector<std::vector<double>>> bad = {{1, {{0.5, 0.6}}}};
  CHECK_THROWS_AS(sparsity_profile(bad), DomainError);
}

TEST_CASE("confusion matrix counting") {
  ConfusionMatrix perfect(4);
  Tensor labels = Tensor::from_data({2, 2}, {0.0, 1.0, 2.0, 3.0});
  perfect.add(labels, labels);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      if (i == j && i > 0)
        CHECK(perfect.counts()[i][j] == 1);
      else
        CHECK(perfect.counts()[i][j] == 0);  // background row is never counted
    }

  ConfusionMatrix all_bg(3);
  all_bg.add(Tensor::from_data({1, 3}, {1.0, 2.0, 2.0}), Tensor::zeros({1, 3}));
  CHECK(all_bg.counts()[1][0] == 1);
  CHECK(all_bg.counts()[2][0] == 2);

  // hand-built 2-class 4-pixel case
  ConfusionMatrix hand(3);
  hand.add(Tensor::from_data({2, 2}, {1.0, 1.0, 2.0, 0.0}),
           Tensor::from_data({2, 2}, {1.0, 2.0, 2.0, 1.0}));
  CHECK(hand.counts()[1][1] == 1);
  CHECK(hand.counts()[1][2] == 1);
  CHECK(hand.counts()[2][2] == 1);
  // rows sum to the true foreground counts
  CHECK(hand.counts()[1][0] + hand.counts()[1][1] + hand.counts()[1][2] == 2);
  CHECK(hand.counts()[2][0] + hand.counts()[2][1] + hand.counts()[2][2] == 1);

  ConfusionMatrix small(2);
  CHECK_THROWS_AS(small.add(Tensor::from_data({1, 1}, {5.0}), Tensor::zeros({1, 1})),
                  DomainError);
  CHECK_THROWS_AS(small.add(Tensor::zeros({1, 2}), Tensor::zeros({2, 1})), ShapeError);
}
