#include <cmath>

#include <doctest.h>

#include "asr/rng.hpp"
#include "asr/semantics.hpp"

using namespace asr;

namespace {

GroupedFeatureMap random_map(int h, int w, int groups, int dim, std::uint64_t seed,
                             double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> data(static_cast<std::size_t>(h) * w * groups * dim);
  for (auto& v : data) v = rng.uniform(lo, hi);
  return GroupedFeatureMap{groups, dim, Tensor::from_data({h, w, groups * dim}, data)};
}

}  // namespace

TEST_CASE("semantic_vector pools spatially") {
  GroupedFeatureMap constant{2, 2, Tensor::full({4, 4, 4}, 2.0)};
  SemanticVector v = semantic_vector(constant);
  for (double x : v.values.data()) CHECK(x == doctest::Approx(2.0));

  GroupedFeatureMap two{1, 1, Tensor::from_data({1, 2, 1}, {1.0, 5.0})};
  CHECK(semantic_vector(two).values.data()[0] == doctest::Approx(3.0));

  GroupedFeatureMap zero{2, 2, Tensor::zeros({2, 2, 4})};
  SemanticVector vz = semantic_vector(zero);
  for (double x : vz.values.data()) CHECK(x == 0.0);
}

TEST_CASE("support_weights") {
  // equal norms -> uniform
  SemanticVector v{4, 2, Tensor::from_data({8}, {1, 0, 0, 1, -1, 0, 0, -1})};
  SupportWeights w = support_weights(v);
  for (double x : w.values.data()) CHECK(x == doctest::Approx(0.25));

  // norm gap of ln 3 -> (0.25, 0.75)
  const double n1 = 2.0, n2 = 2.0 + std::log(3.0);
  SemanticVector v2{2, 1, Tensor::from_data({2}, {n1, n2})};
  SupportWeights w2 = support_weights(v2);
  CHECK(w2.values.data()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(w2.values.data()[1] == doctest::Approx(0.75).epsilon(1e-12));

  // B = 1
  SemanticVector v3{1, 2, Tensor::from_data({2}, {3.0, 4.0})};
  CHECK(support_weights(v3).values.data()[0] == doctest::Approx(1.0));

  // zero sub-vectors are a valid softmax input
  SemanticVector v4{2, 2, Tensor::from_data({4}, {0, 0, 3, 4})};
  CHECK_NOTHROW(support_weights(v4));

  // simplex invariant
  SupportWeights w4 = support_weights(v4);
  double sum = 0.0;
  for (double x : w4.values.data()) {
    CHECK(x > 0.0);
    sum += x;
  }
  CHECK(std::fabs(sum - 1.0) <= 1e-12);
}

TEST_CASE("argmax of support weights is scale invariant") {
  Rng rng(21);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> data(12);
    for (auto& x : data) x = rng.uniform(-1, 1);
    SemanticVector v{3, 4, Tensor::from_data({12}, data)};
    const double s = rng.uniform(0.1, 10.0);
    std::vector<double> scaled = data;
    for (auto& x : scaled) x *= s;
    SemanticVector vs{3, 4, Tensor::from_data({12}, scaled)};
    auto argmax = [](const SupportWeights& w) {
      int best = 0;
      for (int i = 1; i < w.values.dim(0); ++i)
        if (w.values.data()[i] > w.values.data()[best]) best = i;
      return best;
    };
    CHECK(argmax(support_weights(v)) == argmax(support_weights(vs)));
  }
}

TEST_CASE("query_weight_map holds raw group norms") {
  // pixel sub-vector (3, 4) -> weight 5
  GroupedFeatureMap m{2, 2, Tensor::from_data({1, 1, 4}, {3.0, 4.0, 0.0, 0.0})};
  QueryWeightMap q = query_weight_map(m);
  CHECK(q.values.data()[0] == doctest::Approx(5.0));
  CHECK(q.values.data()[1] == 0.0);

  // scaling features scales weights
  GroupedFeatureMap r = random_map(3, 3, 2, 2, 31);
  std::vector<double> scaled(r.values.data().begin(), r.values.data().end());
  for (auto& v : scaled) v *= 2.5;
  GroupedFeatureMap r2{2, 2, Tensor::from_data({3, 3, 4}, scaled)};
  QueryWeightMap qma = query_weight_map(r);
  QueryWeightMap qmb = query_weight_map(r2);
  auto qa = qma.values.data();
  auto qb = qmb.values.data();
  for (std::size_t i = 0; i < qa.size(); ++i)
    CHECK(qb[i] == doctest::Approx(2.5 * qa[i]).epsilon(1e-12));
}

TEST_CASE("query weights and unit sub-vectors reassemble the pixel groupwise") {
  GroupedFeatureMap m = random_map(2, 2, 3, 4, 77);
  QueryWeightMap q = query_weight_map(m);
  const auto md = m.values.data();
  const auto qd = q.values.data();
  for (int p = 0; p < 4; ++p)
    for (int b = 0; b < 3; ++b) {
      const double n = qd[static_cast<std::size_t>(p) * 3 + b];
      REQUIRE(n > 0.0);
      for (int j = 0; j < 4; ++j) {
        const double comp = md[static_cast<std::size_t>(p) * 12 + b * 4 + j];
        CHECK(n * (comp / n) == doctest::Approx(comp).epsilon(1e-12));
      }
    }
}

TEST_CASE("basis_set normalizes sub-vectors and rejects degenerate ones") {
  SemanticVector v{2, 2, Tensor::from_data({4}, {3.0, 4.0, 0.0, 1.0})};
  BasisSet basis = basis_set(v);
  CHECK(basis.matrix.at({0, 0}) == doctest::Approx(0.6));
  CHECK(basis.matrix.at({0, 1}) == doctest::Approx(0.8));
  CHECK(basis.matrix.at({1, 0}) == doctest::Approx(0.0));
  CHECK(basis.matrix.at({1, 1}) == doctest::Approx(1.0));

  // unit sub-vectors stay unchanged
  SemanticVector u{1, 2, Tensor::from_data({2}, {1.0, 0.0})};
  CHECK(basis_set(u).matrix.at({0, 0}) == doctest::Approx(1.0));

  SemanticVector z{2, 2, Tensor::from_data({4}, {0, 0, 1, 0})};
  CHECK_THROWS_AS(basis_set(z), DegenerateSubvector);
  try {
    basis_set(z);
  } catch (const DegenerateSubvector& e) {
    CHECK(e.group() == 0);
  }
}

TEST_CASE("basis vectors recover the sub-vector norms") {
  Rng rng(5);
  for (int t = 0; t < 25; ++t) {
    std::vector<double> data(8);
    for (auto& x : data) x = rng.uniform(-2, 2);
    SemanticVector v{2, 4, Tensor::from_data({8}, data)};
    BasisSet basis = basis_set(v);
    for (int b = 0; b < 2; ++b) {
      const double n = l2norm(v.sub(b)).value();
      const double dp = dot(basis.vec(b), v.sub(b)).value();
      CHECK(dp == doctest::Approx(n).epsilon(1e-9));
    }
  }
}
