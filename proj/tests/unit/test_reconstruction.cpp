#include <cmath>

#include <doctest.h>

#include "asr/reconstruction.hpp"
#include "asr/rng.hpp"

using namespace asr;

TEST_CASE("reconstruct_support closed cases") {
  // B=1: weight 1 on its own unit vector
  SemanticVector v1{1, 2, Tensor::from_data({2}, {3.0, 4.0})};
  ClassVector r1 = reconstruct_support(v1);
  CHECK(r1.values.data()[0] == doctest::Approx(0.6));
  CHECK(r1.values.data()[1] == doctest::Approx(0.8));

  // B=2 equal-norm orthonormal directions: 0.5 e1 + 0.5 e2
  SemanticVector v2{2, 2, Tensor::from_data({4}, {1.0, 0.0, 0.0, 1.0})};
  ClassVector r2 = reconstruct_support(v2);
  CHECK(r2.values.data()[0] == doctest::Approx(0.5));
  CHECK(r2.values.data()[1] == doctest::Approx(0.5));
  CHECK(l2norm(r2.values).value() == doctest::Approx(std::sqrt(0.5)));

  // norms (n, n + ln 3) along e1/e2: 0.25 e1 + 0.75 e2
  const double n = 1.7;
  SemanticVector v3{2, 2,
                    Tensor::from_data({4}, {n, 0.0, 0.0, n + std::log(3.0)})};
  ClassVector r3 = reconstruct_support(v3);
  CHECK(r3.values.data()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(r3.values.data()[1] == doctest::Approx(0.75).epsilon(1e-12));

  SemanticVector dead{2, 2, Tensor::from_data({4}, {0, 0, 1, 0})};
  CHECK_THROWS_AS(reconstruct_support(dead), DegenerateSubvector);
}

TEST_CASE("reconstruct_support properties under scaling") {
  // Softmax weights respond to norm *differences*, so uniform scaling changes
  // them (the (n, n+ln3) example above relies on exactly that); what scaling
  // preserves is the basis directions and the dominant group.
  Rng rng(61);
  for (int t = 0; t < 50; ++t) {
    const int b = 2 + rng.uniform_int(4);
    const int d = 2 + rng.uniform_int(4);
    std::vector<double> data(static_cast<std::size_t>(b) * d);
    for (auto& x : data) x = rng.uniform(-2, 2);
    SemanticVector v{b, d, Tensor::from_data({b * d}, data)};
    ClassVector r = reconstruct_support(v);
    CHECK(l2norm(r.values).value() <= 1.0 + 1e-12);

    const double s = rng.uniform(0.2, 5.0);
    std::vector<double> scaled = data;
    for (auto& x : scaled) x *= s;
    SemanticVector vs{b, d, Tensor::from_data({b * d}, scaled)};

    BasisSet ba = basis_set(v), bb = basis_set(vs);
    for (std::size_t j = 0; j < ba.matrix.size(); ++j)
      CHECK(bb.matrix.data()[j] == doctest::Approx(ba.matrix.data()[j]).epsilon(1e-9));

    auto argmax = [](const SupportWeights& w) {
      int best = 0;
      for (int i = 1; i < w.values.dim(0); ++i)
        if (w.values.data()[i] > w.values.data()[best]) best = i;
      return best;
    };
    SupportWeights wa = support_weights(v), wb = support_weights(vs);
    CHECK(argmax(wa) == argmax(wb));

    // B=1 degenerates to the unit direction, which *is* scale invariant
    SemanticVector one{1, d, Tensor::from_data({d}, std::vector<double>(
                                                        data.begin(), data.begin() + d))};
    std::vector<double> one_scaled(scaled.begin(), scaled.begin() + d);
    SemanticVector one_s{1, d, Tensor::from_data({d}, one_scaled)};
    ClassVector ra = reconstruct_support(one);
    ClassVector rb = reconstruct_support(one_s);
    for (int j = 0; j < d; ++j)
      CHECK(rb.values.data()[j] == doctest::Approx(ra.values.data()[j]).epsilon(1e-9));
  }
}

TEST_CASE("reconstruct_query self mode is the groupwise sum") {
  // pixel sub-vectors (1,0) and (0,2) -> (1,2)
  GroupedFeatureMap m{2, 2, Tensor::from_data({1, 1, 4}, {1.0, 0.0, 0.0, 2.0})};
  GroupedFeatureMap r = reconstruct_query(m, BasisMode::self_basis);
  CHECK(r.groups == 1);
  CHECK(r.group_dim == 2);
  CHECK(r.values.data()[0] == doctest::Approx(1.0));
  CHECK(r.values.data()[1] == doctest::Approx(2.0));

  // single nonzero group passes through (zero groups contribute zero)
  GroupedFeatureMap single{3, 2, Tensor::from_data({1, 1, 6}, {0, 0, 0.3, -0.4, 0, 0})};
  GroupedFeatureMap rs = reconstruct_query(single, BasisMode::self_basis);
  CHECK(rs.values.data()[0] == doctest::Approx(0.3));
  CHECK(rs.values.data()[1] == doctest::Approx(-0.4));

  // bit-for-bit equality with the explicit groupwise sum
  Rng rng(71);
  std::vector<double> data(2 * 2 * 6);
  for (auto& x : data) x = rng.uniform(-1, 1);
  GroupedFeatureMap big{3, 2, Tensor::from_data({2, 2, 6}, data)};
  GroupedFeatureMap rq = reconstruct_query(big, BasisMode::self_basis);
  for (int p = 0; p < 4; ++p)
    for (int j = 0; j < 2; ++j) {
      double expect = 0.0;
      for (int b = 0; b < 3; ++b) expect += data[static_cast<std::size_t>(p) * 6 + b * 2 + j];
      CHECK(std::fabs(rq.values.data()[static_cast<std::size_t>(p) * 2 + j] - expect) <=
            1e-12);
    }
}

TEST_CASE("reconstruct_query support mode") {
  // pixel norms (1, 2), support basis {e2, e1} -> (2, 1)
  GroupedFeatureMap m{2, 2, Tensor::from_data({1, 1, 4}, {1.0, 0.0, 0.0, 2.0})};
  BasisSet basis{2, 2, Tensor::from_data({2, 2}, {0.0, 1.0, 1.0, 0.0})};
  GroupedFeatureMap r = reconstruct_query(m, BasisMode::support_basis, &basis);
  CHECK(r.values.data()[0] == doctest::Approx(2.0));
  CHECK(r.values.data()[1] == doctest::Approx(1.0));

  CHECK_THROWS_AS(reconstruct_query(m, BasisMode::support_basis, nullptr), TensorError);

  // linear in the query weight map: equals norms . basis explicitly
  Rng rng(81);
  std::vector<double> data(3 * 3 * 4);
  for (auto& x : data) x = rng.uniform(-1, 1);
  GroupedFeatureMap big{2, 2, Tensor::from_data({3, 3, 4}, data)};
  GroupedFeatureMap rq = reconstruct_query(big, BasisMode::support_basis, &basis);
  Tensor expect = channel_matmul(query_weight_map(big).values, basis.matrix);
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(rq.values.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-12));
}

TEST_CASE("kshot_aggregate") {
  ClassVector a{Tensor::from_data({2}, {1.0, 0.0})};
  ClassVector b{Tensor::from_data({2}, {0.0, 1.0})};

  ClassVector one = kshot_aggregate({a});
  CHECK(one.values.data()[0] == 1.0);

  ClassVector dup = kshot_aggregate({a, a});
  CHECK(dup.values.data()[0] == doctest::Approx(1.0));
  CHECK(dup.values.data()[1] == doctest::Approx(0.0));

  ClassVector mean = kshot_aggregate({a, b});
  CHECK(mean.values.data()[0] == doctest::Approx(0.5));
  CHECK(mean.values.data()[1] == doctest::Approx(0.5));

  CHECK_THROWS_AS(kshot_aggregate({}), TensorError);
}
