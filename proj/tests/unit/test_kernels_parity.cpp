#include <cstring>
#include <vector>

#include <doctest.h>

#include "asr/conv_kernels.hpp"
#include "asr/rng.hpp"

using namespace asr;

namespace {

std::vector<double> rand_buf(std::size_t n, Rng& rng) {
  std::vector<double> out(n);
  for (auto& v : out) v = rng.uniform(-2.0, 2.0);
  return out;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("serial and parallel conv kernels agree bitwise") {
  Rng rng(99);
  struct Case {
    int h, w, ci, co, k, dil;
  };
  for (const auto& c : {Case{7, 9, 3, 5, 3, 1}, Case{12, 8, 4, 4, 3, 2},
                        Case{5, 5, 2, 3, 5, 1}, Case{16, 16, 8, 8, 1, 1}}) {
    const std::size_t in_n = static_cast<std::size_t>(c.h) * c.w * c.ci;
    const std::size_t out_n = static_cast<std::size_t>(c.h) * c.w * c.co;
    const std::size_t ker_n = static_cast<std::size_t>(c.k) * c.k * c.ci * c.co;
    const auto in = rand_buf(in_n, rng);
    const auto ker = rand_buf(ker_n, rng);
    const auto bias = rand_buf(static_cast<std::size_t>(c.co), rng);
    const auto gout = rand_buf(out_n, rng);

    std::vector<double> a(out_n), b(out_n);
    kernels::conv2d_forward_serial(in.data(), c.h, c.w, c.ci, ker.data(), c.k, c.co,
                                   bias.data(), c.dil, a.data());
    kernels::conv2d_forward_parallel(in.data(), c.h, c.w, c.ci, ker.data(), c.k, c.co,
                                     bias.data(), c.dil, b.data());
    CHECK(same_bits(a, b));

    std::vector<double> gi_a(in_n, 0.0), gi_b(in_n, 0.0);
    kernels::conv2d_backward_input_serial(gout.data(), c.h, c.w, c.co, ker.data(), c.k,
                                          c.ci, c.dil, gi_a.data());
    kernels::conv2d_backward_input_parallel(gout.data(), c.h, c.w, c.co, ker.data(), c.k,
                                            c.ci, c.dil, gi_b.data());
    CHECK(same_bits(gi_a, gi_b));

    std::vector<double> gk_a(ker_n, 0.0), gk_b(ker_n, 0.0);
    kernels::conv2d_backward_kernel_serial(in.data(), c.h, c.w, c.ci, gout.data(), c.co,
                                           c.k, c.dil, gk_a.data());
    kernels::conv2d_backward_kernel_parallel(in.data(), c.h, c.w, c.ci, gout.data(), c.co,
                                             c.k, c.dil, gk_b.data());
    CHECK(same_bits(gk_a, gk_b));
  }
}

TEST_CASE("dispatch honours the kernel mode") {
  const auto saved = kernels::mode();
  kernels::set_mode(kernels::Mode::serial);
  CHECK(kernels::mode() == kernels::Mode::serial);
  kernels::set_mode(saved);
}
