// Times the serial reference conv kernels against the OpenMP variants and
// checks that the results are bitwise identical.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "asr/conv_kernels.hpp"
#include "asr/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> random_buffer(std::size_t n, asr::Rng& rng) {
  std::vector<double> out(n);
  for (auto& v : out) v = rng.uniform(-1.0, 1.0);
  return out;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    if (s < best) best = s;
  }
  return best;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Case {
  int h, w, ci, co, k, dilation;
};

}  // namespace

int main() {
  using namespace asr::kernels;
  asr::Rng rng(42);

  const Case cases[] = {
      {64, 64, 3, 16, 3, 1},
      {32, 32, 16, 16, 3, 1},
      {16, 16, 16, 16, 3, 2},
      {16, 16, 16, 64, 1, 1},
      {16, 16, 64, 16, 3, 1},
  };

  std::printf("%-22s %10s %10s %8s  %s\n", "case", "serial[ms]", "openmp[ms]",
              "speedup", "bitwise");
  bool all_equal = true;
  for (const Case& c : cases) {
    const std::size_t in_n = static_cast<std::size_t>(c.h) * c.w * c.ci;
    const std::size_t out_n = static_cast<std::size_t>(c.h) * c.w * c.co;
    const std::size_t ker_n = static_cast<std::size_t>(c.k) * c.k * c.ci * c.co;
    const auto in = random_buffer(in_n, rng);
    const auto ker = random_buffer(ker_n, rng);
    const auto bias = random_buffer(static_cast<std::size_t>(c.co), rng);
    const auto gout = random_buffer(out_n, rng);

    std::vector<double> out_s(out_n), out_p(out_n);
    std::vector<double> gin_s(in_n, 0.0), gin_p(in_n, 0.0);
    std::vector<double> gker_s(ker_n, 0.0), gker_p(ker_n, 0.0);

    const double fwd_s = time_best_of(5, [&] {
      conv2d_forward_serial(in.data(), c.h, c.w, c.ci, ker.data(), c.k, c.co,
                            bias.data(), c.dilation, out_s.data());
    });
    const double fwd_p = time_best_of(5, [&] {
      conv2d_forward_parallel(in.data(), c.h, c.w, c.ci, ker.data(), c.k, c.co,
                              bias.data(), c.dilation, out_p.data());
    });
    const double bwd_s = time_best_of(5, [&] {
      std::fill(gin_s.begin(), gin_s.end(), 0.0);
      std::fill(gker_s.begin(), gker_s.end(), 0.0);
      conv2d_backward_input_serial(gout.data(), c.h, c.w, c.co, ker.data(), c.k, c.ci,
                                   c.dilation, gin_s.data());
      conv2d_backward_kernel_serial(in.data(), c.h, c.w, c.ci, gout.data(), c.co, c.k,
                                    c.dilation, gker_s.data());
    });
    const double bwd_p = time_best_of(5, [&] {
      std::fill(gin_p.begin(), gin_p.end(), 0.0);
      std::fill(gker_p.begin(), gker_p.end(), 0.0);
      conv2d_backward_input_parallel(gout.data(), c.h, c.w, c.co, ker.data(), c.k, c.ci,
                                     c.dilation, gin_p.data());
      conv2d_backward_kernel_parallel(in.data(), c.h, c.w, c.ci, gout.data(), c.co, c.k,
                                      c.dilation, gker_p.data());
    });

    const bool eq = bitwise_equal(out_s, out_p) && bitwise_equal(gin_s, gin_p) &&
                    bitwise_equal(gker_s, gker_p);
    all_equal = all_equal && eq;

    char label[64];
    std::snprintf(label, sizeof label, "%dx%dx%d->%d k%d d%d", c.h, c.w, c.ci, c.co,
                  c.k, c.dilation);
    std::printf("%-22s %10.3f %10.3f %8.2f  %s\n", label, (fwd_s + bwd_s) * 1e3,
                (fwd_p + bwd_p) * 1e3, (fwd_s + bwd_s) / (fwd_p + bwd_p),
                eq ? "yes" : "NO");
  }
  if (!all_equal) {
    std::printf("FAIL: serial and parallel kernels disagree\n");
    return 1;
  }
  return 0;
}
