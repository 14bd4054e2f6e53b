#pragma once

#include <cstddef>

namespace asr::kernels {

// Kernel dispatch mode. Parallel kernels split work over independent output
// elements only, so serial and parallel results are bitwise identical; the
// serial variants are kept as the reference implementation for tests and the
// bench_kernels comparison target.
enum class Mode { serial, parallel };

Mode mode();
void set_mode(Mode m);

// Layouts (row-major, innermost index fastest):
//   in   [H][W][Ci]
//   ker  [K][K][Ci][Co]      K odd, stride 1, "same" zero padding
//   out  [H][W][Co]
// All backward kernels accumulate (+=) into their destination buffer.

void conv2d_forward(const double* in, int h, int w, int ci, const double* ker,
                    int k, int co, const double* bias, int dilation, double* out);
void conv2d_forward_serial(const double* in, int h, int w, int ci, const double* ker,
                           int k, int co, const double* bias, int dilation, double* out);
void conv2d_forward_parallel(const double* in, int h, int w, int ci, const double* ker,
                             int k, int co, const double* bias, int dilation, double* out);

void conv2d_backward_input(const double* gout, int h, int w, int co, const double* ker,
                           int k, int ci, int dilation, double* gin);
void conv2d_backward_input_serial(const double* gout, int h, int w, int co, const double* ker,
                                  int k, int ci, int dilation, double* gin);
void conv2d_backward_input_parallel(const double* gout, int h, int w, int co, const double* ker,
                                    int k, int ci, int dilation, double* gin);

void conv2d_backward_kernel(const double* in, int h, int w, int ci, const double* gout,
                            int co, int k, int dilation, double* gker);
void conv2d_backward_kernel_serial(const double* in, int h, int w, int ci, const double* gout,
                                   int co, int k, int dilation, double* gker);
void conv2d_backward_kernel_parallel(const double* in, int h, int w, int ci, const double* gout,
                                     int co, int k, int dilation, double* gker);

void conv2d_backward_bias(const double* gout, int h, int w, int co, double* gbias);

}  // namespace asr::kernels
