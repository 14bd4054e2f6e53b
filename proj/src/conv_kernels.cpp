#include "asr/conv_kernels.hpp"

namespace asr::kernels {

namespace {

Mode g_mode = Mode::parallel;

// One output row. Shared by the serial and parallel drivers so both perform
// the identical floating-point operation sequence per element.
inline void forward_row(const double* in, int h, int w, int ci, const double* ker,
                        int k, int co, const double* bias, int dilation, double* out,
                        int y) {
  const int c = k / 2;
  double* orow = out + static_cast<std::size_t>(y) * w * co;
  for (int x = 0; x < w; ++x) {
    double* o = orow + static_cast<std::size_t>(x) * co;
    for (int oc = 0; oc < co; ++oc) o[oc] = bias ? bias[oc] : 0.0;
    for (int ky = 0; ky < k; ++ky) {
      const int iy = y + (ky - c) * dilation;
      if (iy < 0 || iy >= h) continue;
      for (int kx = 0; kx < k; ++kx) {
        const int ix = x + (kx - c) * dilation;
        if (ix < 0 || ix >= w) continue;
        const double* ip = in + (static_cast<std::size_t>(iy) * w + ix) * ci;
        const double* kp = ker + (static_cast<std::size_t>(ky) * k + kx) * ci * co;
        for (int ic = 0; ic < ci; ++ic) {
          const double a = ip[ic];
          const double* kc = kp + static_cast<std::size_t>(ic) * co;
          for (int oc = 0; oc < co; ++oc) o[oc] += a * kc[oc];
        }
      }
    }
  }
}

inline void backward_input_row(const double* gout, int h, int w, int co, const double* ker,
                               int k, int ci, int dilation, double* gin, int iy) {
  const int c = k / 2;
  for (int ix = 0; ix < w; ++ix) {
    double* gi = gin + (static_cast<std::size_t>(iy) * w + ix) * ci;
    for (int ky = 0; ky < k; ++ky) {
      const int oy = iy - (ky - c) * dilation;
      if (oy < 0 || oy >= h) continue;
      for (int kx = 0; kx < k; ++kx) {
        const int ox = ix - (kx - c) * dilation;
        if (ox < 0 || ox >= w) continue;
        const double* gp = gout + (static_cast<std::size_t>(oy) * w + ox) * co;
        const double* kp = ker + (static_cast<std::size_t>(ky) * k + kx) * ci * co;
        for (int ic = 0; ic < ci; ++ic) {
          const double* kc = kp + static_cast<std::size_t>(ic) * co;
          double s = 0.0;
          for (int oc = 0; oc < co; ++oc) s += gp[oc] * kc[oc];
          gi[ic] += s;
        }
      }
    }
  }
}

// One kernel tap (ky, kx). Each tap owns a disjoint slice of gker, so taps can
// run concurrently while keeping a fixed serial accumulation order per weight.
inline void backward_kernel_tap(const double* in, int h, int w, int ci, const double* gout,
                                int co, int k, int dilation, double* gker, int ky, int kx) {
  const int c = k / 2;
  double* gk = gker + (static_cast<std::size_t>(ky) * k + kx) * ci * co;
  for (int oy = 0; oy < h; ++oy) {
    const int iy = oy + (ky - c) * dilation;
    if (iy < 0 || iy >= h) continue;
    for (int ox = 0; ox < w; ++ox) {
      const int ix = ox + (kx - c) * dilation;
      if (ix < 0 || ix >= w) continue;
      const double* ip = in + (static_cast<std::size_t>(iy) * w + ix) * ci;
      const double* gp = gout + (static_cast<std::size_t>(oy) * w + ox) * co;
      for (int ic = 0; ic < ci; ++ic) {
        double* row = gk + static_cast<std::size_t>(ic) * co;
        const double a = ip[ic];
        for (int oc = 0; oc < co; ++oc) row[oc] += a * gp[oc];
      }
    }
  }
}

}  // namespace

Mode mode() { return g_mode; }
void set_mode(Mode m) { g_mode = m; }

void conv2d_forward_serial(const double* in, int h, int w, int ci, const double* ker,
                           int k, int co, const double* bias, int dilation, double* out) {
  for (int y = 0; y < h; ++y) forward_row(in, h, w, ci, ker, k, co, bias, dilation, out, y);
}

void conv2d_forward_parallel(const double* in, int h, int w, int ci, const double* ker,
                             int k, int co, const double* bias, int dilation, double* out) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) forward_row(in, h, w, ci, ker, k, co, bias, dilation, out, y);
}

void conv2d_forward(const double* in, int h, int w, int ci, const double* ker,
                    int k, int co, const double* bias, int dilation, double* out) {
  if (g_mode == Mode::serial)
    conv2d_forward_serial(in, h, w, ci, ker, k, co, bias, dilation, out);
  else
    conv2d_forward_parallel(in, h, w, ci, ker, k, co, bias, dilation, out);
}

void conv2d_backward_input_serial(const double* gout, int h, int w, int co, const double* ker,
                                  int k, int ci, int dilation, double* gin) {
  for (int iy = 0; iy < h; ++iy)
    backward_input_row(gout, h, w, co, ker, k, ci, dilation, gin, iy);
}

void conv2d_backward_input_parallel(const double* gout, int h, int w, int co, const double* ker,
                                    int k, int ci, int dilation, double* gin) {
#pragma omp parallel for schedule(static)
  for (int iy = 0; iy < h; ++iy)
    backward_input_row(gout, h, w, co, ker, k, ci, dilation, gin, iy);
}

void conv2d_backward_input(const double* gout, int h, int w, int co, const double* ker,
                           int k, int ci, int dilation, double* gin) {
  if (g_mode == Mode::serial)
    conv2d_backward_input_serial(gout, h, w, co, ker, k, ci, dilation, gin);
  else
    conv2d_backward_input_parallel(gout, h, w, co, ker, k, ci, dilation, gin);
}

void conv2d_backward_kernel_serial(const double* in, int h, int w, int ci, const double* gout,
                                   int co, int k, int dilation, double* gker) {
  for (int ky = 0; ky < k; ++ky)
    for (int kx = 0; kx < k; ++kx)
      backward_kernel_tap(in, h, w, ci, gout, co, k, dilation, gker, ky, kx);
}

void conv2d_backward_kernel_parallel(const double* in, int h, int w, int ci, const double* gout,
                                     int co, int k, int dilation, double* gker) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int ky = 0; ky < k; ++ky)
    for (int kx = 0; kx < k; ++kx)
      backward_kernel_tap(in, h, w, ci, gout, co, k, dilation, gker, ky, kx);
}

void conv2d_backward_kernel(const double* in, int h, int w, int ci, const double* gout,
                            int co, int k, int dilation, double* gker) {
  if (g_mode == Mode::serial)
    conv2d_backward_kernel_serial(in, h, w, ci, gout, co, k, dilation, gker);
  else
    conv2d_backward_kernel_parallel(in, h, w, ci, gout, co, k, dilation, gker);
}

void conv2d_backward_bias(const double* gout, int h, int w, int co, double* gbias) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < n; ++p) {
    const double* gp = gout + p * co;
    for (int oc = 0; oc < co; ++oc) gbias[oc] += gp[oc];
  }
}

}  // namespace asr::kernels
