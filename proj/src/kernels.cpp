#include "zsad/kernels.hpp"

#include <omp.h>

#include <cmath>
#include <vector>

namespace zsad::kernels {

namespace {

// Work below this many multiply-adds stays on the calling thread.
constexpr std::size_t kParallelGemmWork = 1 << 15;

// Computes one row of C. Shared by the serial and parallel gemm so both
// produce bit-identical results.
inline void gemm_row(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate,
                     std::size_t i, std::vector<double>& tmp) {
  const std::size_t n = s.n;
  const std::size_t k = s.k;
  tmp.assign(n, 0.0);
  if (!s.trans_b) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = s.trans_a ? a[kk * s.m + i] : a[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) tmp[j] += aik * brow[j];
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      if (!s.trans_a) {
        const double* arow = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      } else {
        for (std::size_t kk = 0; kk < k; ++kk) acc += a[kk * s.m + i] * brow[kk];
      }
      tmp[j] = acc;
    }
  }
  double* crow = c + i * n;
  if (accumulate) {
    for (std::size_t j = 0; j < n; ++j) crow[j] += tmp[j];
  } else {
    for (std::size_t j = 0; j < n; ++j) crow[j] = tmp[j];
  }
}

inline void im2col_row(const ConvGeometry& g, const double* x, double* col, std::size_t oy) {
  const std::size_t ow = g.out_width();
  const std::size_t ps = g.patch_size();
  for (std::size_t ox = 0; ox < ow; ++ox) {
    double* dst = col + (oy * ow + ox) * ps;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
        double* cell = dst + (ky * g.kernel + kx) * g.channels;
        if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) || ix >= static_cast<long>(g.width)) {
          for (std::size_t ch = 0; ch < g.channels; ++ch) cell[ch] = 0.0;
        } else {
          const double* src = x + (static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)) * g.channels;
          for (std::size_t ch = 0; ch < g.channels; ++ch) cell[ch] = src[ch];
        }
      }
    }
  }
}

// Gather form of col2im for input row y. Taps are visited with ky and kx
// descending, which reproduces the accumulation order of the serial scatter.
inline void col2im_row(const ConvGeometry& g, const double* dcol, double* dx, std::size_t y) {
  const std::size_t oh = g.out_height();
  const std::size_t ow = g.out_width();
  const std::size_t ps = g.patch_size();
  for (std::size_t x = 0; x < g.width; ++x) {
    double* dst = dx + (y * g.width + x) * g.channels;
    for (std::size_t kyr = 0; kyr < g.kernel; ++kyr) {
      const std::size_t ky = g.kernel - 1 - kyr;
      const long ny = static_cast<long>(y + g.pad) - static_cast<long>(ky);
      if (ny < 0 || ny % static_cast<long>(g.stride) != 0) continue;
      const std::size_t oy = static_cast<std::size_t>(ny) / g.stride;
      if (oy >= oh) continue;
      for (std::size_t kxr = 0; kxr < g.kernel; ++kxr) {
        const std::size_t kx = g.kernel - 1 - kxr;
        const long nx = static_cast<long>(x + g.pad) - static_cast<long>(kx);
        if (nx < 0 || nx % static_cast<long>(g.stride) != 0) continue;
        const std::size_t ox = static_cast<std::size_t>(nx) / g.stride;
        if (ox >= ow) continue;
        const double* src = dcol + (oy * ow + ox) * ps + (ky * g.kernel + kx) * g.channels;
        for (std::size_t ch = 0; ch < g.channels; ++ch) dst[ch] += src[ch];
      }
    }
  }
}

inline void resize_row(const double* src, std::size_t h, std::size_t w, std::size_t c, double* dst,
                       std::size_t out_h, std::size_t out_w, std::size_t oy) {
  const double sy = out_h > 1 ? static_cast<double>(oy) * static_cast<double>(h - 1) / static_cast<double>(out_h - 1) : 0.0;
  const std::size_t y0 = std::min(static_cast<std::size_t>(std::floor(sy)), h - 1);
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const double fy = sy - static_cast<double>(y0);
  for (std::size_t ox = 0; ox < out_w; ++ox) {
    const double sx = out_w > 1 ? static_cast<double>(ox) * static_cast<double>(w - 1) / static_cast<double>(out_w - 1) : 0.0;
    const std::size_t x0 = std::min(static_cast<std::size_t>(std::floor(sx)), w - 1);
    const std::size_t x1 = std::min(x0 + 1, w - 1);
    const double fx = sx - static_cast<double>(x0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double p00 = src[(y0 * w + x0) * c + ch];
      const double p01 = src[(y0 * w + x1) * c + ch];
      const double p10 = src[(y1 * w + x0) * c + ch];
      const double p11 = src[(y1 * w + x1) * c + ch];
      const double top = (1.0 - fx) * p00 + fx * p01;
      const double bottom = (1.0 - fx) * p10 + fx * p11;
      dst[(oy * out_w + ox) * c + ch] = (1.0 - fy) * top + fy * bottom;
    }
  }
}

}  // namespace

namespace serial {

void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate) {
  std::vector<double> tmp;
  for (std::size_t i = 0; i < s.m; ++i) gemm_row(s, a, b, c, accumulate, i, tmp);
}

void im2col(const ConvGeometry& g, const double* x, double* col) {
  for (std::size_t oy = 0; oy < g.out_height(); ++oy) im2col_row(g, x, col, oy);
}

void col2im(const ConvGeometry& g, const double* dcol, double* dx) {
  const std::size_t oh = g.out_height();
  const std::size_t ow = g.out_width();
  const std::size_t ps = g.patch_size();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const double* src = dcol + (oy * ow + ox) * ps;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
        if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
          if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
          double* dst = dx + (static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)) * g.channels;
          const double* cell = src + (ky * g.kernel + kx) * g.channels;
          for (std::size_t ch = 0; ch < g.channels; ++ch) dst[ch] += cell[ch];
        }
      }
    }
  }
}

void resize_bilinear(const double* src, std::size_t h, std::size_t w, std::size_t c, double* dst,
                     std::size_t out_h, std::size_t out_w) {
  for (std::size_t oy = 0; oy < out_h; ++oy) resize_row(src, h, w, c, dst, out_h, out_w, oy);
}

}  // namespace serial

namespace parallel {

void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate) {
  if (s.m * s.n * s.k < kParallelGemmWork || s.m < 2 || omp_in_parallel()) {
    serial::gemm(s, a, b, c, accumulate);
    return;
  }
  const long m = static_cast<long>(s.m);
#pragma omp parallel
  {
    std::vector<double> tmp;
#pragma omp for schedule(static)
    for (long i = 0; i < m; ++i) gemm_row(s, a, b, c, accumulate, static_cast<std::size_t>(i), tmp);
  }
}

void im2col(const ConvGeometry& g, const double* x, double* col) {
  const long oh = static_cast<long>(g.out_height());
#pragma omp parallel for schedule(static) if (oh * g.out_width() * g.patch_size() > 8192 && !omp_in_parallel())
  for (long oy = 0; oy < oh; ++oy) im2col_row(g, x, col, static_cast<std::size_t>(oy));
}

void col2im(const ConvGeometry& g, const double* dcol, double* dx) {
  const long h = static_cast<long>(g.height);
#pragma omp parallel for schedule(static) if (g.height * g.width * g.channels > 8192 && !omp_in_parallel())
  for (long y = 0; y < h; ++y) col2im_row(g, dcol, dx, static_cast<std::size_t>(y));
}

void resize_bilinear(const double* src, std::size_t h, std::size_t w, std::size_t c, double* dst,
                     std::size_t out_h, std::size_t out_w) {
  const long oh = static_cast<long>(out_h);
#pragma omp parallel for schedule(static) if (out_h * out_w * c > 8192 && !omp_in_parallel())
  for (long oy = 0; oy < oh; ++oy) resize_row(src, h, w, c, dst, out_h, out_w, static_cast<std::size_t>(oy));
}

}  // namespace parallel

void set_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace zsad::kernels
