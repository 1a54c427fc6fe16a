#pragma once

// Hot loops used by the autodiff primitives. Every kernel has a plain serial
// reference and an OpenMP version. The parallel versions split work over
// output elements only, so each output is reduced in the same order as the
// serial kernel and results do not depend on the thread count.

#include <cstddef>

namespace zsad::kernels {

/// C[M,N] (+)= op(A)[M,K] * op(B)[K,N].
/// A is stored [M,K] (or [K,M] when trans_a); B is stored [K,N] (or [N,K]).
struct GemmShape {
  bool trans_a = false;
  bool trans_b = false;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
};

/// Geometry of a square-kernel 2-D convolution over an HWC image.
struct ConvGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t patch_size() const { return kernel * kernel * channels; }
};

namespace serial {
void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate);
/// col[out_h*out_w, k*k*C] from x[H,W,C]; padding reads as zero.
void im2col(const ConvGeometry& g, const double* x, double* col);
/// dx[H,W,C] += scatter of dcol.
void col2im(const ConvGeometry& g, const double* dcol, double* dx);
/// Corner-aligned bilinear resampling of an HWC image.
void resize_bilinear(const double* src, std::size_t h, std::size_t w, std::size_t c, double* dst,
                     std::size_t out_h, std::size_t out_w);
}  // namespace serial

namespace parallel {
void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate);
void im2col(const ConvGeometry& g, const double* x, double* col);
void col2im(const ConvGeometry& g, const double* dcol, double* dx);
void resize_bilinear(const double* src, std::size_t h, std::size_t w, std::size_t c, double* dst,
                     std::size_t out_h, std::size_t out_w);
}  // namespace parallel

// Default dispatch used by the rest of the library.
inline void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate) {
  parallel::gemm(s, a, b, c, accumulate);
}
inline void im2col(const ConvGeometry& g, const double* x, double* col) { parallel::im2col(g, x, col); }
inline void col2im(const ConvGeometry& g, const double* dcol, double* dx) { parallel::col2im(g, dcol, dx); }
inline void resize_bilinear(const double* src, std::size_t h, std::size_t w, std::size_t c, double* dst,
                            std::size_t out_h, std::size_t out_w) {
  parallel::resize_bilinear(src, h, w, c, dst, out_h, out_w);
}

/// Sets the OpenMP thread count used by the parallel kernels (0 keeps the default).
void set_threads(int threads);
int max_threads();

}  // namespace zsad::kernels
