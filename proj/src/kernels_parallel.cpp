#include <algorithm>
#include <cstdint>

#include "softmark/kernels.hpp"

namespace softmark::kernels::parallel {
namespace {

// Below this many multiply-adds the thread start-up costs more than it saves.
constexpr std::size_t kMinParallelWork = 1 << 15;

using Index = std::int64_t;

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, bool accumulate) {
  const bool big = m * n * k >= kMinParallelWork;
  if (tb == Trans::no) {
    // Row i of C is built as a sum of scaled rows of B; contiguous in j.
#pragma omp parallel for schedule(static) if (big)
    for (Index ii = 0; ii < static_cast<Index>(m); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      double* crow = c + i * n;
      if (!accumulate) std::fill(crow, crow + n, 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta == Trans::no ? a[i * k + p] : a[p * m + i];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return;
  }
  // B transposed: each C entry is a dot product of two contiguous rows when A is not transposed.
#pragma omp parallel for schedule(static) if (big)
  for (Index ii = 0; ii < static_cast<Index>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      if (ta == Trans::no) {
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      } else {
        for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * brow[p];
      }
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void im2col(const double* img, const ConvGeom& g, double* col) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const bool big = g.col_rows() * g.col_cols() >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (Index rr = 0; rr < static_cast<Index>(g.col_rows()); ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const std::size_t kj = r % g.kernel, ki = (r / g.kernel) % g.kernel, ch = r / (g.kernel * g.kernel);
    const double* plane = img + ch * g.height * g.width;
    double* out = col + r * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.pad);
      if (iy < 0 || iy >= static_cast<long>(g.height)) {
        std::fill(out + y * ow, out + (y + 1) * ow, 0.0);
        continue;
      }
      const double* src = plane + static_cast<std::size_t>(iy) * g.width;
      for (std::size_t x = 0; x < ow; ++x) {
        const long ix = static_cast<long>(x * g.stride + kj) - static_cast<long>(g.pad);
        out[y * ow + x] = (ix >= 0 && ix < static_cast<long>(g.width)) ? src[ix] : 0.0;
      }
    }
  }
}

void col2im(const double* col, const ConvGeom& g, double* img) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const bool big = g.col_rows() * g.col_cols() >= kMinParallelWork;
  // One thread per channel plane, so writes never overlap.
#pragma omp parallel for schedule(static) if (big)
  for (Index cc = 0; cc < static_cast<Index>(g.channels); ++cc) {
    const auto ch = static_cast<std::size_t>(cc);
    double* plane = img + ch * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki)
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* src = col + ((ch * g.kernel + ki) * g.kernel + kj) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t x = 0; x < ow; ++x) {
            const long ix = static_cast<long>(x * g.stride + kj) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[y * ow + x];
          }
        }
      }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
#pragma omp parallel for simd schedule(static) if (n >= kMinParallelWork)
  for (Index i = 0; i < static_cast<Index>(n); ++i) y[i] += alpha * x[i];
}

void relu_forward(std::size_t n, const double* x, double* y) {
#pragma omp parallel for simd schedule(static) if (n >= kMinParallelWork)
  for (Index i = 0; i < static_cast<Index>(n); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* x, const double* gy, double* gx) {
#pragma omp parallel for simd schedule(static) if (n >= kMinParallelWork)
  for (Index i = 0; i < static_cast<Index>(n); ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
}

}  // namespace softmark::kernels::parallel
