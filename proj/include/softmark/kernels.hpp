#pragma once

#include <cstddef>

namespace softmark::kernels {

enum class Trans { no, yes };

// Geometry of one image for im2col/col2im. The column buffer is
// [channels * kernel * kernel, out_h * out_w].
struct ConvGeom {
  std::size_t channels = 0, height = 0, width = 0;
  std::size_t kernel = 1, stride = 1, pad = 0;

  std::size_t out_h() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return out_h() * out_w(); }
};

// All routines are row-major. gemm computes C = op(A) op(B) (+ C when
// accumulate), op(A) is m x k and op(B) is k x n.
#define SOFTMARK_KERNEL_DECLS                                                                    \
  void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,   \
            const double* b, double* c, bool accumulate);                                       \
  void im2col(const double* img, const ConvGeom& g, double* col);                               \
  void col2im(const double* col, const ConvGeom& g, double* img);                               \
  void axpy(std::size_t n, double alpha, const double* x, double* y);                           \
  void relu_forward(std::size_t n, const double* x, double* y);                                 \
  void relu_backward(std::size_t n, const double* x, const double* gy, double* gx);

// Serial loops kept as the correctness reference.
namespace reference {
SOFTMARK_KERNEL_DECLS
}

// OpenMP versions used by the layers. Every output element is owned by one
// thread and summed in a fixed order, so results do not depend on thread count.
namespace parallel {
SOFTMARK_KERNEL_DECLS
}

#undef SOFTMARK_KERNEL_DECLS

}  // namespace softmark::kernels
