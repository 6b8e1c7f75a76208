#include <vector>

#include "doctest.h"
#include "softmark/kernels.hpp"
#include "test_util.hpp"

using namespace softmark;
using namespace softmark::kernels;
using softmark::testing::random_tensor;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("parallel gemm matches the serial reference for every transpose combination") {
  Rng rng(1);
  for (auto ta : {Trans::no, Trans::yes})
    for (auto tb : {Trans::no, Trans::yes})
      for (auto [m, n, k] : {std::tuple{1, 1, 1}, {7, 5, 3}, {64, 33, 130}, {3, 200, 70}}) {
        const Tensor a = random_tensor({std::size_t(m * k)}, rng);
        const Tensor b = random_tensor({std::size_t(k * n)}, rng);
        const Tensor c0 = random_tensor({std::size_t(m * n)}, rng);
        for (bool acc : {false, true}) {
          std::vector<double> cr = c0.storage(), cp = c0.storage();
          reference::gemm(ta, tb, m, n, k, a.data(), b.data(), cr.data(), acc);
          parallel::gemm(ta, tb, m, n, k, a.data(), b.data(), cp.data(), acc);
          CHECK(max_abs_diff(cr, cp) < 1e-10);
        }
      }
}

TEST_CASE("gemm on a hand-sized product") {
  const double a[] = {1, 2, 3, 4, 5, 6};        // 2x3
  const double b[] = {7, 8, 9, 10, 11, 12};     // 3x2
  double c[4];
  reference::gemm(Trans::no, Trans::no, 2, 2, 3, a, b, c, false);
  CHECK(c[0] == 58);
  CHECK(c[1] == 64);
  CHECK(c[2] == 139);
  CHECK(c[3] == 154);
}

TEST_CASE("im2col and col2im agree between implementations and are adjoint") {
  Rng rng(2);
  for (auto g : {ConvGeom{3, 8, 8, 3, 1, 1}, ConvGeom{2, 9, 7, 3, 2, 1}, ConvGeom{4, 6, 6, 1, 1, 0},
                 ConvGeom{1, 5, 5, 1, 1, 1}, ConvGeom{64, 32, 32, 3, 1, 1}}) {
    const Tensor img = random_tensor({g.channels * g.height * g.width}, rng);
    std::vector<double> cr(g.col_rows() * g.col_cols()), cp(cr.size());
    reference::im2col(img.data(), g, cr.data());
    parallel::im2col(img.data(), g, cp.data());
    CHECK(max_abs_diff(cr, cp) == 0.0);

    const Tensor col = random_tensor({cr.size()}, rng);
    std::vector<double> ir(img.size(), 0.0), ip(img.size(), 0.0);
    reference::col2im(col.data(), g, ir.data());
    parallel::col2im(col.data(), g, ip.data());
    CHECK(max_abs_diff(ir, ip) < 1e-12);

    // <im2col(x), c> == <x, col2im(c)>
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < cr.size(); ++i) lhs += cr[i] * col[i];
    for (std::size_t i = 0; i < img.size(); ++i) rhs += img[i] * ir[i];
    CHECK(softmark::testing::rel_err(lhs, rhs) < 1e-10);
  }
}

TEST_CASE("elementwise kernels agree") {
  Rng rng(3);
  for (std::size_t n : {5u, 100000u}) {
    const Tensor x = random_tensor({n}, rng), gy = random_tensor({n}, rng);
    std::vector<double> yr(n), yp(n), gr(n), gp(n), ar = gy.storage(), ap = gy.storage();
    reference::relu_forward(n, x.data(), yr.data());
    parallel::relu_forward(n, x.data(), yp.data());
    reference::relu_backward(n, x.data(), gy.data(), gr.data());
    parallel::relu_backward(n, x.data(), gy.data(), gp.data());
    reference::axpy(n, 0.3, x.data(), ar.data());
    parallel::axpy(n, 0.3, x.data(), ap.data());
    CHECK(yr == yp);
    CHECK(gr == gp);
    CHECK(ar == ap);
  }
}
