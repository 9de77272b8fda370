#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dpt/errors.hpp"
#include "dpt/ops.hpp"
#include "test_util.hpp"

using namespace dpt;
using dpt::test::random_tensor;

namespace {

// Direct nested-loop cross-correlation.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, const Conv2dOptions& o) {
  const std::size_t B = x.dim(0), ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (H + 2 * o.pad - o.dilation * (kh - 1) - 1) / o.stride + 1;
  const std::size_t ow = (W + 2 * o.pad - o.dilation * (kw - 1) - 1) / o.stride + 1;
  std::vector<double> out(B * co * oh * ow, 0.0);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t c = 0; c < co; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = b.defined() ? b[c] : 0.0;
          for (std::size_t k = 0; k < ci; ++k)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long sy = static_cast<long>(y * o.stride + i * o.dilation) - static_cast<long>(o.pad);
                const long sx = static_cast<long>(xx * o.stride + j * o.dilation) - static_cast<long>(o.pad);
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(H) || sx >= static_cast<long>(W)) continue;
                acc += x[((n * ci + k) * H + sy) * W + sx] * w[((c * ci + k) * kh + i) * kw + j];
              }
          out[((n * co + c) * oh + y) * ow + xx] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("matmul matches hand-computed product") {
  const Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  const Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c[0] == 58);
  CHECK(c[1] == 64);
  CHECK(c[2] == 139);
  CHECK(c[3] == 154);
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("matmul_nt equals matmul with explicit transpose") {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({4, 5}, rng), b = random_tensor({6, 5}, rng);
  CHECK(test::max_abs_diff(matmul_nt(a, b).data(), matmul(a, transpose(b)).data()) < 1e-14);
}

TEST_CASE("softmax rows sum to one and follow the closed form") {
  const Tensor x = Tensor::from({2, 3}, {0, std::log(2.0), std::log(3.0), 1000, 1000, 1000});
  const Tensor s = softmax_rows(x);
  CHECK(s[0] == doctest::Approx(1.0 / 6));
  CHECK(s[1] == doctest::Approx(2.0 / 6));
  CHECK(s[2] == doctest::Approx(3.0 / 6));
  CHECK(s[3] == doctest::Approx(1.0 / 3));
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor r = softmax_rows(random_tensor({7, 9}, rng, -50, 50));
    for (std::size_t i = 0; i < 7; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 9; ++j) acc += r[i * 9 + j];
      CHECK(std::abs(acc - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("conv2d agrees with direct loops for stride, padding and dilation") {
  std::mt19937_64 rng(7);
  struct Case {
    std::size_t ci, co, k;
    Conv2dOptions opt;
    bool bias;
  };
  const Case cases[] = {{2, 3, 3, {1, 1, 1}, true}, {3, 2, 1, {1, 0, 1}, false}, {2, 2, 3, {2, 1, 1}, true},
                        {1, 4, 3, {1, 2, 2}, true}, {2, 1, 3, {1, 4, 4}, false}};
  for (const auto& c : cases) {
    const Tensor x = random_tensor({2, c.ci, 9, 8}, rng);
    const Tensor w = random_tensor({c.co, c.ci, c.k, c.k}, rng);
    const Tensor b = c.bias ? random_tensor({c.co}, rng) : Tensor();
    const Tensor y = conv2d(x, w, b, c.opt);
    const auto ref = naive_conv(x, w, b, c.opt);
    REQUIRE(y.numel() == ref.size());
    CHECK(test::max_abs_diff(y.data(), ref) < 1e-12);
  }
  CHECK_THROWS_AS(conv2d(random_tensor({1, 1, 2, 2}, rng), random_tensor({1, 1, 3, 3}, rng), Tensor()),
                  DimensionError);
  CHECK_THROWS_AS(conv2d(random_tensor({1, 2, 4, 4}, rng), random_tensor({1, 3, 1, 1}, rng), Tensor()),
                  DimensionError);
}

TEST_CASE("unfold orders patches by row then column, channel-major inside") {
  std::vector<double> v(2 * 4 * 4);
  std::iota(v.begin(), v.end(), 0.0);
  const Tensor x = Tensor::from({1, 2, 4, 4}, v);
  const Tensor t = unfold(x, {2, 2}, {2, 2});
  REQUIRE(t.shape() == Shape{4, 8});
  // second patch: rows 0-1, columns 2-3
  const double expect[8] = {2, 3, 6, 7, 18, 19, 22, 23};
  for (std::size_t j = 0; j < 8; ++j) CHECK(t[8 + j] == expect[j]);
  CHECK_THROWS_AS(unfold(x, {3, 3}, {2, 2}), ConfigError);
}

TEST_CASE("fold inverts unfold over random geometries") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> pick(1, 4);
  std::size_t disjoint = 0, overlapping = 0;
  while (disjoint + overlapping < 50) {
    const std::size_t ph = pick(rng), pw = pick(rng), sh = pick(rng), sw = pick(rng);
    if (sh > ph || sw > pw) continue;
    const std::size_t gh = pick(rng), gw = pick(rng);
    const std::size_t H = ph + (gh - 1) * sh, W = pw + (gw - 1) * sw;
    const Tensor x = random_tensor({2, 3, H, W}, rng);
    const Tensor y = fold(unfold(x, {ph, pw}, {sh, sw}), x.shape(), {ph, pw}, {sh, sw});
    if (sh == ph && sw == pw) {
      CHECK(test::bit_equal(y.data(), x.data()));
      ++disjoint;
    } else {
      CHECK(test::max_abs_diff(y.data(), x.data()) < 1e-6);
      ++overlapping;
    }
  }
  CHECK(disjoint > 0);
  CHECK(overlapping > 0);
}

TEST_CASE("pixel shuffle places sub-pixel channels") {
  std::vector<double> v(8);
  std::iota(v.begin(), v.end(), 0.0);
  // [1 x 4 x 1 x 2] -> [1 x 1 x 2 x 4]
  const Tensor y = pixel_shuffle(Tensor::from({1, 4, 1, 2}, v), 2);
  REQUIRE(y.shape() == Shape{1, 1, 2, 4});
  const double expect[8] = {0, 2, 1, 3, 4, 6, 5, 7};
  for (std::size_t i = 0; i < 8; ++i) CHECK(y[i] == expect[i]);
  CHECK_THROWS_AS(pixel_shuffle(Tensor::zeros({1, 3, 2, 2}), 2), DimensionError);
}

TEST_CASE("elementwise and shape ops") {
  CHECK(l1_loss(Tensor::from({2}, {1, 2}), Tensor::from({2}, {2, 4})).item() == 1.5);
  const Tensor x = Tensor::from({3}, {1, -2, 3});
  CHECK(l1_loss(x, x).item() == 0.0);
  CHECK(concat({Tensor::zeros({2, 3}), Tensor::zeros({2, 3})}, 0).shape() == Shape{4, 3});
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  CHECK_THROWS_AS(reshape(Tensor::zeros({2, 3}), {4}), DimensionError);
  const Tensor l = leaky_relu(x);
  CHECK(l[1] == doctest::Approx(-0.2));
  const Tensor p = permute(Tensor::from({2, 3}, {0, 1, 2, 3, 4, 5}), {1, 0});
  CHECK(p.shape() == Shape{3, 2});
  CHECK(p[1] == 3);
}

TEST_CASE("backward of sum gives ones and l1 gives the hand derivative") {
  Tensor x = Tensor::from({4}, {1, 2, 3, 4}, true);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  // loss = mean |w*x - y|, w = 2: residuals (2-3, 4-4, 6-2) = (-1, 0, 4)
  Tensor w = Tensor::from({3}, {2, 2, 2}, true);
  const Tensor in = Tensor::from({3}, {1, 2, 3});
  const Tensor y = Tensor::from({3}, {3, 4, 2});
  l1_loss(mul(w, in), y).backward();
  CHECK(w.grad()[0] == doctest::Approx(-1.0 / 3));
  CHECK(w.grad()[1] == 0.0);
  CHECK(w.grad()[2] == doctest::Approx(3.0 / 3));
}

TEST_CASE("gradients accumulate over repeated use") {
  Tensor x = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
  sum(add(mul(x, x), scale(x, 3.0))).backward();
  std::vector<double> both(x.grad().begin(), x.grad().end());

  Tensor a = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
  sum(mul(a, a)).backward();
  std::vector<double> first(a.grad().begin(), a.grad().end());
  a.zero_grad();
  sum(scale(a, 3.0)).backward();
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(both[i] == doctest::Approx(first[i] + a.grad()[i]));
    CHECK(both[i] == doctest::Approx(2 * x[i] + 3));
  }
}

TEST_CASE("backward on a non-scalar is a usage error") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(scale(x, 2.0).backward(), UsageError);
}

TEST_CASE("no-grad mode records nothing") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = scale(x, 2.0);
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(grad_enabled());
}

TEST_CASE("forward and backward are bit-deterministic") {
  auto run = [] {
    std::mt19937_64 rng(21);
    Tensor x = random_tensor({2, 3, 6, 6}, rng, -1, 1, true);
    Tensor w = random_tensor({4, 3, 3, 3}, rng, -1, 1, true);
    const Tensor y = leaky_relu(conv2d(x, w, Tensor(), {1, 1, 1}));
    test::project(y).backward();
    std::vector<double> out(y.data().begin(), y.data().end());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("mac counter skips arithmetic and counts conv work") {
  const Tensor x = Tensor::zeros({1, 2, 5, 5});
  const Tensor w = Tensor::zeros({3, 2, 3, 3});
  MacCounter counter;
  conv2d(x, w, Tensor(), {1, 1, 1});
  CHECK(counter.total() == 3ull * 2 * 9 * 25);
}

TEST_CASE("finiteness guard") {
  CHECK(all_finite(Tensor::from({2}, {1, 2})));
  CHECK_FALSE(all_finite(Tensor::from({2}, {1, std::nan("")})));
  CHECK_THROWS_AS(check_finite(Tensor::from({1}, {INFINITY}), "x"), NumericError);
}
