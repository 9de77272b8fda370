#include <cmath>

#include "doctest.h"
#include "dpt/errors.hpp"
#include "dpt/salsa.hpp"
#include "test_util.hpp"

using namespace dpt;
using dpt::test::random_tensor;

namespace {

void set_identity(Conv2d& conv) {
  auto w = conv.weight.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  const std::size_t c = conv.out_channels();
  for (std::size_t i = 0; i < c; ++i) w[i * c + i] = 1.0;
  if (conv.bias.defined()) {
    auto b = conv.bias.mutable_data();
    std::fill(b.begin(), b.end(), 0.0);
  }
}

SalsaConfig small_config(std::size_t c, Extent2 patch, Extent2 stride) {
  SalsaConfig cfg;
  cfg.channels = c;
  cfg.patch = patch;
  cfg.stride = stride;
  return cfg;
}

Tensor rows(const Tensor& t, const std::vector<std::size_t>& order) {
  std::vector<Tensor> parts;
  for (std::size_t i : order) parts.push_back(slice(t, 0, i, 1));
  return concat(parts, 0);
}

}  // namespace

TEST_CASE("token count spans the angular axis") {
  const SalsaConfig cfg = small_config(2, {4, 4}, {4, 4});
  CHECK(cfg.token_count(3, 8, 8) == 12);
  CHECK(small_config(2, {4, 4}, {2, 2}).token_count(3, 8, 8) == 27);
  CHECK_THROWS_AS(cfg.token_count(3, 9, 8), ConfigError);
  std::mt19937_64 rng(1);
  Projection p;
  p.conv = Conv2d(2, 2, 1, rng);
  const Tensor tokens = tokenize(random_tensor({3, 2, 8, 8}, rng), p, cfg);
  CHECK(tokens.shape() == Shape{12, 32});
}

TEST_CASE("tokenize with identity projection returns raw patches of every view") {
  std::mt19937_64 rng(2);
  const SalsaConfig cfg = small_config(2, {2, 2}, {2, 2});
  Projection p;
  p.conv = Conv2d(2, 2, 1, rng);
  set_identity(p.conv);
  const Tensor f = random_tensor({2, 2, 4, 4}, rng);
  const Tensor t = tokenize(f, p, cfg);
  REQUIRE(t.shape() == Shape{8, 8});
  CHECK(test::bit_equal(t.data(), unfold(f, {2, 2}, {2, 2}).data()));
  // token 5: view 1, patch (0,1); element 6 is channel 1, offset (1,0)
  CHECK(t[5 * 8 + 6] == f[((1 * 2 + 1) * 4 + 1) * 4 + 2]);

  const SalsaConfig whole = small_config(2, {4, 4}, {4, 4});
  const Tensor one = tokenize(slice(f, 0, 0, 1), p, whole);
  CHECK(one.shape() == Shape{1, 32});
}

TEST_CASE("pixel tokens are a bijective reshaping") {
  std::mt19937_64 rng(3);
  const SalsaConfig cfg = small_config(3, {1, 1}, {1, 1});
  Projection p;
  p.conv = Conv2d(3, 3, 1, rng);
  set_identity(p.conv);
  const Tensor f = random_tensor({2, 3, 4, 5}, rng);
  const Tensor t = tokenize(f, p, cfg);
  CHECK(t.shape() == Shape{40, 3});
  CHECK(test::bit_equal(fold(t, f.shape(), cfg.patch, cfg.stride).data(), f.data()));
}

TEST_CASE("attend special cases") {
  std::mt19937_64 rng(4);
  const Tensor v1 = random_tensor({1, 5}, rng);
  CHECK(test::bit_equal(attend(random_tensor({1, 5}, rng), random_tensor({1, 5}, rng), v1, AttentionScale::kScaled).data(),
                        v1.data()));

  const Tensor krow = random_tensor({1, 3}, rng);
  const Tensor k = concat({krow, krow, krow, krow}, 0);
  const Tensor v = random_tensor({4, 3}, rng);
  const Tensor out = attend(random_tensor({2, 3}, rng), k, v, AttentionScale::kUnscaled);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const double m = (v[j] + v[3 + j] + v[6 + j] + v[9 + j]) / 4;
      CHECK(out[i * 3 + j] == doctest::Approx(m).epsilon(1e-14));
    }
}

TEST_CASE("attend matches a long-double brute-force evaluation") {
  const Tensor q = Tensor::from({3, 2}, {0.3, -1.2, 2.0, 0.5, -0.7, 0.1});
  const Tensor k = Tensor::from({3, 2}, {1.0, 0.2, -0.4, 0.9, 0.6, -1.5});
  const Tensor v = Tensor::from({3, 2}, {0.25, 1.0, -2.0, 0.5, 3.0, -0.75});
  for (AttentionScale mode : {AttentionScale::kScaled, AttentionScale::kUnscaled}) {
    const long double s = mode == AttentionScale::kScaled ? 1.0L / std::sqrt(2.0L) : 1.0L;
    const Tensor out = attend(q, k, v, mode);
    for (std::size_t i = 0; i < 3; ++i) {
      long double w[3], z = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        w[j] = std::exp(s * ((long double)q[2 * i] * k[2 * j] + (long double)q[2 * i + 1] * k[2 * j + 1]));
        z += w[j];
      }
      for (std::size_t c = 0; c < 2; ++c) {
        long double acc = 0;
        for (std::size_t j = 0; j < 3; ++j) acc += w[j] / z * v[2 * j + c];
        CHECK(std::abs(out[2 * i + c] - static_cast<double>(acc)) < 1e-14);
      }
    }
  }
  CHECK_THROWS_AS(attend(q, k, Tensor::zeros({2, 2}), AttentionScale::kScaled), DimensionError);
}

TEST_CASE("attend is permutation equivariant in queries and invariant in key-value pairs") {
  std::mt19937_64 rng(5);
  const Tensor q = random_tensor({5, 4}, rng), k = random_tensor({6, 4}, rng), v = random_tensor({6, 4}, rng);
  const Tensor base = attend(q, k, v, AttentionScale::kScaled);
  const std::vector<std::size_t> pq{3, 0, 4, 1, 2}, pk{5, 2, 0, 3, 1, 4};
  CHECK(test::max_abs_diff(attend(rows(q, pq), k, v, AttentionScale::kScaled).data(), rows(base, pq).data()) < 1e-14);
  CHECK(test::max_abs_diff(attend(q, rows(k, pk), rows(v, pk), AttentionScale::kScaled).data(), base.data()) < 1e-14);
}

TEST_CASE("detokenize residual behaviour") {
  std::mt19937_64 rng(6);
  const SalsaConfig cfg = small_config(2, {2, 2}, {2, 2});
  const Tensor f = random_tensor({2, 2, 4, 4}, rng);
  Projection p;
  p.conv = Conv2d(2, 2, 1, rng);
  p.conv.zero();
  CHECK(test::bit_equal(detokenize(random_tensor({8, 8}, rng), f, p, cfg).data(), f.data()));
  set_identity(p.conv);
  const Tensor doubled = detokenize(unfold(f, cfg.patch, cfg.stride), f, p, cfg);
  for (std::size_t i = 0; i < f.numel(); ++i) CHECK(doubled[i] == 2 * f[i]);

  // overlapping case against composed oracles
  const SalsaConfig ov = small_config(2, {2, 2}, {1, 1});
  Projection q;
  q.conv = Conv2d(2, 2, 1, rng);
  const Tensor x = random_tensor({2 * 9, 8}, rng);
  const Tensor got = detokenize(x, f, q, ov);
  const Tensor folded = fold(x, f.shape(), ov.patch, ov.stride);
  const Tensor expect = add(conv2d(folded, q.conv.weight, q.conv.bias), f);
  CHECK(test::max_abs_diff(got.data(), expect.data()) < 1e-14);
  CHECK_THROWS_AS(detokenize(x, Tensor::zeros({2, 3, 4, 4}), q, ov), DimensionError);
}

TEST_CASE("fresh layers are exact identities") {
  std::mt19937_64 rng(7);
  for (Tokenizer tok : {Tokenizer::kConv, Tokenizer::kLinear}) {
    SalsaConfig cfg = small_config(3, {2, 2}, {1, 1});
    cfg.tokenizer = tok;
    SalsaLayer layer(cfg, rng);
    const Tensor f = random_tensor({3, 3, 4, 4}, rng), g = random_tensor({3, 3, 4, 4}, rng);
    CHECK(test::bit_equal(layer.forward(f).data(), f.data()));
    CHECK(test::bit_equal(layer.cross_forward(f, g).data(), f.data()));
  }
}

TEST_CASE("single-view sequences degrade to spatial attention") {
  std::mt19937_64 rng(8);
  SalsaLayer layer(small_config(2, {2, 2}, {2, 2}), rng);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  for (double& w : layer.output().conv.weight.mutable_data()) w = d(rng);
  const Tensor out = layer.forward(random_tensor({1, 2, 4, 4}, rng));
  CHECK(out.shape() == Shape{1, 2, 4, 4});
  CHECK(all_finite(out));
}

TEST_CASE("cross attention with identical streams is self attention") {
  std::mt19937_64 rng(9);
  SalsaLayer layer(small_config(2, {2, 2}, {1, 1}), rng);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  for (double& w : layer.output().conv.weight.mutable_data()) w = d(rng);
  const Tensor u = random_tensor({3, 2, 4, 4}, rng);
  CHECK(test::bit_equal(layer.cross_forward(u, u).data(), layer.forward(u).data()));
  CHECK_THROWS_AS(layer.cross_forward(u, random_tensor({2, 2, 4, 4}, rng)), DimensionError);
  CHECK_THROWS_AS(layer.forward(random_tensor({3, 3, 4, 4}, rng)), DimensionError);
}
