#include <cmath>
#include <sstream>

#include "doctest.h"
#include "dpt/errors.hpp"
#include "dpt/metrics.hpp"
#include "test_util.hpp"

using namespace dpt;
using dpt::test::random_tensor;

TEST_CASE("PSNR analytic cases") {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({1, 16, 16}, rng, 0.2, 0.8);
  CHECK(psnr(a, a) == kPsnrCap);
  std::vector<double> shifted(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += (i % 2 ? 0.1 : -0.1);
  CHECK(std::abs(psnr(a, Tensor::from({1, 16, 16}, shifted)) - 20.0) < 1e-9);
  // MSE 1e-4 -> 40 dB
  const Tensor z = Tensor::zeros({4, 4}), e = Tensor::full({4, 4}, 0.01);
  CHECK(psnr(z, e) == doctest::Approx(40.0).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(z, Tensor::zeros({4, 5})), DimensionError);
}

TEST_CASE("SSIM of identical images is one and symmetric otherwise") {
  std::mt19937_64 rng(2);
  const Tensor a = random_tensor({1, 20, 24}, rng, 0, 1), b = random_tensor({1, 20, 24}, rng, 0, 1);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(a, b) == ssim(b, a));
  CHECK(ssim(a, b) < 0.5);
  CHECK_THROWS_AS(ssim(Tensor::zeros({1, 10, 20}), Tensor::zeros({1, 10, 20})), ConfigError);
}

TEST_CASE("SSIM of constant images follows the luminance term") {
  const double c1 = 0.01 * 0.01;
  for (auto [x, y] : {std::pair{0.2, 0.7}, std::pair{0.5, 0.5}, std::pair{0.0, 1.0}, std::pair{0.9, 0.3}}) {
    const double expect = (2 * x * y + c1) / (x * x + y * y + c1);
    CHECK(ssim(Tensor::full({1, 12, 12}, x), Tensor::full({1, 12, 12}, y)) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("report averages over every view of every scene") {
  std::mt19937_64 rng(3);
  std::vector<LightField> pred, truth;
  for (int s = 0; s < 2; ++s) {
    truth.emplace_back(random_tensor({2, 3, 1, 12, 12}, rng, 0, 1));
    LightField p(truth.back().tensor().clone());
    for (double& v : p.tensor().mutable_data()) v = std::clamp(v + 0.05 * (s + 1), 0.0, 1.0);
    pred.push_back(p);
  }
  const MetricReport r = evaluate(pred, truth);
  CHECK(r.n_views == 12);
  REQUIRE(r.per_view.size() == 12);
  double ps = 0, ss = 0;
  for (const auto& v : r.per_view) {
    ps += v.psnr;
    ss += v.ssim;
  }
  CHECK(r.mean_psnr == doctest::Approx(ps / 12).epsilon(1e-14));
  CHECK(r.mean_ssim == doctest::Approx(ss / 12).epsilon(1e-14));
  CHECK(r.per_view[7].scene == 1);
  CHECK(r.per_view[7].u == 0);
  CHECK(r.per_view[7].v == 1);
  CHECK(r.per_view[7].psnr == psnr(truth[1].view_tensor(0, 1), pred[1].view_tensor(0, 1)));

  std::ostringstream table, summary;
  r.write_table(table);
  r.write_summary(summary);
  std::size_t lines = 0;
  for (char c : table.str()) lines += c == '\n';
  CHECK(lines == 13);
  CHECK(summary.str().find("mean_psnr=") != std::string::npos);

  const MetricReport self = evaluate(truth[0], truth[0]);
  CHECK(self.mean_psnr == kPsnrCap);
  CHECK(self.mean_ssim == doctest::Approx(1.0));
  CHECK_THROWS_AS(evaluate(truth[0], LightField(Tensor::zeros({2, 3, 1, 12, 14}))), DimensionError);
}
