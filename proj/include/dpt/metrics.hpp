#pragma once

#include <cstddef>
#include <ostream>
#include <vector>

#include "dpt/lightfield.hpp"
#include "dpt/tensor.hpp"

namespace dpt {

inline constexpr double kPsnrCap = 100.0;

// 10 log10(peak^2 / MSE) over two [H x W] (or any equal-shape) arrays,
// capped at 100 dB.
double psnr(const Tensor& reference, const Tensor& test, double peak = 1.0);

// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// dynamic range 1, averaged over window positions fully inside the image.
double ssim(const Tensor& reference, const Tensor& test);

struct ViewScore {
  std::size_t scene = 0;
  std::size_t u = 0;
  std::size_t v = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<ViewScore> per_view;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::size_t n_views = 0;

  void write_table(std::ostream& os) const;    // tab-separated, one row per view
  void write_summary(std::ostream& os) const;  // key=value lines
};

// Scores every view of a single-channel prediction against the truth.
MetricReport evaluate(const LightField& prediction, const LightField& truth);
// Averages over all T x U x V views of several scenes.
MetricReport evaluate(const std::vector<LightField>& predictions, const std::vector<LightField>& truths);

}  // namespace dpt
