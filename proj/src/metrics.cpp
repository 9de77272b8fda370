#include "dpt/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <string>

#include "dpt/errors.hpp"

namespace dpt {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::pair<std::size_t, std::size_t> image_extent(const Tensor& t) {
  // Accept [H x W] or [1 x H x W].
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  if (t.rank() == 3 && t.dim(0) == 1) return {t.dim(1), t.dim(2)};
  throw DimensionError("expected a single-channel image, got " + shape_str(t.shape()));
}

std::vector<double> gaussian_window() {
  std::vector<double> g(kWindow);
  double total = 0.0;
  const double centre = (kWindow - 1) / 2.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - centre;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable valid-region filtering of an h x w image.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * img[y * w + x + k];
      tmp[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * tmp[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

Tensor view_plane(const LightField& lf, std::size_t u, std::size_t v) {
  auto s = lf.view(u, v);
  return Tensor::from({lf.height(), lf.width()}, std::vector<double>(s.begin(), s.end()));
}

}  // namespace

double psnr(const Tensor& reference, const Tensor& test, double peak) {
  if (reference.shape() != test.shape()) {
    throw DimensionError("psnr: shape mismatch " + shape_str(reference.shape()) + " vs " + shape_str(test.shape()));
  }
  double se = 0.0;
  for (std::size_t i = 0; i < reference.numel(); ++i) {
    const double d = reference[i] - test[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(reference.numel());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Tensor& reference, const Tensor& test) {
  if (reference.shape() != test.shape()) {
    throw DimensionError("ssim: shape mismatch " + shape_str(reference.shape()) + " vs " + shape_str(test.shape()));
  }
  const auto [h, w] = image_extent(reference);
  if (h < kWindow || w < kWindow) {
    throw ConfigError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " smaller than the 11x11 window");
  }
  const auto g = gaussian_window();
  std::vector<double> a(reference.data().begin(), reference.data().end());
  std::vector<double> b(test.data().begin(), test.data().end());
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w, g), mu_b = filter_valid(b, h, w, g);
  const auto e_aa = filter_valid(aa, h, w, g), e_bb = filter_valid(bb, h, w, g), e_ab = filter_valid(ab, h, w, g);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma, var_b = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2.0 * (ma * mb) + kC1) * (2.0 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
  }
  return total / static_cast<double>(mu_a.size());
}

MetricReport evaluate(const LightField& prediction, const LightField& truth) {
  return evaluate(std::vector<LightField>{prediction}, std::vector<LightField>{truth});
}

MetricReport evaluate(const std::vector<LightField>& predictions, const std::vector<LightField>& truths) {
  if (predictions.size() != truths.size()) throw DimensionError("evaluate: scene count mismatch");
  MetricReport report;
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const LightField& p = predictions[s];
    const LightField& t = truths[s];
    if (p.shape() != t.shape()) {
      throw DimensionError("evaluate: prediction " + shape_str(p.shape()) + " vs truth " + shape_str(t.shape()));
    }
    if (p.channels() != 1) throw DimensionError("evaluate: expected the Y channel only");
    for (std::size_t u = 0; u < p.angular_u(); ++u)
      for (std::size_t v = 0; v < p.angular_v(); ++v) {
        const Tensor ref = view_plane(t, u, v), out = view_plane(p, u, v);
        report.per_view.push_back({s, u, v, psnr(ref, out), ssim(ref, out)});
      }
  }
  report.n_views = report.per_view.size();
  for (const auto& row : report.per_view) {
    report.mean_psnr += row.psnr;
    report.mean_ssim += row.ssim;
  }
  if (report.n_views > 0) {
    report.mean_psnr /= static_cast<double>(report.n_views);
    report.mean_ssim /= static_cast<double>(report.n_views);
  }
  return report;
}

void MetricReport::write_table(std::ostream& os) const {
  os << "scene\tu\tv\tpsnr_db\tssim\n" << std::fixed;
  for (const auto& row : per_view) {
    os << row.scene << '\t' << row.u << '\t' << row.v << '\t' << std::setprecision(4) << row.psnr << '\t'
       << std::setprecision(6) << row.ssim << '\n';
  }
  os.unsetf(std::ios::floatfield);
}

void MetricReport::write_summary(std::ostream& os) const {
  os << std::setprecision(10) << "n_views=" << n_views << "\nmean_psnr=" << mean_psnr << "\nmean_ssim=" << mean_ssim
     << '\n';
}

}  // namespace dpt
