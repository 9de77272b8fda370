#include "dpt/lightfield.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "dpt/errors.hpp"

namespace dpt {

LightField::LightField(std::size_t u, std::size_t v, std::size_t c, std::size_t h, std::size_t w)
    : LightField(Tensor::zeros({u, v, c, h, w})) {}

LightField::LightField(Tensor data) : data_(std::move(data)) {
  if (data_.rank() != 5) throw DimensionError("light field needs a rank-5 tensor, got " + shape_str(data_.shape()));
  shape_ = data_.shape();
}

std::size_t LightField::angular() const {
  if (shape_[0] != shape_[1]) {
    throw DimensionError("angular grid is not square: " + std::to_string(shape_[0]) + "x" +
                         std::to_string(shape_[1]));
  }
  return shape_[0];
}

std::size_t LightField::offset(std::size_t u, std::size_t v, std::size_t c, std::size_t h,
                               std::size_t w) const {
  return (((u * shape_[1] + v) * shape_[2] + c) * shape_[3] + h) * shape_[4] + w;
}

double LightField::at(std::size_t u, std::size_t v, std::size_t c, std::size_t h, std::size_t w) const {
  return data_.data()[offset(u, v, c, h, w)];
}

void LightField::set(std::size_t u, std::size_t v, std::size_t c, std::size_t h, std::size_t w,
                     double value) {
  data_.mutable_data()[offset(u, v, c, h, w)] = value;
}

std::span<const double> LightField::view(std::size_t u, std::size_t v) const {
  return data_.data().subspan(offset(u, v, 0, 0, 0), view_size());
}

std::span<double> LightField::mutable_view(std::size_t u, std::size_t v) {
  return data_.mutable_data().subspan(offset(u, v, 0, 0, 0), view_size());
}

Tensor LightField::view_tensor(std::size_t u, std::size_t v) const {
  auto s = view(u, v);
  return Tensor::from({channels(), height(), width()}, std::vector<double>(s.begin(), s.end()));
}

void LightField::set_view(std::size_t u, std::size_t v, const Tensor& image) {
  if (image.shape() != Shape{channels(), height(), width()}) {
    throw DimensionError("set_view: image " + shape_str(image.shape()) + " does not fit the view");
  }
  std::copy(image.data().begin(), image.data().end(), mutable_view(u, v).begin());
}

namespace {

constexpr double kKr = 0.299;
constexpr double kKg = 0.587;
constexpr double kKb = 0.114;

void require_channels(const LightField& lf, std::size_t c, const char* op) {
  if (lf.channels() != c) {
    throw DimensionError(std::string(op) + ": expected " + std::to_string(c) + " channel(s), got " +
                         std::to_string(lf.channels()));
  }
}

template <typename PixelFn>
LightField map_pixels3(const LightField& lf, PixelFn fn) {
  LightField out(lf.angular_u(), lf.angular_v(), 3, lf.height(), lf.width());
  const std::size_t plane = lf.height() * lf.width();
  for (std::size_t u = 0; u < lf.angular_u(); ++u)
    for (std::size_t v = 0; v < lf.angular_v(); ++v) {
      auto src = lf.view(u, v);
      auto dst = out.mutable_view(u, v);
      for (std::size_t p = 0; p < plane; ++p) {
        auto [a, b, c] = fn(src[p], src[plane + p], src[2 * plane + p]);
        dst[p] = a;
        dst[plane + p] = b;
        dst[2 * plane + p] = c;
      }
    }
  return out;
}

struct Triple {
  double a, b, c;
};

}  // namespace

LightField rgb_to_ycbcr(const LightField& lf) {
  require_channels(lf, 3, "rgb_to_ycbcr");
  return map_pixels3(lf, [](double r, double g, double b) {
    const double y = kKr * r + kKg * g + kKb * b;
    return Triple{y, 0.5 + (b - y) / (2.0 * (1.0 - kKb)), 0.5 + (r - y) / (2.0 * (1.0 - kKr))};
  });
}

LightField ycbcr_to_rgb(const LightField& lf) {
  require_channels(lf, 3, "ycbcr_to_rgb");
  return map_pixels3(lf, [](double y, double cb, double cr) {
    const double r = y + 2.0 * (1.0 - kKr) * (cr - 0.5);
    const double b = y + 2.0 * (1.0 - kKb) * (cb - 0.5);
    const double g = (y - kKr * r - kKb * b) / kKg;
    return Triple{r, g, b};
  });
}

LightField extract_channel(const LightField& lf, std::size_t channel) {
  if (channel >= lf.channels()) throw DimensionError("extract_channel: channel out of range");
  LightField out(lf.angular_u(), lf.angular_v(), 1, lf.height(), lf.width());
  const std::size_t plane = lf.height() * lf.width();
  for (std::size_t u = 0; u < lf.angular_u(); ++u)
    for (std::size_t v = 0; v < lf.angular_v(); ++v) {
      auto src = lf.view(u, v).subspan(channel * plane, plane);
      std::copy(src.begin(), src.end(), out.mutable_view(u, v).begin());
    }
  return out;
}

LightField replace_channel(const LightField& lf, std::size_t channel, const LightField& plane_lf) {
  if (channel >= lf.channels()) throw DimensionError("replace_channel: channel out of range");
  if (plane_lf.channels() != 1 || plane_lf.angular_u() != lf.angular_u() ||
      plane_lf.angular_v() != lf.angular_v() || plane_lf.height() != lf.height() ||
      plane_lf.width() != lf.width()) {
    throw DimensionError("replace_channel: plane " + shape_str(plane_lf.shape()) + " does not match " +
                         shape_str(lf.shape()));
  }
  LightField out(lf.tensor().clone());
  const std::size_t plane = lf.height() * lf.width();
  for (std::size_t u = 0; u < lf.angular_u(); ++u)
    for (std::size_t v = 0; v < lf.angular_v(); ++v) {
      auto src = plane_lf.view(u, v);
      std::copy(src.begin(), src.end(), out.mutable_view(u, v).begin() + static_cast<std::ptrdiff_t>(channel * plane));
    }
  return out;
}

LightField gradient_field(const LightField& lf) {
  require_channels(lf, 1, "gradient_field");
  const std::size_t h = lf.height(), w = lf.width();
  LightField out(lf.angular_u(), lf.angular_v(), 1, h, w);
  auto clamp = [](std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  for (std::size_t u = 0; u < lf.angular_u(); ++u)
    for (std::size_t v = 0; v < lf.angular_v(); ++v) {
      auto src = lf.view(u, v);
      auto dst = out.mutable_view(u, v);
      for (std::size_t y = 0; y < h; ++y) {
        const auto yi = static_cast<std::ptrdiff_t>(y);
        const std::size_t ym = clamp(yi - 1, h), yp = clamp(yi + 1, h);
        for (std::size_t x = 0; x < w; ++x) {
          const auto xi = static_cast<std::ptrdiff_t>(x);
          const std::size_t xm = clamp(xi - 1, w), xp = clamp(xi + 1, w);
          auto p = [&](std::size_t yy, std::size_t xx) { return src[yy * w + xx]; };
          const double gx = (p(ym, xp) + 2.0 * p(y, xp) + p(yp, xp)) - (p(ym, xm) + 2.0 * p(y, xm) + p(yp, xm));
          const double gy = (p(yp, xm) + 2.0 * p(yp, x) + p(yp, xp)) - (p(ym, xm) + 2.0 * p(ym, x) + p(ym, xp));
          dst[y * w + x] = std::sqrt(gx * gx + gy * gy) / 8.0;
        }
      }
    }
  return out;
}

double keys_kernel(double x) {
  constexpr double a = -0.5;
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace {

std::size_t scaled_extent(std::size_t n, double factor) {
  const double target = static_cast<double>(n) * factor;
  const double rounded = std::round(target);
  if (factor <= 0.0 || rounded < 1.0 || std::abs(target - rounded) > 1e-9) {
    throw ConfigError("bicubic_resize: extent " + std::to_string(n) + " times " + std::to_string(factor) +
                      " is not a positive integer");
  }
  return static_cast<std::size_t>(rounded);
}

struct Taps {
  std::size_t index[4];
  double weight[4];
};

// Four-tap filter for every output position along one axis.
std::vector<Taps> axis_taps(std::size_t in, std::size_t out) {
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  std::vector<Taps> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    const double base = std::floor(src);
    for (int k = 0; k < 4; ++k) {
      const double pos = base - 1.0 + k;
      const auto idx = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(pos), 0,
                                                  static_cast<std::ptrdiff_t>(in) - 1);
      taps[o].index[k] = static_cast<std::size_t>(idx);
      taps[o].weight[k] = keys_kernel(src - pos);
    }
  }
  return taps;
}

}  // namespace

Tensor bicubic_resize(const Tensor& image, double factor) {
  if (image.rank() != 3) throw DimensionError("bicubic_resize expects [C x H x W], got " + shape_str(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::size_t oh = scaled_extent(h, factor), ow = scaled_extent(w, factor);
  if (oh == h && ow == w) return image.clone();
  const auto row_taps = axis_taps(h, oh);
  const auto col_taps = axis_taps(w, ow);
  auto in = image.data();
  std::vector<double> tmp(c * h * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = in.data() + (ch * h + y) * w;
      double* dst = tmp.data() + (ch * h + y) * ow;
      for (std::size_t x = 0; x < ow; ++x) {
        const Taps& t = col_taps[x];
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += t.weight[k] * src[t.index[k]];
        dst[x] = acc;
      }
    }
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y) {
      const Taps& t = row_taps[y];
      double* dst = out.data() + (ch * oh + y) * ow;
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += t.weight[k] * tmp[(ch * h + t.index[k]) * ow + x];
        dst[x] = acc;
      }
    }
  return Tensor::from({c, oh, ow}, std::move(out));
}

LightField resize_views(const LightField& lf, double factor) {
  const std::size_t oh = scaled_extent(lf.height(), factor), ow = scaled_extent(lf.width(), factor);
  LightField out(lf.angular_u(), lf.angular_v(), lf.channels(), oh, ow);
  for (std::size_t u = 0; u < lf.angular_u(); ++u)
    for (std::size_t v = 0; v < lf.angular_v(); ++v) out.set_view(u, v, bicubic_resize(lf.view_tensor(u, v), factor));
  return out;
}

std::vector<PatchPair> crop_patches(const LightField& hr, const LightField& lr, std::size_t factor,
                                    std::size_t patch, std::size_t stride) {
  if (factor == 0 || patch == 0 || stride == 0) throw ConfigError("crop_patches: zero factor, patch or stride");
  if (patch > hr.height() || patch > hr.width()) {
    throw ConfigError("crop_patches: patch " + std::to_string(patch) + " larger than image " +
                      std::to_string(hr.height()) + "x" + std::to_string(hr.width()));
  }
  if (patch % factor != 0 || stride % factor != 0) {
    throw ConfigError("crop_patches: patch and stride must be multiples of the scale factor");
  }
  if (lr.height() * factor != hr.height() || lr.width() * factor != hr.width() ||
      lr.angular_u() != hr.angular_u() || lr.angular_v() != hr.angular_v() || lr.channels() != hr.channels()) {
    throw DimensionError("crop_patches: LR " + shape_str(lr.shape()) + " is not HR " + shape_str(hr.shape()) +
                         " downscaled by " + std::to_string(factor));
  }
  auto crop = [](const LightField& src, std::size_t y0, std::size_t x0, std::size_t size) {
    LightField out(src.angular_u(), src.angular_v(), src.channels(), size, size);
    for (std::size_t u = 0; u < src.angular_u(); ++u)
      for (std::size_t v = 0; v < src.angular_v(); ++v)
        for (std::size_t c = 0; c < src.channels(); ++c)
          for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) out.set(u, v, c, y, x, src.at(u, v, c, y0 + y, x0 + x));
    return out;
  };
  std::vector<PatchPair> pairs;
  const std::size_t lp = patch / factor;
  for (std::size_t y = 0; y + patch <= hr.height(); y += stride)
    for (std::size_t x = 0; x + patch <= hr.width(); x += stride)
      pairs.push_back({crop(lr, y / factor, x / factor, lp), crop(hr, y, x, patch)});
  return pairs;
}

namespace {

using CoordMap = std::function<void(std::size_t& u, std::size_t& v, std::size_t& h, std::size_t& w)>;

// Builds out(u,v,c,h,w) = in(src(u,v,h,w)) where `src` rewrites the
// coordinates in place.
LightField remap(const LightField& lf, std::size_t out_h, std::size_t out_w, const CoordMap& src) {
  LightField out(lf.angular_u(), lf.angular_v(), lf.channels(), out_h, out_w);
  for (std::size_t u = 0; u < lf.angular_u(); ++u)
    for (std::size_t v = 0; v < lf.angular_v(); ++v)
      for (std::size_t h = 0; h < out_h; ++h)
        for (std::size_t w = 0; w < out_w; ++w) {
          std::size_t su = u, sv = v, sh = h, sw = w;
          src(su, sv, sh, sw);
          for (std::size_t c = 0; c < lf.channels(); ++c) out.set(u, v, c, h, w, lf.at(su, sv, c, sh, sw));
        }
  return out;
}

LightField quarter_turn(const LightField& lf) {
  const std::size_t a = lf.angular(), n = lf.height();
  if (lf.width() != n) throw DimensionError("quarter-turn rotation requires square views");
  return remap(lf, n, n, [a, n](std::size_t& u, std::size_t& v, std::size_t& h, std::size_t& w) {
    const std::size_t nu = v, nv = a - 1 - u, nh = w, nw = n - 1 - h;
    u = nu, v = nv, h = nh, w = nw;
  });
}

LightField mirror_horizontal(const LightField& lf) {
  const std::size_t av = lf.angular_v(), width = lf.width();
  return remap(lf, lf.height(), width, [av, width](std::size_t&, std::size_t& v, std::size_t&, std::size_t& w) {
    v = av - 1 - v;
    w = width - 1 - w;
  });
}

LightField mirror_vertical(const LightField& lf) {
  const std::size_t au = lf.angular_u(), height = lf.height();
  return remap(lf, height, lf.width(), [au, height](std::size_t& u, std::size_t&, std::size_t& h, std::size_t&) {
    u = au - 1 - u;
    h = height - 1 - h;
  });
}

int normalised_turns(int k) { return ((k % 4) + 4) % 4; }

}  // namespace

LightField apply_augmentation(const LightField& lf, const Augmentation& t) {
  LightField out = lf;
  if (t.is_identity()) return LightField(lf.tensor().clone());
  for (int k = 0; k < normalised_turns(t.quarter_turns); ++k) out = quarter_turn(out);
  if (t.flip_horizontal) out = mirror_horizontal(out);
  if (t.flip_vertical) out = mirror_vertical(out);
  return out.tensor().node() == lf.tensor().node() ? LightField(lf.tensor().clone()) : out;
}

LightField apply_inverse_augmentation(const LightField& lf, const Augmentation& t) {
  LightField out = lf;
  if (t.flip_vertical) out = mirror_vertical(out);
  if (t.flip_horizontal) out = mirror_horizontal(out);
  for (int k = normalised_turns(t.quarter_turns); k > 0 && k < 4; ++k) out = quarter_turn(out);
  return out.tensor().node() == lf.tensor().node() ? LightField(lf.tensor().clone()) : out;
}

PatchPair apply_augmentation(const PatchPair& pair, const Augmentation& t) {
  return {apply_augmentation(pair.lr, t), apply_augmentation(pair.hr, t)};
}

Augmentation random_augmentation(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> turns(0, 3);
  std::bernoulli_distribution coin(0.5);
  Augmentation t;
  t.quarter_turns = turns(rng);
  t.flip_horizontal = coin(rng);
  t.flip_vertical = coin(rng);
  return t;
}

PatchPair augment(const PatchPair& pair, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return apply_augmentation(pair, random_augmentation(rng));
}

}  // namespace dpt
