#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dpt/tensor.hpp"

namespace dpt {

// Angular grid of sub-aperture images stored as a [U x V x C x H x W] tensor.
class LightField {
 public:
  LightField() = default;
  LightField(std::size_t u, std::size_t v, std::size_t c, std::size_t h, std::size_t w);
  explicit LightField(Tensor data);

  std::size_t angular_u() const { return shape_[0]; }
  std::size_t angular_v() const { return shape_[1]; }
  std::size_t channels() const { return shape_[2]; }
  std::size_t height() const { return shape_[3]; }
  std::size_t width() const { return shape_[4]; }
  // Square angular extent; throws DimensionError when U != V.
  std::size_t angular() const;
  std::size_t view_size() const { return shape_[2] * shape_[3] * shape_[4]; }

  const Tensor& tensor() const { return data_; }
  Tensor& tensor() { return data_; }
  const Shape& shape() const { return data_.shape(); }

  double at(std::size_t u, std::size_t v, std::size_t c, std::size_t h, std::size_t w) const;
  void set(std::size_t u, std::size_t v, std::size_t c, std::size_t h, std::size_t w, double value);

  // Contiguous [C x H x W] block of one view.
  std::span<const double> view(std::size_t u, std::size_t v) const;
  std::span<double> mutable_view(std::size_t u, std::size_t v);
  Tensor view_tensor(std::size_t u, std::size_t v) const;
  void set_view(std::size_t u, std::size_t v, const Tensor& image);

 private:
  std::size_t offset(std::size_t u, std::size_t v, std::size_t c, std::size_t h, std::size_t w) const;

  Tensor data_;
  Shape shape_{0, 0, 0, 0, 0};
};

// BT.601 full-range colour conversion; both require C == 3.
LightField rgb_to_ycbcr(const LightField& lf);
LightField ycbcr_to_rgb(const LightField& lf);

LightField extract_channel(const LightField& lf, std::size_t channel);
// Replaces one channel of `lf` with the single-channel field `plane`.
LightField replace_channel(const LightField& lf, std::size_t channel, const LightField& plane);

// Per-view Sobel gradient magnitude of a single-channel field, scaled by
// 1/8 with replicate padding. A ramp of slope s yields |s| in the interior.
LightField gradient_field(const LightField& lf);

// Keys cubic convolution (a = -0.5), half-pixel centres, replicate
// boundary. `image` is [C x H x W]; both output extents must be integral.
Tensor bicubic_resize(const Tensor& image, double factor);
// Applies bicubic_resize to every view.
LightField resize_views(const LightField& lf, double factor);
double keys_kernel(double x);

struct PatchPair {
  LightField lr;
  LightField hr;
};

// Aligned spatial crops of every view. `patch` and `stride` are in HR pixels
// and must be multiples of `factor`.
std::vector<PatchPair> crop_patches(const LightField& hr, const LightField& lr, std::size_t factor,
                                    std::size_t patch, std::size_t stride);

// Element of the dihedral group acting jointly on (h, w) and (u, v):
// rotate by quarter turns first, then mirror.
struct Augmentation {
  int quarter_turns = 0;  // counter-clockwise, 0..3
  bool flip_horizontal = false;
  bool flip_vertical = false;

  bool is_identity() const { return quarter_turns % 4 == 0 && !flip_horizontal && !flip_vertical; }
};

LightField apply_augmentation(const LightField& lf, const Augmentation& t);
LightField apply_inverse_augmentation(const LightField& lf, const Augmentation& t);
PatchPair apply_augmentation(const PatchPair& pair, const Augmentation& t);
Augmentation random_augmentation(std::mt19937_64& rng);
// Random transform drawn from `seed`, applied to both members of the pair.
PatchPair augment(const PatchPair& pair, std::uint64_t seed);

}  // namespace dpt
