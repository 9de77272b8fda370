#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dpt/tensor.hpp"

namespace dpt {

struct Extent2 {
  std::size_t h = 1;
  std::size_t w = 1;
  bool operator==(const Extent2&) const = default;
};

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t dilation = 1;
};

// [n x k] * [k x m]
Tensor matmul(const Tensor& a, const Tensor& b);
// [n x k] * [m x k]^T, without materialising the transpose
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Row-wise softmax of a 2-D tensor, stabilised by the row maximum.
Tensor softmax_rows(const Tensor& x);

// Cross-correlation over [B x Cin x H x W] with weights [Cout x Cin x kh x kw].
// `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const Conv2dOptions& opt = {});
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, const Conv2dOptions& opt);

// Patch extraction [B x C x H x W] -> [n x C*ph*pw], rows ordered by
// (batch, patch row, patch column). The patch grid must tile exactly.
Tensor unfold(const Tensor& x, Extent2 patch, Extent2 stride);
// Inverse of unfold: overlapping contributions are averaged by their
// per-pixel patch count, so fold(unfold(x)) == x.
Tensor fold(const Tensor& tokens, const Shape& out_shape, Extent2 patch, Extent2 stride);
// Number of patches along one axis; throws ConfigError if the grid does not tile.
std::size_t patch_grid_extent(std::size_t extent, std::size_t patch, std::size_t stride);

// [B x C*f*f x H x W] -> [B x C x f*H x f*W]
Tensor pixel_shuffle(const Tensor& x, std::size_t factor);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
// Adds a constant (non-differentiated) array of the same shape.
Tensor add_constant(const Tensor& x, std::span<const double> c);
// Adds bias[j] to every row of a 2-D tensor.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.1);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean absolute difference; the subgradient of |0| is taken as 0.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

}  // namespace dpt
