#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dpt/ops.hpp"
#include "dpt/tensor.hpp"

namespace dpt {

using ParamList = std::vector<std::pair<std::string, Tensor>>;

std::size_t count_elements(const ParamList& params);

// Weight [Cout x Cin x k x k] plus optional bias. Padding keeps the spatial
// extent for odd kernels: pad = dilation * (k - 1) / 2.
struct Conv2d {
  Tensor weight;
  Tensor bias;  // undefined when disabled
  Conv2dOptions options;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng,
         std::size_t dilation = 1, bool with_bias = true);

  Tensor operator()(const Tensor& x) const;
  void zero();
  void collect(const std::string& prefix, ParamList& out) const;
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
};

// Row-vector projection x * W + b with W [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool with_bias = true);

  Tensor operator()(const Tensor& x) const;
  void zero();
  void collect(const std::string& prefix, ParamList& out) const;
};

// Two 3x3 convolutions with a leaky-ReLU between them and an identity skip.
struct ResidualBlock {
  Conv2d first;
  Conv2d second;

  ResidualBlock() = default;
  ResidualBlock(std::size_t channels, std::size_t hidden, std::mt19937_64& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace dpt
