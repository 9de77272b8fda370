#include "dpt/layers.hpp"

#include <cmath>

namespace dpt {

namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(numel(shape));
  for (double& v : data) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(data), true);
}

void fill_zero(Tensor& t) {
  if (!t.defined()) return;
  for (double& v : t.mutable_data()) v = 0.0;
}

}  // namespace

std::size_t count_elements(const ParamList& params) {
  std::size_t total = 0;
  for (const auto& [name, t] : params) total += t.numel();
  return total;
}

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng,
               std::size_t dilation, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
  weight = uniform({out, in, kernel, kernel}, bound, rng);
  if (with_bias) bias = uniform({out}, bound, rng);
  options.dilation = dilation;
  options.pad = dilation * (kernel - 1) / 2;
}

Tensor Conv2d::operator()(const Tensor& x) const { return conv2d(x, weight, bias, options); }

void Conv2d::zero() {
  fill_zero(weight);
  fill_zero(bias);
}

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = uniform({in, out}, bound, rng);
  if (with_bias) bias = uniform({out}, bound, rng);
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_row_bias(y, bias) : y;
}

void Linear::zero() {
  fill_zero(weight);
  fill_zero(bias);
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

ResidualBlock::ResidualBlock(std::size_t channels, std::size_t hidden, std::mt19937_64& rng)
    : first(channels, hidden, 3, rng), second(hidden, channels, 3, rng) {}

Tensor ResidualBlock::operator()(const Tensor& x) const { return add(x, second(leaky_relu(first(x)))); }

void ResidualBlock::collect(const std::string& prefix, ParamList& out) const {
  first.collect(prefix + ".conv1", out);
  second.collect(prefix + ".conv2", out);
}

}  // namespace dpt
