#include "dpt/salsa.hpp"

#include <cmath>
#include <string>

#include "dpt/errors.hpp"

namespace dpt {

std::size_t SalsaConfig::token_count(std::size_t views, std::size_t h, std::size_t w) const {
  return views * patch_grid_extent(h, patch.h, stride.h) * patch_grid_extent(w, patch.w, stride.w);
}

namespace {

void check_sequence(const Tensor& seq, const SalsaConfig& config, const char* what) {
  if (seq.rank() != 4) throw DimensionError(std::string(what) + ": expected [A x C x H x W], got " + shape_str(seq.shape()));
  if (seq.dim(1) != config.channels) {
    throw DimensionError(std::string(what) + ": sequence has " + std::to_string(seq.dim(1)) +
                         " channels, layer expects " + std::to_string(config.channels));
  }
  config.token_count(seq.dim(0), seq.dim(2), seq.dim(3));
}

Projection make_projection(const SalsaConfig& config, std::mt19937_64& rng, bool with_bias) {
  Projection p;
  if (config.tokenizer == Tokenizer::kConv) {
    p.conv = Conv2d(config.channels, config.channels, 1, rng, 1, with_bias);
  } else {
    p.linear = Linear(config.token_dim(), config.token_dim(), rng, with_bias);
  }
  return p;
}

void zero_projection(Projection& p) {
  if (p.conv.weight.defined()) p.conv.zero();
  if (p.linear.weight.defined()) p.linear.zero();
}

}  // namespace

Tensor tokenize(const Tensor& sequence, const Projection& proj, const SalsaConfig& config) {
  check_sequence(sequence, config, "tokenize");
  if (config.tokenizer == Tokenizer::kConv) return unfold(proj.conv(sequence), config.patch, config.stride);
  return proj.linear(unfold(sequence, config.patch, config.stride));
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, AttentionScale scale) {
  if (q.rank() != 2 || k.shape() != v.shape() || q.dim(1) != k.dim(1)) {
    throw DimensionError("attend: incompatible Q " + shape_str(q.shape()) + ", K " + shape_str(k.shape()) +
                         ", V " + shape_str(v.shape()));
  }
  Tensor logits = matmul_nt(q, k);
  if (scale == AttentionScale::kScaled) logits = dpt::scale(logits, 1.0 / std::sqrt(static_cast<double>(q.dim(1))));
  return matmul(softmax_rows(logits), v);
}

Tensor detokenize(const Tensor& attended, const Tensor& residual, const Projection& out_proj,
                  const SalsaConfig& config) {
  check_sequence(residual, config, "detokenize");
  Tensor mapped;
  if (config.tokenizer == Tokenizer::kConv) {
    mapped = out_proj.conv(fold(attended, residual.shape(), config.patch, config.stride));
  } else {
    mapped = fold(out_proj.linear(attended), residual.shape(), config.patch, config.stride);
  }
  return add(mapped, residual);
}

SalsaLayer::SalsaLayer(const SalsaConfig& config, std::mt19937_64& rng) : config_(config) {
  q_ = make_projection(config, rng, config.qkv_bias);
  k_ = make_projection(config, rng, config.qkv_bias);
  v_ = make_projection(config, rng, config.qkv_bias);
  p_ = make_projection(config, rng, true);
  zero_projection(p_);
}

Tensor SalsaLayer::forward(const Tensor& sequence) const { return cross_forward(sequence, sequence); }

Tensor SalsaLayer::cross_forward(const Tensor& content, const Tensor& detail) const {
  if (content.shape() != detail.shape()) {
    throw DimensionError("cross attention: content " + shape_str(content.shape()) + " vs detail " +
                         shape_str(detail.shape()));
  }
  Tensor q = tokenize(content, q_, config_);
  Tensor k = tokenize(detail, k_, config_);
  Tensor v = tokenize(detail, v_, config_);
  return detokenize(attend(q, k, v, config_.attention_scale), content, p_, config_);
}

void SalsaLayer::collect(const std::string& prefix, ParamList& out) const {
  const std::pair<const char*, const Projection*> parts[] = {{"f_q", &q_}, {"f_k", &k_}, {"f_v", &v_}, {"f_p", &p_}};
  for (const auto& [name, proj] : parts) {
    if (config_.tokenizer == Tokenizer::kConv) {
      proj->conv.collect(prefix + "." + name, out);
    } else {
      proj->linear.collect(prefix + "." + name, out);
    }
  }
}

}  // namespace dpt
