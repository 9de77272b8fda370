#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "dpt/layers.hpp"
#include "dpt/ops.hpp"

namespace dpt {

enum class AttentionScale {
  kScaled,        // softmax(Q K^T / sqrt(d)) V
  kUnscaled,  // softmax(Q K^T) V
};

enum class Tokenizer {
  kConv,    // 1x1 convolution per view, then patch extraction
  kLinear,  // patch extraction, then a d x d linear map per token (ViT-style)
};

struct SalsaConfig {
  std::size_t channels = 16;
  Extent2 patch{4, 4};
  Extent2 stride{2, 2};
  AttentionScale attention_scale = AttentionScale::kScaled;
  Tokenizer tokenizer = Tokenizer::kConv;
  bool qkv_bias = true;

  std::size_t token_dim() const { return channels * patch.h * patch.w; }
  // Tokens produced for a sequence of `views` maps of size h x w; throws
  // ConfigError when the patch grid does not tile.
  std::size_t token_count(std::size_t views, std::size_t h, std::size_t w) const;
};

// Query/key/value/output projection. Holds a 1x1 convolution for the
// convolutional tokenizer or a token-space linear map for the ViT variant.
struct Projection {
  Conv2d conv;
  Linear linear;
};

// Produces tokens [n x d] from one angular sequence [A x C x H x W]. Every
// view contributes its patches, so n spans the angular axis.
Tensor tokenize(const Tensor& sequence, const Projection& proj, const SalsaConfig& config);

// softmax_rows(Q K^T * s) V with s = 1/sqrt(d) or 1.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, AttentionScale scale);

// f_P(fold(X')) + residual, shaped like the residual.
Tensor detokenize(const Tensor& attended, const Tensor& residual, const Projection& out_proj,
                  const SalsaConfig& config);

// Spatial-angular locally-enhanced self-attention over one angular sequence.
// The output projection starts at zero so a fresh layer is the identity.
class SalsaLayer {
 public:
  SalsaLayer() = default;
  SalsaLayer(const SalsaConfig& config, std::mt19937_64& rng);

  // [A x C x H x W] -> same shape
  Tensor forward(const Tensor& sequence) const;
  // Queries from `content`, keys and values from `detail`; the residual
  // connects to `content`.
  Tensor cross_forward(const Tensor& content, const Tensor& detail) const;

  const SalsaConfig& config() const { return config_; }
  Projection& query() { return q_; }
  Projection& key() { return k_; }
  Projection& value() { return v_; }
  Projection& output() { return p_; }
  const Projection& output() const { return p_; }

  void collect(const std::string& prefix, ParamList& out) const;

 private:
  SalsaConfig config_;
  Projection q_, k_, v_, p_;
};

}  // namespace dpt
