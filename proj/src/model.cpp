#include "dpt/model.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dpt/errors.hpp"
#include "dpt/rng.hpp"

namespace dpt {

namespace {

constexpr std::array<std::pair<Ablation, std::string_view>, 6> kAblationNames{{
    {Ablation::kFull, "full"},
    {Ablation::kContentOnly, "content_only"},
    {Ablation::kSumFusion, "sum_fusion"},
    {Ablation::kImageFusion, "image_fusion"},
    {Ablation::kConvBranches, "conv_branches"},
    {Ablation::kVanillaAttention, "vanilla_attention"},
}};

std::size_t parse_size(const std::map<std::string, std::string>& kv, const std::string& key, std::size_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a non-negative integer: " + it->second);
  }
}

// Shape [A x A x C x H x W] field <-> [A*A x C x H x W] batch of views.
Tensor as_views(const Tensor& field) {
  const Shape& s = field.shape();
  return reshape(field, {s[0] * s[1], s[2], s[3], s[4]});
}

Tensor as_field(const Tensor& views, std::size_t a_u, std::size_t a_v) {
  const Shape& s = views.shape();
  return reshape(views, {a_u, a_v, s[1], s[2], s[3]});
}

void require_field(const Tensor& t, const char* what) {
  if (t.rank() != 5) throw DimensionError(std::string(what) + ": expected [A x A x C x H x W], got " + shape_str(t.shape()));
}

Tensor row_sequence(const Tensor& field, std::size_t i) {
  const Shape& s = field.shape();
  return reshape(slice(field, 0, i, 1), {s[1], s[2], s[3], s[4]});
}

Tensor column_sequence(const Tensor& field, std::size_t j) {
  const Shape& s = field.shape();
  return reshape(slice(field, 1, j, 1), {s[0], s[2], s[3], s[4]});
}

template <typename SeqFn>
Tensor over_rows(const Tensor& field, SeqFn fn) {
  const Shape& s = field.shape();
  std::vector<Tensor> rows;
  rows.reserve(s[0]);
  for (std::size_t i = 0; i < s[0]; ++i) rows.push_back(reshape(fn(i), {1, s[1], s[2], s[3], s[4]}));
  return concat(rows, 0);
}

template <typename SeqFn>
Tensor over_columns(const Tensor& field, SeqFn fn) {
  const Shape& s = field.shape();
  std::vector<Tensor> cols;
  cols.reserve(s[1]);
  for (std::size_t j = 0; j < s[1]; ++j) cols.push_back(reshape(fn(j), {s[0], 1, s[2], s[3], s[4]}));
  return concat(cols, 1);
}

}  // namespace

std::string_view ablation_name(Ablation a) {
  for (const auto& [value, name] : kAblationNames)
    if (value == a) return name;
  return "unknown";
}

Ablation parse_ablation(std::string_view name) {
  for (const auto& [value, n] : kAblationNames)
    if (n == name) return value;
  throw ConfigError("unknown ablation variant '" + std::string(name) + "'");
}

const std::vector<Ablation>& all_ablations() {
  static const std::vector<Ablation> all{Ablation::kFull,         Ablation::kContentOnly,
                                         Ablation::kSumFusion,    Ablation::kImageFusion,
                                         Ablation::kConvBranches, Ablation::kVanillaAttention};
  return all;
}

void DptConfig::validate() const {
  if (blocks < 1) throw ConfigError("K (attention blocks) must be at least 1");
  if (angular < 1) throw ConfigError("angular extent must be at least 1");
  if (scale != 2 && scale != 4) throw ConfigError("scale factor must be 2 or 4, got " + std::to_string(scale));
  if (channels < 1) throw ConfigError("embedding channels must be positive");
  if (recon_channels < 4 || recon_channels % 4 != 0) {
    throw ConfigError("reconstruction width must be a positive multiple of 4, got " + std::to_string(recon_channels));
  }
  if (salsa.patch.h == 0 || salsa.patch.w == 0 || salsa.stride.h == 0 || salsa.stride.w == 0) {
    throw ConfigError("attention patch and stride must be positive");
  }
}

SalsaConfig DptConfig::salsa_for(std::size_t c) const {
  SalsaConfig s = salsa;
  s.channels = c;
  s.tokenizer = ablation == Ablation::kVanillaAttention ? Tokenizer::kLinear : Tokenizer::kConv;
  return s;
}

std::map<std::string, std::string> DptConfig::to_map() const {
  return {
      {"angular", std::to_string(angular)},
      {"channels", std::to_string(channels)},
      {"blocks", std::to_string(blocks)},
      {"scale", std::to_string(scale)},
      {"imdb_blocks", std::to_string(imdb_blocks)},
      {"recon_channels", std::to_string(recon_channels)},
      {"ablation", std::string(ablation_name(ablation))},
      {"patch_h", std::to_string(salsa.patch.h)},
      {"patch_w", std::to_string(salsa.patch.w)},
      {"stride_h", std::to_string(salsa.stride.h)},
      {"stride_w", std::to_string(salsa.stride.w)},
      {"attention_scale", salsa.attention_scale == AttentionScale::kScaled ? "scaled" : "unscaled"},
      {"qkv_bias", salsa.qkv_bias ? "1" : "0"},
  };
}

DptConfig DptConfig::from_map(const std::map<std::string, std::string>& kv) {
  DptConfig c;
  c.angular = parse_size(kv, "angular", c.angular);
  c.channels = parse_size(kv, "channels", c.channels);
  c.blocks = parse_size(kv, "blocks", c.blocks);
  c.scale = parse_size(kv, "scale", c.scale);
  c.imdb_blocks = parse_size(kv, "imdb_blocks", c.imdb_blocks);
  c.recon_channels = parse_size(kv, "recon_channels", c.recon_channels);
  if (auto it = kv.find("ablation"); it != kv.end()) c.ablation = parse_ablation(it->second);
  c.salsa.patch.h = parse_size(kv, "patch_h", c.salsa.patch.h);
  c.salsa.patch.w = parse_size(kv, "patch_w", c.salsa.patch.w);
  c.salsa.stride.h = parse_size(kv, "stride_h", c.salsa.stride.h);
  c.salsa.stride.w = parse_size(kv, "stride_w", c.salsa.stride.w);
  if (auto it = kv.find("attention_scale"); it != kv.end()) {
    if (it->second == "scaled") {
      c.salsa.attention_scale = AttentionScale::kScaled;
    } else if (it->second == "unscaled") {
      c.salsa.attention_scale = AttentionScale::kUnscaled;
    } else {
      throw ConfigError("attention_scale must be 'scaled' or 'unscaled', got " + it->second);
    }
  }
  c.salsa.qkv_bias = parse_size(kv, "qkv_bias", c.salsa.qkv_bias ? 1 : 0) != 0;
  c.validate();
  return c;
}

std::size_t conv_branch_hidden(std::size_t channels) {
  // One spatial-angular block holds two layers of four C x C pointwise convs
  // with biases; a residual block with hidden width m holds 18*C*m + m + C.
  const double target = 8.0 * static_cast<double>(channels * channels + channels);
  std::size_t best = 1;
  double best_gap = std::numeric_limits<double>::max();
  for (std::size_t m = 1; m <= 4 * channels; ++m) {
    const double count = static_cast<double>(18 * channels * m + m + channels);
    if (std::abs(count - target) < best_gap) {
      best_gap = std::abs(count - target);
      best = m;
    }
  }
  return best;
}

Raspp::Raspp(std::size_t channels, std::mt19937_64& rng)
    : branches{Conv2d(channels, channels, 3, rng, 1), Conv2d(channels, channels, 3, rng, 2),
               Conv2d(channels, channels, 3, rng, 4)} {}

Tensor Raspp::operator()(const Tensor& x) const {
  Tensor out = x;
  for (const Conv2d& b : branches) out = add(out, leaky_relu(b(x)));
  return out;
}

void Raspp::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < 3; ++i) branches[i].collect(prefix + ".dil" + std::to_string(1u << i), out);
}

FeatureExtractor::FeatureExtractor(std::size_t channels, std::mt19937_64& rng)
    : head_(1, channels, 3, rng),
      rb1_(channels, channels, rng),
      rb2_(channels, channels, rng),
      raspp1_(channels, rng),
      raspp2_(channels, rng),
      align_(channels, channels, 3, rng) {}

Tensor FeatureExtractor::operator()(const Tensor& views) const {
  if (views.rank() != 4 || views.dim(1) != 1) {
    throw ConfigError("feature extractor expects single-channel views, got " + shape_str(views.shape()));
  }
  Tensor x = leaky_relu(head_(views));
  x = raspp1_(rb1_(x));
  x = raspp2_(rb2_(x));
  return align_(x);
}

void FeatureExtractor::collect(const std::string& prefix, ParamList& out) const {
  head_.collect(prefix + ".head", out);
  rb1_.collect(prefix + ".rb1", out);
  raspp1_.collect(prefix + ".raspp1", out);
  rb2_.collect(prefix + ".rb2", out);
  raspp2_.collect(prefix + ".raspp2", out);
  align_.collect(prefix + ".align", out);
}

Tensor horizontal_stage(const Tensor& field, const SalsaLayer& layer) {
  require_field(field, "horizontal stage");
  return over_rows(field, [&](std::size_t i) { return layer.forward(row_sequence(field, i)); });
}

Tensor vertical_stage(const Tensor& field, const SalsaLayer& layer) {
  require_field(field, "vertical stage");
  return over_columns(field, [&](std::size_t j) { return layer.forward(column_sequence(field, j)); });
}

Tensor horizontal_cross_stage(const Tensor& content, const Tensor& detail, const SalsaLayer& layer) {
  require_field(content, "horizontal cross stage");
  if (content.shape() != detail.shape()) throw DimensionError("cross stage: content and detail shapes differ");
  return over_rows(content, [&](std::size_t i) {
    return layer.cross_forward(row_sequence(content, i), row_sequence(detail, i));
  });
}

Tensor vertical_cross_stage(const Tensor& content, const Tensor& detail, const SalsaLayer& layer) {
  require_field(content, "vertical cross stage");
  if (content.shape() != detail.shape()) throw DimensionError("cross stage: content and detail shapes differ");
  return over_columns(content, [&](std::size_t j) {
    return layer.cross_forward(column_sequence(content, j), column_sequence(detail, j));
  });
}

UnimodalTransformer::UnimodalTransformer(std::size_t blocks, const SalsaConfig& config, std::mt19937_64& rng) {
  blocks_.reserve(blocks);
  for (std::size_t k = 0; k < blocks; ++k) blocks_.push_back({SalsaLayer(config, rng), SalsaLayer(config, rng)});
}

std::vector<Tensor> UnimodalTransformer::operator()(const Tensor& field) const {
  std::vector<Tensor> outputs;
  Tensor x = field;
  for (const auto& block : blocks_) {
    x = vertical_stage(horizontal_stage(x, block.horizontal), block.vertical);
    outputs.push_back(x);
  }
  return outputs;
}

void UnimodalTransformer::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    blocks_[k].horizontal.collect(prefix + ".block" + std::to_string(k) + ".horizontal", out);
    blocks_[k].vertical.collect(prefix + ".block" + std::to_string(k) + ".vertical", out);
  }
}

ConvBranch::ConvBranch(std::size_t blocks, std::size_t channels, std::mt19937_64& rng) {
  const std::size_t hidden = conv_branch_hidden(channels);
  for (std::size_t k = 0; k < blocks; ++k) blocks_.emplace_back(channels, hidden, rng);
}

std::vector<Tensor> ConvBranch::operator()(const Tensor& field) const {
  require_field(field, "conv branch");
  std::vector<Tensor> outputs;
  Tensor x = as_views(field);
  for (const auto& block : blocks_) {
    x = block(x);
    outputs.push_back(as_field(x, field.dim(0), field.dim(1)));
  }
  return outputs;
}

void ConvBranch::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t k = 0; k < blocks_.size(); ++k) blocks_[k].collect(prefix + ".block" + std::to_string(k), out);
}

Tensor build_fusion_inputs(const Tensor& features, const std::vector<Tensor>& block_outputs) {
  if (block_outputs.empty()) throw ConfigError("fusion inputs need at least one block output (K >= 1)");
  require_field(features, "fusion inputs");
  std::vector<Tensor> parts{features};
  for (const Tensor& t : block_outputs) {
    if (t.shape() != features.shape()) {
      throw DimensionError("fusion inputs: block output " + shape_str(t.shape()) + " vs features " +
                           shape_str(features.shape()));
    }
    parts.push_back(t);
  }
  return concat(parts, 2);
}

FusionTransformer::FusionTransformer(FusionMode mode, const SalsaConfig& config, std::mt19937_64& rng)
    : mode_(mode) {
  if (mode == FusionMode::kCrossAttention || mode == FusionMode::kImage) {
    block_ = {SalsaLayer(config, rng), SalsaLayer(config, rng)};
  }
}

Tensor FusionTransformer::operator()(const Tensor& content, const Tensor& detail) const {
  require_field(content, "fusion");
  switch (mode_) {
    case FusionMode::kContentOnly:
      return content;
    case FusionMode::kSum:
      return add(content, detail);
    case FusionMode::kCrossAttention: {
      if (content.shape() != detail.shape()) throw DimensionError("fusion: content and detail shapes differ");
      Tensor z = horizontal_cross_stage(content, detail, block_.horizontal);
      return vertical_cross_stage(z, detail, block_.vertical);
    }
    case FusionMode::kImage: {
      if (content.shape() != detail.shape()) throw DimensionError("fusion: content and detail shapes differ");
      const Tensor cv = as_views(content), dv = as_views(detail);
      std::vector<Tensor> views;
      for (std::size_t s = 0; s < cv.dim(0); ++s) {
        const Tensor c = slice(cv, 0, s, 1), d = slice(dv, 0, s, 1);
        views.push_back(block_.vertical.cross_forward(block_.horizontal.cross_forward(c, d), d));
      }
      return as_field(concat(views, 0), content.dim(0), content.dim(1));
    }
  }
  throw ConfigError("unknown fusion mode");
}

void FusionTransformer::collect(const std::string& prefix, ParamList& out) const {
  if (mode_ == FusionMode::kCrossAttention || mode_ == FusionMode::kImage) {
    block_.horizontal.collect(prefix + ".horizontal", out);
    block_.vertical.collect(prefix + ".vertical", out);
  }
}

Imdb::Imdb(std::size_t channels, std::mt19937_64& rng) : quarter_(channels / 4) {
  if (channels % 4 != 0) throw ConfigError("IMDB width must be divisible by 4");
  const std::size_t rest = channels - quarter_;
  c1_ = Conv2d(channels, channels, 3, rng);
  c2_ = Conv2d(rest, channels, 3, rng);
  c3_ = Conv2d(rest, channels, 3, rng);
  c4_ = Conv2d(rest, quarter_, 3, rng);
  fuse_ = Conv2d(4 * quarter_, channels, 1, rng);
}

Tensor Imdb::operator()(const Tensor& x) const {
  const std::size_t channels = 4 * quarter_, rest = channels - quarter_;
  std::vector<Tensor> distilled;
  Tensor remaining = x;
  for (const Conv2d* conv : {&c1_, &c2_, &c3_}) {
    Tensor y = leaky_relu((*conv)(remaining));
    distilled.push_back(slice(y, 1, 0, quarter_));
    remaining = slice(y, 1, quarter_, rest);
  }
  distilled.push_back(c4_(remaining));
  return add(fuse_(concat(distilled, 1)), x);
}

void Imdb::collect(const std::string& prefix, ParamList& out) const {
  c1_.collect(prefix + ".c1", out);
  c2_.collect(prefix + ".c2", out);
  c3_.collect(prefix + ".c3", out);
  c4_.collect(prefix + ".c4", out);
  fuse_.collect(prefix + ".fuse", out);
}

Reconstructor::Reconstructor(std::size_t in_channels, std::size_t width, std::size_t n_imdb, std::size_t factor,
                             std::mt19937_64& rng)
    : factor_(factor), entry_(in_channels, width, 1, rng) {
  for (std::size_t i = 0; i < n_imdb; ++i) imdbs_.emplace_back(width, rng);
  upsample_ = Conv2d(width, factor * factor, 1, rng);
  out_ = Conv2d(1, 1, 1, rng);
  out_.zero();
}

Tensor Reconstructor::operator()(const Tensor& fused, const LightField& lr) const {
  require_field(fused, "reconstruction");
  const std::size_t au = fused.dim(0), av = fused.dim(1);
  Tensor x = leaky_relu(entry_(as_views(fused)));
  for (const Imdb& block : imdbs_) x = block(x);
  x = out_(pixel_shuffle(upsample_(x), factor_));
  const LightField skip = resize_views(lr, static_cast<double>(factor_));
  x = add_constant(x, skip.tensor().data());
  return as_field(x, au, av);
}

void Reconstructor::collect(const std::string& prefix, ParamList& out) const {
  entry_.collect(prefix + ".entry", out);
  for (std::size_t i = 0; i < imdbs_.size(); ++i) imdbs_[i].collect(prefix + ".imdb" + std::to_string(i), out);
  upsample_.collect(prefix + ".upsample", out);
  out_.collect(prefix + ".out", out);
}

DptModel::DptModel(const DptConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng = named_stream(seed, "init");
  const std::size_t c = config_.channels;
  const SalsaConfig unimodal = config_.salsa_for(c);
  const SalsaConfig fused = config_.salsa_for(config_.fusion_channels());
  const bool conv = config_.ablation == Ablation::kConvBranches;

  content_extractor_ = FeatureExtractor(c, rng);
  if (conv) {
    content_conv_ = ConvBranch(config_.blocks, c, rng);
  } else {
    content_transformer_ = UnimodalTransformer(config_.blocks, unimodal, rng);
  }
  if (has_gradient_branch()) {
    gradient_extractor_ = FeatureExtractor(c, rng);
    if (conv) {
      gradient_conv_ = ConvBranch(config_.blocks, c, rng);
    } else {
      gradient_transformer_ = UnimodalTransformer(config_.blocks, unimodal, rng);
    }
  }
  FusionMode mode = FusionMode::kCrossAttention;
  if (config_.ablation == Ablation::kContentOnly) mode = FusionMode::kContentOnly;
  if (config_.ablation == Ablation::kSumFusion) mode = FusionMode::kSum;
  if (config_.ablation == Ablation::kImageFusion) mode = FusionMode::kImage;
  fusion_ = FusionTransformer(mode, fused, rng);
  reconstructor_ = Reconstructor(config_.fusion_channels(), config_.recon_channels, config_.imdb_blocks,
                                 config_.scale, rng);
}

Tensor DptModel::extract_features(const LightField& input, Branch which) const {
  if (input.channels() != 1) {
    throw ConfigError("model input must be single-channel (Y), got " + std::to_string(input.channels()) + " channels");
  }
  const FeatureExtractor& ex = which == Branch::kContent ? content_extractor_ : gradient_extractor_;
  const std::size_t au = input.angular_u(), av = input.angular_v();
  const Tensor views = reshape(input.tensor().detach(), {au * av, 1, input.height(), input.width()});
  return as_field(ex(views), au, av);
}

std::vector<Tensor> DptModel::run_branch(const Tensor& features, Branch which) const {
  if (config_.ablation == Ablation::kConvBranches) {
    return which == Branch::kContent ? content_conv_(features) : gradient_conv_(features);
  }
  return which == Branch::kContent ? content_transformer_(features) : gradient_transformer_(features);
}

Tensor DptModel::forward(const LightField& lr) const {
  lr.angular();
  const Tensor fc = extract_features(lr, Branch::kContent);
  const Tensor hc = build_fusion_inputs(fc, run_branch(fc, Branch::kContent));
  Tensor z = hc;
  if (has_gradient_branch()) {
    const Tensor fg = extract_features(gradient_field(lr), Branch::kGradient);
    const Tensor hg = build_fusion_inputs(fg, run_branch(fg, Branch::kGradient));
    z = fusion_(hc, hg);
  }
  return reconstructor_(z, lr);
}

LightField DptModel::super_resolve(const LightField& lr) const {
  NoGradGuard guard;
  return LightField(forward(lr).detach());
}

ParamList DptModel::parameters() const {
  ParamList out;
  content_extractor_.collect("content.extractor", out);
  if (config_.ablation == Ablation::kConvBranches) {
    content_conv_.collect("content.branch", out);
  } else {
    content_transformer_.collect("content.transformer", out);
  }
  if (has_gradient_branch()) {
    gradient_extractor_.collect("gradient.extractor", out);
    if (config_.ablation == Ablation::kConvBranches) {
      gradient_conv_.collect("gradient.branch", out);
    } else {
      gradient_transformer_.collect("gradient.transformer", out);
    }
  }
  fusion_.collect("fusion", out);
  reconstructor_.collect("reconstruction", out);
  return out;
}

std::size_t DptModel::parameter_count() const { return count_elements(parameters()); }

unsigned long long estimate_macs(const DptModel& model, std::size_t angular, std::size_t height, std::size_t width) {
  NoGradGuard no_grad;
  MacCounter counter;
  model.forward(LightField(angular, angular, 1, height, width));
  return counter.total();
}

}  // namespace dpt
