#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dpt/layers.hpp"
#include "dpt/lightfield.hpp"
#include "dpt/salsa.hpp"

namespace dpt {

// Architecture variants from the ablation study.
enum class Ablation {
  kFull,
  kContentOnly,       // no gradient branch, no fusion
  kSumFusion,         // Z = H_cont + H_grad
  kImageFusion,       // cross-attention per single view
  kConvBranches,      // residual blocks instead of the unimodal transformers
  kVanillaAttention,  // linear (ViT-style) tokenizer in every attention layer
};

std::string_view ablation_name(Ablation a);
Ablation parse_ablation(std::string_view name);
const std::vector<Ablation>& all_ablations();

struct DptConfig {
  std::size_t angular = 3;          // A
  std::size_t channels = 16;        // C
  std::size_t blocks = 2;           // K, spatial-angular blocks per unimodal transformer
  std::size_t scale = 2;            // upsampling factor, 2 or 4
  std::size_t imdb_blocks = 2;
  std::size_t recon_channels = 32;  // width inside the reconstruction head
  Ablation ablation = Ablation::kFull;
  SalsaConfig salsa;                // geometry and attention options; channels are set per use

  void validate() const;
  std::size_t fusion_channels() const { return (blocks + 1) * channels; }
  SalsaConfig salsa_for(std::size_t channels) const;

  std::map<std::string, std::string> to_map() const;
  static DptConfig from_map(const std::map<std::string, std::string>& kv);
  bool operator==(const DptConfig& other) const { return to_map() == other.to_map(); }
};

// Hidden width of the residual block replacing one spatial-angular block in
// the conv_branches variant, chosen to match its parameter count.
std::size_t conv_branch_hidden(std::size_t channels);

// Residual ASPP: x + sum over dilations {1,2,4} of lrelu(conv3x3_d(x)).
struct Raspp {
  Conv2d branches[3];

  Raspp() = default;
  Raspp(std::size_t channels, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Per-view convolutional feature extractor: [A*A x 1 x H x W] -> [A*A x C x H x W].
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(std::size_t channels, std::mt19937_64& rng);
  Tensor operator()(const Tensor& views) const;
  void collect(const std::string& prefix, ParamList& out) const;

 private:
  Conv2d head_;
  ResidualBlock rb1_, rb2_;
  Raspp raspp1_, raspp2_;
  Conv2d align_;
};

struct SpatialAngularBlock {
  SalsaLayer horizontal;  // acts on each row sequence
  SalsaLayer vertical;    // acts on each column sequence
};

// Row i of a [A x A x C x H x W] field is the sequence of views (i, 0..A-1);
// column j is (0..A-1, j). Each sequence is processed independently.
Tensor horizontal_stage(const Tensor& field, const SalsaLayer& layer);
Tensor vertical_stage(const Tensor& field, const SalsaLayer& layer);
Tensor horizontal_cross_stage(const Tensor& content, const Tensor& detail, const SalsaLayer& layer);
Tensor vertical_cross_stage(const Tensor& content, const Tensor& detail, const SalsaLayer& layer);

// K blocks of horizontal then vertical SA-LSA. Returns every block output.
class UnimodalTransformer {
 public:
  UnimodalTransformer() = default;
  UnimodalTransformer(std::size_t blocks, const SalsaConfig& config, std::mt19937_64& rng);
  std::vector<Tensor> operator()(const Tensor& field) const;
  void collect(const std::string& prefix, ParamList& out) const;
  std::vector<SpatialAngularBlock>& blocks() { return blocks_; }
  const std::vector<SpatialAngularBlock>& blocks() const { return blocks_; }

 private:
  std::vector<SpatialAngularBlock> blocks_;
};

// Stand-in for UnimodalTransformer with the same interface, one residual
// block per spatial-angular block, applied per view.
class ConvBranch {
 public:
  ConvBranch() = default;
  ConvBranch(std::size_t blocks, std::size_t channels, std::mt19937_64& rng);
  std::vector<Tensor> operator()(const Tensor& field) const;
  void collect(const std::string& prefix, ParamList& out) const;

 private:
  std::vector<ResidualBlock> blocks_;
};

// Channel concatenation [F, T_1, ..., T_K] of [A x A x C x H x W] fields.
Tensor build_fusion_inputs(const Tensor& features, const std::vector<Tensor>& block_outputs);

enum class FusionMode { kCrossAttention, kSum, kImage, kContentOnly };

class FusionTransformer {
 public:
  FusionTransformer() = default;
  FusionTransformer(FusionMode mode, const SalsaConfig& config, std::mt19937_64& rng);
  Tensor operator()(const Tensor& content, const Tensor& detail) const;
  void collect(const std::string& prefix, ParamList& out) const;
  FusionMode mode() const { return mode_; }
  SpatialAngularBlock& block() { return block_; }

 private:
  FusionMode mode_ = FusionMode::kCrossAttention;
  SpatialAngularBlock block_;
};

// Information multi-distillation block over `channels` (divisible by 4).
class Imdb {
 public:
  Imdb() = default;
  Imdb(std::size_t channels, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

 private:
  std::size_t quarter_ = 0;
  Conv2d c1_, c2_, c3_, c4_, fuse_;
};

// Per-view head: 1x1 entry, IMDB cascade, 1x1 to factor^2 channels, pixel
// shuffle, 1x1 output conv (zero at init), plus a bicubic skip of the LR view.
class Reconstructor {
 public:
  Reconstructor() = default;
  Reconstructor(std::size_t in_channels, std::size_t width, std::size_t n_imdb, std::size_t factor,
                std::mt19937_64& rng);
  // fused: [A x A x C' x H x W]; lr: the Y-channel input field.
  // Returns [A x A x 1 x factor*H x factor*W].
  Tensor operator()(const Tensor& fused, const LightField& lr) const;
  void collect(const std::string& prefix, ParamList& out) const;
  Conv2d& output_conv() { return out_; }

 private:
  std::size_t factor_ = 2;
  Conv2d entry_;
  std::vector<Imdb> imdbs_;
  Conv2d upsample_;
  Conv2d out_;
};

enum class Branch { kContent, kGradient };

class DptModel {
 public:
  DptModel(const DptConfig& config, std::uint64_t seed);

  // lr: Y-channel field [A x A x 1 x H x W] in [0,1].
  Tensor forward(const LightField& lr) const;
  // Forward without recording a graph.
  LightField super_resolve(const LightField& lr) const;

  Tensor extract_features(const LightField& input, Branch which) const;

  const DptConfig& config() const { return config_; }
  ParamList parameters() const;
  std::size_t parameter_count() const;

  // Component access, used by tests and the ablation harness.
  FeatureExtractor& extractor(Branch which) { return which == Branch::kContent ? content_extractor_ : gradient_extractor_; }
  UnimodalTransformer& transformer(Branch which) { return which == Branch::kContent ? content_transformer_ : gradient_transformer_; }
  FusionTransformer& fusion() { return fusion_; }
  Reconstructor& reconstructor() { return reconstructor_; }
  bool has_gradient_branch() const { return config_.ablation != Ablation::kContentOnly; }

 private:
  std::vector<Tensor> run_branch(const Tensor& features, Branch which) const;

  DptConfig config_;
  FeatureExtractor content_extractor_, gradient_extractor_;
  UnimodalTransformer content_transformer_, gradient_transformer_;
  ConvBranch content_conv_, gradient_conv_;
  FusionTransformer fusion_;
  Reconstructor reconstructor_;
};

// Multiply-accumulates of one forward pass at the given input geometry.
unsigned long long estimate_macs(const DptModel& model, std::size_t angular, std::size_t height,
                                 std::size_t width);

}  // namespace dpt
