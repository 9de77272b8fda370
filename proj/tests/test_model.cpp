#include <filesystem>

#include "doctest.h"
#include "dpt/checkpoint.hpp"
#include "dpt/errors.hpp"
#include "dpt/model.hpp"
#include "dpt/synthetic.hpp"
#include "test_util.hpp"

using namespace dpt;
using dpt::test::random_tensor;
namespace fs = std::filesystem;

namespace {

DptConfig micro(Ablation a = Ablation::kFull) {
  DptConfig c;
  c.angular = 2;
  c.channels = 4;
  c.blocks = 1;
  c.imdb_blocks = 1;
  c.recon_channels = 8;
  c.ablation = a;
  return c;
}

void randomize(Tensor t, std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> d(-bound, bound);
  for (double& x : t.mutable_data()) x = d(rng);
}

void wake(SalsaLayer& layer, std::mt19937_64& rng) {
  if (layer.output().conv.weight.defined()) randomize(layer.output().conv.weight, rng, 0.5);
  if (layer.output().linear.weight.defined()) randomize(layer.output().linear.weight, rng, 0.5);
}

// Every zero-initialised weight made non-zero.
void wake(DptModel& m, std::mt19937_64& rng) {
  for (Branch b : {Branch::kContent, Branch::kGradient})
    for (auto& blk : m.transformer(b).blocks()) {
      wake(blk.horizontal, rng);
      wake(blk.vertical, rng);
    }
  if (m.fusion().mode() == FusionMode::kCrossAttention || m.fusion().mode() == FusionMode::kImage) {
    wake(m.fusion().block().horizontal, rng);
    wake(m.fusion().block().vertical, rng);
  }
  randomize(m.reconstructor().output_conv().weight, rng, 0.5);
}

LightField random_lr(std::size_t a, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return LightField(random_tensor({a, a, 1, h, h}, rng, 0.0, 1.0));
}

// Swaps (u,v) and (h,w) together.
Tensor transpose_field(const Tensor& f) { return permute(f, {1, 0, 2, 4, 3}); }

}  // namespace

TEST_CASE("forward output shape for both scales") {
  for (std::size_t s : {2u, 4u}) {
    DptConfig c = micro();
    c.scale = s;
    DptModel m(c, 1);
    const Tensor y = m.forward(random_lr(2, 8, 1));
    CHECK(y.shape() == Shape{2, 2, 1, 8 * s, 8 * s});
  }
}

TEST_CASE("fresh models reproduce the bicubic upsample") {
  for (Ablation a : all_ablations()) {
    for (std::uint64_t seed : {1u, 2u}) {
      DptConfig c = micro(a);
      c.angular = 3;
      DptModel m(c, seed);
      const LightField lr = random_lr(3, 8, seed + 10);
      const LightField sr = m.super_resolve(lr);
      const LightField bic = resize_views(lr, 2.0);
      CHECK(test::max_abs_diff(sr.tensor().data(), bic.tensor().data()) < 1e-9);
    }
  }
}

TEST_CASE("horizontal stage rows are independent, vertical columns likewise") {
  std::mt19937_64 rng(3);
  SalsaConfig cfg;
  cfg.channels = 3;
  cfg.patch = {2, 2};
  cfg.stride = {1, 1};
  SalsaLayer layer(cfg, rng);
  wake(layer, rng);
  const Tensor f = random_tensor({3, 3, 3, 4, 4}, rng);
  const Tensor base_h = horizontal_stage(f, layer);
  const Tensor base_v = vertical_stage(f, layer);
  const std::size_t view = 3 * 4 * 4;
  for (std::size_t j = 0; j < 3; ++j) {
    Tensor row = f.clone(), col = f.clone();
    for (std::size_t v = 0; v < 3; ++v)
      for (std::size_t k = 0; k < view; ++k) {
        row.mutable_data()[(j * 3 + v) * view + k] += 0.37;
        col.mutable_data()[(v * 3 + j) * view + k] -= 0.41;
      }
    const Tensor hr = horizontal_stage(row, layer), vc = vertical_stage(col, layer);
    for (std::size_t i = 0; i < 3; ++i) {
      if (i == j) continue;
      for (std::size_t v = 0; v < 3; ++v) {
        CHECK(test::bit_equal(slice(reshape(hr, {9, view}), 0, i * 3 + v, 1).data(),
                              slice(reshape(base_h, {9, view}), 0, i * 3 + v, 1).data()));
        CHECK(test::bit_equal(slice(reshape(vc, {9, view}), 0, v * 3 + i, 1).data(),
                              slice(reshape(base_v, {9, view}), 0, v * 3 + i, 1).data()));
      }
    }
    CHECK_FALSE(test::bit_equal(hr.data(), base_h.data()));
  }
}

TEST_CASE("vertical stage is the transpose-conjugate of the horizontal stage") {
  std::mt19937_64 rng(4);
  SalsaConfig cfg;
  cfg.channels = 2;
  cfg.patch = {2, 2};
  cfg.stride = {1, 1};
  SalsaLayer layer(cfg, rng);
  wake(layer, rng);
  const Tensor f = random_tensor({3, 3, 2, 5, 5}, rng);
  const Tensor a = horizontal_stage(transpose_field(f), layer);
  const Tensor b = transpose_field(vertical_stage(f, layer));
  CHECK(test::max_abs_diff(a.data(), b.data()) < 1e-12);
}

TEST_CASE("fusion inputs concatenate features and every block output") {
  std::mt19937_64 rng(5);
  const Tensor f = random_tensor({2, 2, 3, 4, 4}, rng);
  const Tensor t1 = random_tensor({2, 2, 3, 4, 4}, rng), t2 = random_tensor({2, 2, 3, 4, 4}, rng);
  const Tensor h = build_fusion_inputs(f, {t1, t2});
  CHECK(h.shape() == Shape{2, 2, 9, 4, 4});
  CHECK(h[(1 * 2 + 0) * 9 * 16 + 7 * 16 + 5] == t2[(1 * 2 + 0) * 3 * 16 + 1 * 16 + 5]);
  CHECK_THROWS_AS(build_fusion_inputs(f, {}), ConfigError);
}

TEST_CASE("parameter count grows with K and drops without the gradient branch") {
  std::size_t prev = 0;
  for (std::size_t k = 1; k <= 4; ++k) {
    DptConfig c;
    c.blocks = k;
    const std::size_t n = DptModel(c, 0).parameter_count();
    CHECK(n > prev);
    prev = n;
  }
  DptConfig full;
  DptConfig content = full;
  content.ablation = Ablation::kContentOnly;
  CHECK(DptModel(content, 0).parameter_count() < DptModel(full, 0).parameter_count());

  DptConfig conv = full;
  conv.ablation = Ablation::kConvBranches;
  const double ratio = static_cast<double>(DptModel(conv, 0).parameter_count()) /
                       static_cast<double>(DptModel(full, 0).parameter_count());
  CHECK(ratio > 0.9);
  CHECK(ratio < 1.1);

  DptConfig wide = full;
  wide.channels = 2 * full.channels;
  CHECK(DptModel(wide, 0).parameter_count() > DptModel(full, 0).parameter_count());
}

TEST_CASE("all-zero input gives finite, view-identical output") {
  DptModel m(micro(), 5);
  std::mt19937_64 rng(5);
  wake(m, rng);
  const LightField sr = m.super_resolve(LightField(Tensor::zeros({2, 2, 1, 8, 8})));
  REQUIRE(all_finite(sr.tensor()));
  const auto first = sr.view(0, 0);
  double worst = 0.0;
  for (std::size_t u = 0; u < 2; ++u)
    for (std::size_t v = 0; v < 2; ++v) worst = std::max(worst, test::max_abs_diff(sr.view(u, v), first));
  CHECK(worst < 1e-12);
}

TEST_CASE("MAC estimate scales with the input area") {
  DptModel m(micro(), 0);
  const auto small = estimate_macs(m, 2, 8, 8);
  const auto large = estimate_macs(m, 2, 16, 16);
  CHECK(small > 0);
  CHECK(large > 3 * small);
}

TEST_CASE("woken models stay finite across seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Ablation a = all_ablations()[seed % all_ablations().size()];
    DptModel m(micro(a), seed);
    std::mt19937_64 rng(seed);
    wake(m, rng);
    const LightField sr = m.super_resolve(random_lr(2, 4, seed));
    CHECK(all_finite(sr.tensor()));
  }
}

TEST_CASE("sum fusion equals full fusion when the gradient path and f_P vanish") {
  DptConfig c = micro();
  DptModel full(c, 5);
  c.ablation = Ablation::kSumFusion;
  DptModel sum_model(c, 5);
  std::mt19937_64 rng(6);
  randomize(full.reconstructor().output_conv().weight, rng, 0.5);
  // share every common parameter, then silence the gradient extractor
  const ParamList src = full.parameters();
  for (auto& [name, t] : sum_model.parameters()) {
    for (const auto& [n2, s] : src)
      if (n2 == name) std::copy(s.data().begin(), s.data().end(), Tensor(t).mutable_data().begin());
  }
  for (DptModel* m : {&full, &sum_model})
    for (auto& [name, t] : m->parameters())
      if (name.rfind("gradient.extractor", 0) == 0) {
        auto v = Tensor(t).mutable_data();
        std::fill(v.begin(), v.end(), 0.0);
      }
  const LightField lr = random_lr(2, 8, 7);
  const LightField a = full.super_resolve(lr), b = sum_model.super_resolve(lr);
  CHECK(test::max_abs_diff(a.tensor().data(), b.tensor().data()) < 1e-12);
  CHECK(test::max_abs_diff(a.tensor().data(), resize_views(lr, 2.0).tensor().data()) > 1e-6);
}

TEST_CASE("config map round trip and validation") {
  DptConfig c = micro(Ablation::kVanillaAttention);
  c.salsa.attention_scale = AttentionScale::kUnscaled;
  CHECK(DptConfig::from_map(c.to_map()) == c);
  CHECK_THROWS_AS(DptConfig::from_map({{"scale", "3"}}), ConfigError);
  CHECK_THROWS_AS(DptConfig::from_map({{"blocks", "0"}}), ConfigError);
  CHECK_THROWS_AS(DptConfig::from_map({{"channels", "x"}}), ConfigError);
  CHECK_THROWS_AS(parse_ablation("none"), ConfigError);
  for (Ablation a : all_ablations()) CHECK(parse_ablation(ablation_name(a)) == a);
}

TEST_CASE("model rejects multi-channel input") {
  DptModel m(micro(), 0);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(m.forward(LightField(random_tensor({2, 2, 3, 8, 8}, rng))), ConfigError);
}

TEST_CASE("checkpoint round trip restores outputs bit-exactly") {
  DptModel m(micro(), 8);
  std::mt19937_64 rng(8);
  wake(m, rng);
  const fs::path dir = fs::temp_directory_path() / "dpt_test_ckpt";
  fs::remove_all(dir);
  save_checkpoint(dir, m, {{"note", "x"}});
  const DptModel back = load_checkpoint(dir);
  const LightField lr = random_lr(2, 8, 9);
  CHECK(test::bit_equal(back.super_resolve(lr).tensor().data(), m.super_resolve(lr).tensor().data()));
  CHECK(read_key_values(dir / "manifest.txt").at("note") == "x");

  DptConfig other = micro();
  other.channels = 8;
  DptModel mismatch(other, 0);
  CHECK_THROWS_AS(load_checkpoint_into(mismatch, dir), ConfigError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("tensor blobs reject corruption") {
  std::mt19937_64 rng(1);
  const Tensor t = random_tensor({2, 3}, rng);
  auto bytes = encode_tensor_blob("w", t);
  auto [name, back] = decode_tensor_blob(bytes);
  CHECK(name == "w");
  CHECK(test::bit_equal(back.data(), t.data()));
  bytes.pop_back();
  CHECK_THROWS_AS(decode_tensor_blob(bytes), FormatError);
}
