#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "dpt/lightfield.hpp"

namespace dpt {

struct Sinusoid {
  double amplitude = 0.0;
  double freq_y = 0.0;  // cycles per pixel
  double freq_x = 0.0;
  double phase = 0.0;
};

// Procedural Lambertian plane at constant disparity. Each channel is a sum
// of random-phase sinusoids, so sub-pixel view shifts are exact.
struct SyntheticScene {
  double disparity = 0.0;  // pixels per view step
  std::uint64_t seed = 0;
  std::size_t components = 6;
  double max_frequency = 0.2;  // cycles per HR pixel
};

// Texture value of channel `c` at continuous position (y, x).
class SceneTexture {
 public:
  SceneTexture(const SyntheticScene& scene, std::size_t channels);
  double operator()(std::size_t c, double y, double x) const;

 private:
  std::vector<std::vector<Sinusoid>> channels_;
};

// view(u,v)(h,w) = texture(h + (u-u0)*d, w + (v-v0)*d) with (u0, v0) the grid centre.
LightField render_scene(const SyntheticScene& scene, std::size_t angular, std::size_t channels,
                        std::size_t height, std::size_t width);

struct ScenePair {
  LightField hr;
  LightField lr;
};

// HR render plus its per-view bicubic decimation by `factor` (2 or 4).
ScenePair generate_scene(const SyntheticScene& scene, std::size_t angular, std::size_t channels,
                         std::size_t height, std::size_t width, std::size_t factor);

// Scene with disparity drawn from [-max_disparity, max_disparity].
SyntheticScene random_scene(std::mt19937_64& rng, double max_disparity = 1.0);

}  // namespace dpt
