#include "dpt/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dpt/errors.hpp"

namespace dpt {

SceneTexture::SceneTexture(const SyntheticScene& scene, std::size_t channels) {
  std::mt19937_64 rng(scene.seed);
  std::uniform_real_distribution<double> freq(-scene.max_frequency, scene.max_frequency);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> weight(0.3, 1.0);
  // Amplitudes sum to 0.45 per channel so values stay inside [0.05, 0.95].
  constexpr double kBudget = 0.45;
  channels_.resize(channels);
  for (auto& comps : channels_) {
    comps.resize(scene.components);
    double total = 0.0;
    for (auto& s : comps) {
      s.amplitude = weight(rng);
      s.freq_y = freq(rng);
      s.freq_x = freq(rng);
      s.phase = phase(rng);
      total += s.amplitude;
    }
    for (auto& s : comps) s.amplitude *= kBudget / total;
  }
}

double SceneTexture::operator()(std::size_t c, double y, double x) const {
  double value = 0.5;
  for (const Sinusoid& s : channels_.at(c)) {
    value += s.amplitude * std::sin(2.0 * std::numbers::pi * (s.freq_y * y + s.freq_x * x) + s.phase);
  }
  return value;
}

LightField render_scene(const SyntheticScene& scene, std::size_t angular, std::size_t channels,
                        std::size_t height, std::size_t width) {
  const SceneTexture texture(scene, channels);
  LightField lf(angular, angular, channels, height, width);
  const double centre = (static_cast<double>(angular) - 1.0) / 2.0;
  for (std::size_t u = 0; u < angular; ++u)
    for (std::size_t v = 0; v < angular; ++v) {
      const double dy = (static_cast<double>(u) - centre) * scene.disparity;
      const double dx = (static_cast<double>(v) - centre) * scene.disparity;
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t h = 0; h < height; ++h)
          for (std::size_t w = 0; w < width; ++w)
            lf.set(u, v, c, h, w, texture(c, static_cast<double>(h) + dy, static_cast<double>(w) + dx));
    }
  return lf;
}

ScenePair generate_scene(const SyntheticScene& scene, std::size_t angular, std::size_t channels,
                         std::size_t height, std::size_t width, std::size_t factor) {
  if (factor != 2 && factor != 4) throw ConfigError("scale factor must be 2 or 4, got " + std::to_string(factor));
  if (height % factor != 0 || width % factor != 0) {
    throw ConfigError("spatial extents must be divisible by the scale factor");
  }
  LightField hr = render_scene(scene, angular, channels, height, width);
  LightField lr = resize_views(hr, 1.0 / static_cast<double>(factor));
  return {std::move(hr), std::move(lr)};
}

SyntheticScene random_scene(std::mt19937_64& rng, double max_disparity) {
  std::uniform_real_distribution<double> disparity(-max_disparity, max_disparity);
  SyntheticScene scene;
  scene.disparity = disparity(rng);
  scene.seed = rng();
  return scene;
}

}  // namespace dpt
