#include "dpt/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <string>

#include "dpt/errors.hpp"
#include "dpt/rng.hpp"

namespace dpt {

double learning_rate(const TrainConfig& config, std::size_t epoch) {
  if (config.halve_every == 0) return config.lr0;
  return config.lr0 * std::ldexp(1.0, -static_cast<int>(epoch / config.halve_every));
}

void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr) {
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam: parameter count changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].numel()) {
      throw DimensionError("adam: moment size does not match parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const AdamOptions& o = state.options;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(o.beta1, t);
  const double corr2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    if (!p.has_grad()) continue;  // no gradient reached this parameter: treat as zero
    auto value = p.mutable_data();
    auto grad = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * grad[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / corr1;
      const double v_hat = v[j] / corr2;
      value[j] -= lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

void TrainResult::write_log(std::ostream& os) const {
  os << "step\tepoch\tlr\tloss\n";
  for (const auto& s : steps) {
    os << s.step << '\t' << s.epoch << '\t' << std::setprecision(17) << s.lr << '\t' << s.loss << '\n';
  }
}

TrainResult train(DptModel& model, const std::vector<PatchPair>& dataset, const TrainConfig& config,
                  const StepCallback& on_step) {
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  if (config.batch == 0) throw ConfigError("batch size must be positive");
  std::vector<Tensor> params;
  for (const auto& [name, t] : model.parameters()) params.push_back(t);
  AdamState adam;
  std::mt19937_64 rng = named_stream(config.seed, "shuffle");
  std::vector<std::size_t> order(dataset.size());

  TrainResult result;
  std::size_t step = 0;
  bool done = false;
  for (std::size_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
    const double lr = learning_rate(config, epoch);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      for (Tensor& p : params) p.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        PatchPair pair = dataset[order[b]];
        if (config.augment) pair = apply_augmentation(pair, random_augmentation(rng));
        const Tensor loss = l1_loss(model.forward(pair.lr), pair.hr.tensor());
        if (!std::isfinite(loss.item())) {
          throw NumericError("loss became non-finite at step " + std::to_string(step) + " (epoch " +
                             std::to_string(epoch) + ")");
        }
        batch_loss += loss.item() * inv_batch;
        scale(loss, inv_batch).backward();
      }
      adam_step(params, adam, lr);
      StepRecord record{step, epoch, lr, batch_loss};
      result.steps.push_back(record);
      if (on_step) on_step(record);
      epoch_total += batch_loss;
      ++epoch_steps;
      ++step;
      if (config.max_steps != 0 && step >= config.max_steps) {
        done = true;
        break;
      }
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(epoch_steps));
    result.epochs_run = epoch + 1;
  }
  return result;
}

LightField luma(const LightField& lf) {
  if (lf.channels() == 1) return lf;
  if (lf.channels() == 3) return extract_channel(rgb_to_ycbcr(lf), 0);
  throw DimensionError("expected 1 or 3 channels, got " + std::to_string(lf.channels()));
}

std::vector<PatchPair> make_patch_dataset(const std::vector<ScenePair>& scenes, std::size_t factor, std::size_t patch,
                                          std::size_t stride) {
  std::vector<PatchPair> out;
  for (const auto& scene : scenes) {
    auto pairs = crop_patches(luma(scene.hr), luma(scene.lr), factor, patch, stride);
    out.insert(out.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
  }
  return out;
}

std::vector<ScenePair> synthetic_scenes(std::uint64_t seed, std::size_t count, std::size_t angular,
                                        std::size_t channels, std::size_t size, std::size_t factor) {
  std::mt19937_64 rng = named_stream(seed, "data");
  std::vector<ScenePair> scenes;
  for (std::size_t i = 0; i < count; ++i) {
    scenes.push_back(generate_scene(random_scene(rng), angular, channels, size, size, factor));
  }
  return scenes;
}

MetricReport evaluate_model(const DptModel& model, const std::vector<PatchPair>& pairs) {
  std::vector<LightField> predictions, truths;
  for (const auto& p : pairs) {
    predictions.push_back(model.super_resolve(p.lr));
    truths.push_back(p.hr);
  }
  return evaluate(predictions, truths);
}

MetricReport evaluate_bicubic(const std::vector<PatchPair>& pairs, std::size_t factor) {
  std::vector<LightField> predictions, truths;
  for (const auto& p : pairs) {
    predictions.push_back(resize_views(p.lr, static_cast<double>(factor)));
    truths.push_back(p.hr);
  }
  return evaluate(predictions, truths);
}

std::vector<AblationRow> run_ablation(const std::vector<Ablation>& variants, const DptConfig& base,
                                      const std::vector<PatchPair>& train_set, const std::vector<PatchPair>& eval_set,
                                      const TrainConfig& config) {
  std::vector<AblationRow> rows;
  for (Ablation variant : variants) {
    DptConfig cfg = base;
    cfg.ablation = variant;
    DptModel model(cfg, config.seed);
    const TrainResult trained = train(model, train_set, config);
    rows.push_back({variant, model.parameter_count(), trained.steps.back().loss, evaluate_model(model, eval_set)});
  }
  return rows;
}

std::vector<SweepRow> sweep_k(const std::vector<std::size_t>& values, const DptConfig& base,
                              const std::vector<PatchPair>& train_set, const std::vector<PatchPair>& eval_set,
                              const TrainConfig& config) {
  for (std::size_t k : values) {
    if (k < 1 || k > 4) throw ConfigError("K sweep values must lie in 1..4, got " + std::to_string(k));
  }
  std::vector<SweepRow> rows;
  for (std::size_t k : values) {
    DptConfig cfg = base;
    cfg.blocks = k;
    DptModel model(cfg, config.seed);
    const TrainResult trained = train(model, train_set, config);
    rows.push_back({k, model.parameter_count(), trained.steps.back().loss, evaluate_model(model, eval_set)});
  }
  return rows;
}

}  // namespace dpt
