#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <vector>

#include "dpt/lightfield.hpp"
#include "dpt/metrics.hpp"
#include "dpt/model.hpp"
#include "dpt/synthetic.hpp"

namespace dpt {

struct TrainConfig {
  double lr0 = 2e-4;
  std::size_t halve_every = 15;  // epochs
  std::size_t epochs = 75;
  std::size_t batch = 8;         // patch tuples per optimizer step
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;     // 0: run every epoch to completion
  bool augment = true;
};

// lr0 * 0.5^floor(epoch / halve_every)
double learning_rate(const TrainConfig& config, std::size_t epoch);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Bias-corrected Adam on each parameter's accumulated gradient. Moments are
// created on the first call and must keep matching the parameter shapes.
void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean l1 per epoch
  std::vector<StepRecord> steps;
  std::size_t epochs_run = 0;

  // Tab-separated step, epoch, lr, loss.
  void write_log(std::ostream& os) const;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Minimises the l1 loss between model(lr) and hr with Adam. One epoch is one
// pass over the shuffled pair list. Throws ConfigError on an empty dataset
// and NumericError when the loss becomes non-finite.
TrainResult train(DptModel& model, const std::vector<PatchPair>& dataset, const TrainConfig& config,
                  const StepCallback& on_step = {});

// Y channel of an RGB field (via YCbCr); single-channel fields pass through.
LightField luma(const LightField& lf);

// Y-channel training pairs cropped from every scene.
std::vector<PatchPair> make_patch_dataset(const std::vector<ScenePair>& scenes, std::size_t factor, std::size_t patch,
                                          std::size_t stride);

// Deterministic synthetic scenes drawn from the "data" stream of `seed`.
std::vector<ScenePair> synthetic_scenes(std::uint64_t seed, std::size_t count, std::size_t angular,
                                        std::size_t channels, std::size_t size, std::size_t factor);

MetricReport evaluate_model(const DptModel& model, const std::vector<PatchPair>& pairs);
MetricReport evaluate_bicubic(const std::vector<PatchPair>& pairs, std::size_t factor);

struct AblationRow {
  Ablation variant;
  std::size_t parameters = 0;
  double final_loss = 0.0;
  MetricReport report;
};

// Trains and evaluates each variant from the same seed and data.
std::vector<AblationRow> run_ablation(const std::vector<Ablation>& variants, const DptConfig& base,
                                      const std::vector<PatchPair>& train_set, const std::vector<PatchPair>& eval_set,
                                      const TrainConfig& config);

struct SweepRow {
  std::size_t blocks = 0;
  std::size_t parameters = 0;
  double final_loss = 0.0;
  MetricReport report;
};

// One row per K in `values` (each within 1..4).
std::vector<SweepRow> sweep_k(const std::vector<std::size_t>& values, const DptConfig& base,
                              const std::vector<PatchPair>& train_set, const std::vector<PatchPair>& eval_set,
                              const TrainConfig& config);

}  // namespace dpt
