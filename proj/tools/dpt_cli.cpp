#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpt/checkpoint.hpp"
#include "dpt/errors.hpp"
#include "dpt/lfr_io.hpp"
#include "dpt/model.hpp"
#include "dpt/rng.hpp"
#include "dpt/synthetic.hpp"
#include "dpt/train.hpp"

namespace fs = std::filesystem;
using namespace dpt;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

using KeyValues = std::map<std::string, std::string>;

struct Shared {
  std::uint64_t seed = 0;
  std::string config;
  std::string out_dir = ".";
};

void log(const std::string& msg) { std::cerr << "[dpt] " << msg << '\n'; }

std::string join(const std::vector<std::string>& parts, const char* sep = ",") {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : sep) + p;
  return s;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

// Config file entries, then flags on top.
KeyValues load_config(const Shared& shared) {
  if (shared.config.empty()) return {};
  if (!fs::exists(shared.config)) throw UsageError("config file not found: " + shared.config);
  return read_key_values(shared.config);
}

std::size_t get_size(const KeyValues& kv, const std::string& key, std::size_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer, got '" + it->second + "'");
  }
}

double get_double(const KeyValues& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' must be a number, got '" + it->second + "'");
  }
}

TrainConfig train_config(const KeyValues& kv, std::uint64_t seed) {
  TrainConfig t;
  t.lr0 = get_double(kv, "lr0", t.lr0);
  t.halve_every = get_size(kv, "halve_every", t.halve_every);
  t.epochs = get_size(kv, "epochs", t.epochs);
  t.batch = get_size(kv, "batch", t.batch);
  t.max_steps = get_size(kv, "max_steps", t.max_steps);
  t.augment = get_size(kv, "augment", t.augment ? 1 : 0) != 0;
  t.seed = seed;
  if (t.batch == 0) throw ConfigError("batch must be positive");
  if (t.epochs == 0) throw ConfigError("epochs must be positive");
  if (!(t.lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  return t;
}

KeyValues train_map(const TrainConfig& t) {
  std::ostringstream lr;
  lr << std::setprecision(17) << t.lr0;
  return {{"lr0", lr.str()},
          {"halve_every", std::to_string(t.halve_every)},
          {"epochs", std::to_string(t.epochs)},
          {"batch", std::to_string(t.batch)},
          {"max_steps", std::to_string(t.max_steps)},
          {"augment", t.augment ? "1" : "0"}};
}

void write_run_manifest(const fs::path& dir, const std::string& command, const KeyValues& resolved,
                        std::uint64_t seed, const std::vector<std::string>& artifacts, double seconds) {
  KeyValues kv = resolved;
  kv["command"] = command;
  kv["seed"] = std::to_string(seed);
  kv["artifacts"] = join(artifacts);
  kv["wall_time_s"] = fmt(seconds, 3);
  write_key_values(dir / "run_manifest.txt", kv);
}

struct Dataset {
  std::vector<ScenePair> scenes;
  std::size_t alpha = 2;
};

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("dataset directory not found: " + dir.string());
  const auto kv = read_key_values(dir / "manifest.txt");
  if (!kv.count("scenes") || !kv.count("alpha")) throw FormatError("dataset manifest lacks scenes/alpha: " + dir.string());
  Dataset d;
  d.alpha = get_size(kv, "alpha", 2);
  const std::size_t n = get_size(kv, "scenes", 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::ostringstream stem;
    stem << "scene_" << std::setw(3) << std::setfill('0') << i;
    d.scenes.push_back({read_lfr(dir / (stem.str() + "_hr.lfr")), read_lfr(dir / (stem.str() + "_lr.lfr"))});
  }
  if (d.scenes.empty()) throw FormatError("dataset has no scenes: " + dir.string());
  return d;
}

// Whole-scene Y-channel pairs used for evaluation.
std::vector<PatchPair> scene_pairs(const Dataset& d) {
  std::vector<PatchPair> out;
  for (const auto& s : d.scenes) out.push_back({luma(s.lr), luma(s.hr)});
  return out;
}

DptConfig model_config(const KeyValues& kv, std::size_t alpha, std::size_t angular) {
  KeyValues m = kv;
  m.emplace("scale", std::to_string(alpha));
  m.emplace("angular", std::to_string(angular));
  DptConfig c = DptConfig::from_map(m);
  if (c.scale != alpha) throw ConfigError("config scale " + std::to_string(c.scale) + " differs from the dataset's alpha");
  return c;
}

struct TrainFlags {
  std::string data;
  std::string ablation;
  std::optional<std::size_t> epochs, batch, max_steps, blocks, channels, patch, patch_stride, halve_every;
  std::optional<double> lr;
  bool no_augment = false;
};

void apply_train_flags(const TrainFlags& f, KeyValues& kv) {
  if (!f.ablation.empty()) kv["ablation"] = f.ablation;
  if (f.epochs) kv["epochs"] = std::to_string(*f.epochs);
  if (f.batch) kv["batch"] = std::to_string(*f.batch);
  if (f.max_steps) kv["max_steps"] = std::to_string(*f.max_steps);
  if (f.blocks) kv["blocks"] = std::to_string(*f.blocks);
  if (f.channels) kv["channels"] = std::to_string(*f.channels);
  if (f.patch) kv["patch"] = std::to_string(*f.patch);
  if (f.patch_stride) kv["patch_stride"] = std::to_string(*f.patch_stride);
  if (f.halve_every) kv["halve_every"] = std::to_string(*f.halve_every);
  if (f.lr) {
    std::ostringstream os;
    os << std::setprecision(17) << *f.lr;
    kv["lr0"] = os.str();
  }
  if (f.no_augment) kv["augment"] = "0";
}

struct Prepared {
  Dataset data;
  DptConfig model;
  TrainConfig train;
  std::vector<PatchPair> patches;
  KeyValues resolved;
};

Prepared prepare_training(const Shared& shared, const TrainFlags& flags) {
  KeyValues kv = load_config(shared);
  apply_train_flags(flags, kv);
  if (flags.data.empty()) throw UsageError("--data is required");
  Prepared p;
  p.train = train_config(kv, shared.seed);
  const std::size_t patch = get_size(kv, "patch", 64), stride = get_size(kv, "patch_stride", 32);
  if (patch == 0 || stride == 0) throw ConfigError("patch and patch_stride must be positive");
  // config validation happens before the dataset is read
  DptConfig::from_map([&] {
    KeyValues m = kv;
    m.emplace("scale", "2");
    return m;
  }());
  p.data = load_dataset(flags.data);
  p.model = model_config(kv, p.data.alpha, p.data.scenes.front().hr.angular());
  p.patches = make_patch_dataset(p.data.scenes, p.data.alpha, patch, stride);
  p.resolved = p.model.to_map();
  for (const auto& [k, v] : train_map(p.train)) p.resolved[k] = v;
  p.resolved["patch"] = std::to_string(patch);
  p.resolved["patch_stride"] = std::to_string(stride);
  p.resolved["data"] = flags.data;
  return p;
}

// ---- subcommands ------------------------------------------------------------

struct GenFlags {
  std::size_t scenes = 4, angular = 3, hw = 64, alpha = 2, channels = 3;
  double max_disparity = 1.0;
};

int cmd_gen_data(const Shared& shared, const GenFlags& f) {
  if (f.alpha != 2 && f.alpha != 4) throw UsageError("--alpha must be 2 or 4");
  if (f.scenes == 0 || f.angular == 0) throw UsageError("--scenes and --a must be positive");
  if (f.hw == 0 || f.hw % f.alpha != 0) throw UsageError("--hw must be a positive multiple of --alpha");
  if (f.channels != 1 && f.channels != 3) throw UsageError("--channels must be 1 or 3");
  const auto start = std::chrono::steady_clock::now();
  const fs::path out(shared.out_dir);
  fs::create_directories(out);
  std::mt19937_64 rng = named_stream(shared.seed, "data");
  std::vector<std::string> files;
  for (std::size_t i = 0; i < f.scenes; ++i) {
    const SyntheticScene scene = random_scene(rng, f.max_disparity);
    const ScenePair pair = generate_scene(scene, f.angular, f.channels, f.hw, f.hw, f.alpha);
    std::ostringstream stem;
    stem << "scene_" << std::setw(3) << std::setfill('0') << i;
    write_lfr(out / (stem.str() + "_hr.lfr"), pair.hr);
    write_lfr(out / (stem.str() + "_lr.lfr"), pair.lr);
    files.push_back(stem.str() + "_hr.lfr");
    files.push_back(stem.str() + "_lr.lfr");
  }
  KeyValues manifest{{"scenes", std::to_string(f.scenes)}, {"angular", std::to_string(f.angular)},
                     {"hw", std::to_string(f.hw)},         {"alpha", std::to_string(f.alpha)},
                     {"channels", std::to_string(f.channels)}, {"max_disparity", fmt(f.max_disparity, 6)},
                     {"seed", std::to_string(shared.seed)}};
  write_key_values(out / "manifest.txt", manifest);
  log("wrote " + std::to_string(files.size()) + " LFR files to " + out.string());
  write_run_manifest(out, "gen-data", manifest, shared.seed, files,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return kOk;
}

int cmd_train(const Shared& shared, const TrainFlags& flags) {
  const auto start = std::chrono::steady_clock::now();
  Prepared p = prepare_training(shared, flags);
  log("training " + std::string(ablation_name(p.model.ablation)) + " on " + std::to_string(p.patches.size()) +
      " patch pairs");
  DptModel model(p.model, shared.seed);
  const TrainResult result = train(model, p.patches, p.train, [](const StepRecord& r) {
    if (r.step % 10 == 0) log("step " + std::to_string(r.step) + " epoch " + std::to_string(r.epoch) + " loss " + fmt(r.loss, 6));
  });
  const fs::path out(shared.out_dir);
  fs::create_directories(out);
  KeyValues extra = train_map(p.train);
  extra["seed"] = std::to_string(shared.seed);
  save_checkpoint(out / "checkpoint", model, extra);
  {
    std::ofstream os(out / "loss.tsv");
    result.write_log(os);
  }
  log("final loss " + fmt(result.steps.back().loss, 6) + " after " + std::to_string(result.steps.size()) + " steps");
  write_run_manifest(out, "train", p.resolved, shared.seed, {"checkpoint", "loss.tsv"},
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return kOk;
}

struct SrFlags {
  std::string checkpoint, input, baseline;
  std::size_t scale = 0;
};

int cmd_sr(const Shared& shared, const SrFlags& f) {
  if (f.input.empty()) throw UsageError("--input is required");
  if (!f.baseline.empty() && f.baseline != "bicubic") throw UsageError("--baseline accepts only 'bicubic'");
  if (f.baseline.empty() && f.checkpoint.empty()) throw UsageError("--checkpoint is required unless --baseline is given");
  if (!f.baseline.empty() && f.scale != 0 && f.scale != 2 && f.scale != 4) throw UsageError("--scale must be 2 or 4");
  const auto start = std::chrono::steady_clock::now();
  const LightField input = read_lfr(f.input);
  if (input.channels() != 1 && input.channels() != 3) throw FormatError("input must have 1 or 3 channels");

  std::optional<DptModel> model;
  std::size_t factor = f.scale == 0 ? 2 : f.scale;
  if (f.baseline.empty()) {
    model.emplace(load_checkpoint(f.checkpoint));
    factor = model->config().scale;
  }
  auto upscale_y = [&](const LightField& y) {
    return model ? model->super_resolve(y) : resize_views(y, static_cast<double>(factor));
  };
  LightField out, y_out;
  if (input.channels() == 1) {
    out = y_out = upscale_y(input);
  } else {
    const LightField ycc = rgb_to_ycbcr(input);
    const LightField up = resize_views(ycc, static_cast<double>(factor));
    y_out = upscale_y(extract_channel(ycc, 0));
    out = ycbcr_to_rgb(replace_channel(up, 0, y_out));
  }
  if (!all_finite(out.tensor())) throw NumericError("super-resolved output contains non-finite values");
  const fs::path dir(shared.out_dir);
  fs::create_directories(dir);
  write_lfr(dir / "sr.lfr", out);
  export_pgm(y_out, dir / "pgm");
  log("wrote " + (dir / "sr.lfr").string() + " " + shape_str(out.shape()));
  KeyValues resolved{{"input", f.input},
                     {"checkpoint", f.checkpoint},
                     {"baseline", f.baseline.empty() ? "none" : f.baseline},
                     {"scale", std::to_string(factor)}};
  write_run_manifest(dir, "sr", resolved, shared.seed, {"sr.lfr", "pgm"},
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return kOk;
}

struct EvalFlags {
  std::string prediction, truth;
};

int cmd_eval(const Shared&, const EvalFlags& f) {
  if (f.prediction.empty() || f.truth.empty()) throw UsageError("--prediction and --truth are required");
  const LightField pred = read_lfr(f.prediction), truth = read_lfr(f.truth);
  if (pred.shape() != truth.shape()) {
    throw DimensionError("prediction " + shape_str(pred.shape()) + " and truth " + shape_str(truth.shape()) + " differ");
  }
  const MetricReport r = evaluate(luma(pred), luma(truth));
  r.write_table(std::cout);
  r.write_summary(std::cerr);
  return kOk;
}

struct CountFlags {
  std::size_t angular = 5, hw = 32;
  std::optional<std::size_t> blocks, channels;
  std::string ablation;
};

int cmd_count_params(const Shared& shared, const CountFlags& f) {
  KeyValues kv = load_config(shared);
  if (f.blocks) kv["blocks"] = std::to_string(*f.blocks);
  if (f.channels) kv["channels"] = std::to_string(*f.channels);
  if (!f.ablation.empty()) kv["ablation"] = f.ablation;
  kv["angular"] = std::to_string(f.angular);
  const DptConfig cfg = DptConfig::from_map(kv);
  if (f.hw == 0) throw UsageError("--hw must be positive");
  const DptModel model(cfg, shared.seed);
  const unsigned long long macs = estimate_macs(model, f.angular, f.hw, f.hw);
  std::cout << "ablation\tblocks\tparams\tmacs\tflops\tinput\n"
            << ablation_name(cfg.ablation) << '\t' << cfg.blocks << '\t' << model.parameter_count() << '\t' << macs
            << '\t' << 2 * macs << '\t' << f.angular << 'x' << f.angular << 'x' << f.hw << 'x' << f.hw << '\n';
  return kOk;
}

struct HarnessFlags {
  TrainFlags train;
  std::string variants;
  std::string values = "1,2,3,4";
};

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_ablate(const Shared& shared, const HarnessFlags& f) {
  std::vector<Ablation> variants;
  if (f.variants.empty()) {
    variants = all_ablations();
  } else {
    for (const auto& name : split(f.variants)) variants.push_back(parse_ablation(name));
  }
  const auto start = std::chrono::steady_clock::now();
  Prepared p = prepare_training(shared, f.train);
  const auto rows = run_ablation(variants, p.model, p.patches, scene_pairs(p.data), p.train);
  std::cout << "variant\tparams\tfinal_loss\tpsnr\tssim\n";
  for (const auto& r : rows) {
    std::cout << ablation_name(r.variant) << '\t' << r.parameters << '\t' << fmt(r.final_loss, 6) << '\t'
              << fmt(r.report.mean_psnr) << '\t' << fmt(r.report.mean_ssim) << '\n';
  }
  const fs::path out(shared.out_dir);
  fs::create_directories(out);
  std::vector<std::string> names;
  for (Ablation a : variants) names.emplace_back(ablation_name(a));
  p.resolved["variants"] = join(names);
  write_run_manifest(out, "ablate", p.resolved, shared.seed, {},
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return kOk;
}

int cmd_sweep_k(const Shared& shared, const HarnessFlags& f) {
  std::vector<std::size_t> values;
  for (const auto& v : split(f.values)) {
    try {
      values.push_back(std::stoul(v));
    } catch (const std::exception&) {
      throw UsageError("--values must be a comma-separated list of integers");
    }
    if (values.back() < 1 || values.back() > 4) throw UsageError("--values entries must lie in 1..4");
  }
  if (values.empty()) throw UsageError("--values is empty");
  const auto start = std::chrono::steady_clock::now();
  Prepared p = prepare_training(shared, f.train);
  const auto rows = sweep_k(values, p.model, p.patches, scene_pairs(p.data), p.train);
  std::cout << "K\tparams\tfinal_loss\tpsnr\tssim\n";
  for (const auto& r : rows) {
    std::cout << r.blocks << '\t' << r.parameters << '\t' << fmt(r.final_loss, 6) << '\t' << fmt(r.report.mean_psnr)
              << '\t' << fmt(r.report.mean_ssim) << '\n';
  }
  const fs::path out(shared.out_dir);
  fs::create_directories(out);
  p.resolved["values"] = f.values;
  write_run_manifest(out, "sweep-k", p.resolved, shared.seed, {},
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return kOk;
}

void add_shared(CLI::App* sub, Shared& shared) {
  sub->add_option("--seed", shared.seed, "RNG seed");
  sub->add_option("--config", shared.config, "key=value config file; flags override it");
  sub->add_option("--out-dir", shared.out_dir, "output directory");
}

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--data", f.data, "directory written by gen-data");
  sub->add_option("--ablation", f.ablation, "full|content_only|sum_fusion|image_fusion|conv_branches|vanilla_attention");
  sub->add_option("--epochs", f.epochs);
  sub->add_option("--batch", f.batch);
  sub->add_option("--max-steps", f.max_steps);
  sub->add_option("--lr", f.lr, "initial learning rate");
  sub->add_option("--halve-every", f.halve_every, "epochs between learning-rate halvings (0: constant)");
  sub->add_option("--blocks", f.blocks, "K");
  sub->add_option("--channels", f.channels, "C");
  sub->add_option("--patch", f.patch, "HR training patch size");
  sub->add_option("--patch-stride", f.patch_stride, "HR crop stride");
  sub->add_flag("--no-augment", f.no_augment);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detail-preserving light-field super-resolution"};
  app.require_subcommand(1);
  Shared shared;

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write synthetic HR/LR light-field pairs");
  add_shared(gen_cmd, shared);
  gen_cmd->add_option("--scenes", gen.scenes);
  gen_cmd->add_option("--a", gen.angular, "angular extent A");
  gen_cmd->add_option("--hw", gen.hw, "HR spatial extent");
  gen_cmd->add_option("--alpha", gen.alpha, "scale factor, 2 or 4");
  gen_cmd->add_option("--channels", gen.channels, "1 (Y) or 3 (RGB)");
  gen_cmd->add_option("--max-disparity", gen.max_disparity);

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  add_shared(train_cmd, shared);
  add_train_flags(train_cmd, train_flags);

  SrFlags sr;
  auto* sr_cmd = app.add_subcommand("sr", "super-resolve an LFR file");
  add_shared(sr_cmd, shared);
  sr_cmd->add_option("--checkpoint", sr.checkpoint);
  sr_cmd->add_option("--input", sr.input);
  sr_cmd->add_option("--baseline", sr.baseline, "bicubic: skip the model");
  sr_cmd->add_option("--scale", sr.scale, "upscale factor for the bicubic baseline");

  EvalFlags ev;
  auto* eval_cmd = app.add_subcommand("eval", "per-view PSNR/SSIM of a prediction");
  add_shared(eval_cmd, shared);
  eval_cmd->add_option("--prediction", ev.prediction);
  eval_cmd->add_option("--truth", ev.truth);

  CountFlags count;
  auto* count_cmd = app.add_subcommand("count-params", "parameter and FLOP counts");
  add_shared(count_cmd, shared);
  count_cmd->add_option("--a", count.angular);
  count_cmd->add_option("--hw", count.hw);
  count_cmd->add_option("--blocks", count.blocks);
  count_cmd->add_option("--channels", count.channels);
  count_cmd->add_option("--ablation", count.ablation);

  HarnessFlags ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and score the ablation variants");
  add_shared(ablate_cmd, shared);
  add_train_flags(ablate_cmd, ablate.train);
  ablate_cmd->add_option("--variants", ablate.variants, "comma-separated subset");

  HarnessFlags sweep;
  auto* sweep_cmd = app.add_subcommand("sweep-k", "train and score K = 1..4");
  add_shared(sweep_cmd, shared);
  add_train_flags(sweep_cmd, sweep.train);
  sweep_cmd->add_option("--values", sweep.values, "comma-separated K values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(shared, gen);
    if (*train_cmd) return cmd_train(shared, train_flags);
    if (*sr_cmd) return cmd_sr(shared, sr);
    if (*eval_cmd) return cmd_eval(shared, ev);
    if (*count_cmd) return cmd_count_params(shared, count);
    if (*ablate_cmd) return cmd_ablate(shared, ablate);
    if (*sweep_cmd) return cmd_sweep_k(shared, sweep);
  } catch (const UsageError& e) {
    log(std::string("usage error: ") + e.what());
    return kUsage;
  } catch (const ConfigError& e) {
    log(std::string("configuration error: ") + e.what());
    return kUsage;
  } catch (const NumericError& e) {
    log(std::string("numeric failure: ") + e.what());
    return kNumeric;
  } catch (const FormatError& e) {
    log(std::string("data error: ") + e.what());
    return kData;
  } catch (const DimensionError& e) {
    log(std::string("data error: ") + e.what());
    return kData;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return kData;
  }
  return kUsage;
}
