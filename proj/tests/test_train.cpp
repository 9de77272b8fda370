#include <cmath>
#include <sstream>

#include "doctest.h"
#include "dpt/errors.hpp"
#include "dpt/rng.hpp"
#include "dpt/train.hpp"
#include "test_util.hpp"

using namespace dpt;

namespace {

DptConfig tiny() {
  DptConfig c;
  c.angular = 2;
  c.channels = 4;
  c.blocks = 1;
  c.imdb_blocks = 1;
  c.recon_channels = 8;
  c.salsa.stride = {4, 4};
  return c;
}

std::vector<PatchPair> tiny_data(std::uint64_t seed) {
  return make_patch_dataset(synthetic_scenes(seed, 2, 2, 1, 32, 2), 2, 16, 16);
}

}  // namespace

TEST_CASE("learning rate halves every fifteen epochs") {
  const TrainConfig cfg;
  CHECK(learning_rate(cfg, 0) == 2e-4);
  CHECK(learning_rate(cfg, 14) == 2e-4);
  CHECK(learning_rate(cfg, 15) == 1e-4);
  CHECK(learning_rate(cfg, 30) == 5e-5);
  CHECK(learning_rate(cfg, 45) == 2.5e-5);
  TrainConfig flat;
  flat.halve_every = 0;
  CHECK(learning_rate(flat, 100) == flat.lr0);
}

TEST_CASE("Adam matches a hand-rolled two-step trajectory") {
  Tensor p = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
  AdamState st;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double g1[3] = {0.2, -0.4, 0.0}, g2[3] = {-0.1, 0.3, 0.5};
  double x[3] = {0.5, -1.0, 2.0}, m[3] = {}, v[3] = {};
  int t = 0;
  for (const double* g : {g1, g2}) {
    p.zero_grad();
    std::copy(g, g + 3, p.mutable_grad().begin());
    adam_step({p}, st, lr);
    ++t;
    for (int i = 0; i < 3; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      x[i] -= lr * (m[i] / (1 - std::pow(b1, t))) / (std::sqrt(v[i] / (1 - std::pow(b2, t))) + eps);
    }
    for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(x[i]).epsilon(1e-15));
  }
  // first step moves each coordinate by lr against the gradient sign
  Tensor q = Tensor::from({2}, {1.0, 1.0}, true);
  AdamState fresh;
  q.mutable_grad()[0] = 3.0;
  q.mutable_grad()[1] = -0.5;
  adam_step({q}, fresh, 0.1);
  CHECK(q[0] == doctest::Approx(0.9));
  CHECK(q[1] == doctest::Approx(1.1));
}

TEST_CASE("training is bit-deterministic and lowers the loss") {
  const auto data = tiny_data(3);
  TrainConfig cfg;
  cfg.batch = 2;
  cfg.epochs = 3;
  cfg.lr0 = 1e-3;
  cfg.seed = 4;
  auto run = [&] {
    DptModel m(tiny(), cfg.seed);
    const TrainResult r = train(m, data, cfg);
    std::ostringstream log;
    r.write_log(log);
    std::vector<double> params;
    for (const auto& [n, t] : m.parameters()) params.insert(params.end(), t.data().begin(), t.data().end());
    return std::pair{log.str(), params};
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);

  DptModel m(tiny(), cfg.seed);
  const TrainResult r = train(m, data, cfg);
  CHECK(r.epochs_run == 3);
  CHECK(r.steps.size() == 3 * ((data.size() + 1) / 2));

  // fixed patches: the epoch loss should fall
  TrainConfig fixed = cfg;
  fixed.augment = false;
  fixed.epochs = 12;
  fixed.lr0 = 3e-3;
  DptModel f(tiny(), cfg.seed);
  const TrainResult fr = train(f, data, fixed);
  MESSAGE("epoch loss " << fr.epoch_loss.front() << " -> " << fr.epoch_loss.back());
  CHECK(fr.epoch_loss.back() < 0.9 * fr.epoch_loss.front());
}

TEST_CASE("max_steps stops early") {
  TrainConfig cfg;
  cfg.batch = 1;
  cfg.max_steps = 2;
  DptModel m(tiny(), 0);
  CHECK(train(m, tiny_data(1), cfg).steps.size() == 2);
}

TEST_CASE("training guards") {
  DptModel m(tiny(), 0);
  CHECK_THROWS_AS(train(m, {}, TrainConfig{}), ConfigError);
  auto data = tiny_data(2);
  data.resize(1);
  data[0].hr.tensor().mutable_data()[0] = std::nan("");
  TrainConfig cfg;
  cfg.augment = false;
  CHECK_THROWS_AS(train(m, data, cfg), NumericError);
}

TEST_CASE("named streams are independent and reproducible") {
  auto a = named_stream(7, "data"), b = named_stream(7, "data"), c = named_stream(7, "init"), d = named_stream(8, "data");
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
}

TEST_CASE("dataset helpers") {
  const auto scenes = synthetic_scenes(5, 2, 3, 3, 32, 2);
  CHECK(scenes.size() == 2);
  CHECK(scenes[0].hr.channels() == 3);
  const auto again = synthetic_scenes(5, 2, 3, 3, 32, 2);
  CHECK(test::bit_equal(scenes[1].lr.tensor().data(), again[1].lr.tensor().data()));
  const auto pairs = make_patch_dataset(scenes, 2, 16, 8);
  CHECK(pairs.size() == 2 * 9);
  CHECK(pairs[0].hr.channels() == 1);
  const MetricReport bic = evaluate_bicubic(pairs, 2);
  CHECK(bic.n_views == 18 * 9);
  CHECK(bic.mean_psnr > 20.0);
}

TEST_CASE("K sweep rejects out-of-range values") {
  CHECK_THROWS_AS(sweep_k({0}, tiny(), tiny_data(1), tiny_data(1), TrainConfig{}), ConfigError);
  CHECK_THROWS_AS(sweep_k({5}, tiny(), tiny_data(1), tiny_data(1), TrainConfig{}), ConfigError);
}
