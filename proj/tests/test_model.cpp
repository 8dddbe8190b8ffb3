#include <doctest.h>

#include <numeric>

#include "mafn/model.hpp"
#include "mafn/pipeline.hpp"
#include "mafn/synth.hpp"
#include "suites.hpp"

using namespace mafn;
using namespace mafn::testing;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.window = 8;
  c.horizon = 4;
  c.num_states = 2;
  c.embed_dim = 3;
  c.num_filters = 4;
  c.lstm_hidden = 5;
  c.attention_dim = 4;
  c.trend_dim = 2;
  c.fusion_widths = {6};
  c.rul_hidden1 = 6;
  c.rul_hidden2 = 4;
  return c;
}

SynthDataset small_fleet() {
  SynthSpec s;
  s.engines = 6;
  s.min_life = 30;
  s.max_life = 40;
  return synthesize(s);
}

Checkpoint untrained_checkpoint(const TrainConfig& config, const std::vector<EngineRecord>& records) {
  Preprocessed pre = preprocess(records, config);
  Checkpoint ck;
  ck.config = config;
  ck.stats = pre.stats;
  ck.clusters = pre.clusters;
  ck.model = MafnModel(ModelDims::from_config(config, static_cast<int>(kSelectedSensors.size())), config.seed);
  return ck;
}

void force_raw_rul(MafnModel& m, double raw) {
  m.rul_out.weight.mutable_values().setZero();
  m.rul_out.bias.mutable_values().setConstant(raw / m.dims.rul_scale);
}

}  // namespace

TEST_CASE("forward output shapes and attention normalization") {
  const ModelDims d = ModelDims::from_config(small_config(), static_cast<int>(kSelectedSensors.size()));
  MafnModel model(d, 1);
  std::mt19937_64 rng(1);
  std::vector<WindowSample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back(random_window(d, rng, 4 - i));
  const Batch batch = make_batch(samples);
  for (bool tf : {true, false}) {
    MafnOutput out = model.forward(batch, tf);
    CHECK(out.state_logits.shape() == Shape{12, 2});
    CHECK(out.trend.shape() == Shape{3, 4});
    CHECK(out.forecast.shape() == Shape{12, 11});
    CHECK(out.rul.shape() == Shape{3, 1});
    CHECK(out.attention.shape() == Shape{3, 8});
    CHECK(out.trend_vectors.size() == 4);
    CHECK(out.trend_vectors[0].shape() == Shape{3, 2});
    CHECK(out.fused_states.size() == 12);
    for (std::size_t b = 0; b < 3; ++b) {
      double s = 0;
      for (std::size_t t = 0; t < 8; ++t) s += out.attention(b, t);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    CHECK(out.forecast.values().allFinite());
  }

  SampleOutput one = model.forward(samples[0]);
  CHECK(one.state_logits.shape() == Shape{4, 2});
  CHECK(one.trend.shape() == Shape{4});
  CHECK(one.forecast.shape() == Shape{4, 11});
  CHECK(one.rul.rank() == 0);
  CHECK(one.attention.shape() == Shape{8});
  CHECK(one.states.size() == 4);
}

TEST_CASE("batched forward agrees with per-sample forward") {
  const ModelDims d = ModelDims::from_config(small_config(), static_cast<int>(kSelectedSensors.size()));
  MafnModel model(d, 2);
  std::mt19937_64 rng(2);
  std::vector<WindowSample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back(random_window(d, rng, 4));
  MafnOutput all = model.forward(make_batch(samples), false);
  for (std::size_t b = 0; b < 3; ++b) {
    SampleOutput one = model.forward(samples[b]);
    CHECK(std::abs(one.rul.item() - all.rul(b, 0)) < 1e-12);
    for (std::size_t h = 0; h < 4; ++h) {
      CHECK(one.states[h] == all.fused_states[h * 3 + b]);
      CHECK(std::abs(one.forecast(h, 5) - all.forecast(h * 3 + b, 5)) < 1e-12);
    }
  }
}

TEST_CASE("teacher forcing feeds the true future states to fusion") {
  const ModelDims d = ModelDims::from_config(small_config(), static_cast<int>(kSelectedSensors.size()));
  MafnModel model(d, 3);
  std::mt19937_64 rng(3);
  std::vector<WindowSample> samples = {random_window(d, rng, 4), random_window(d, rng, 2)};
  const Batch batch = make_batch(samples);
  MafnOutput tf = model.forward(batch, true);
  CHECK(tf.fused_states == batch.future_states_flat);

  MafnOutput free = model.forward(batch, false);
  for (std::size_t r = 0; r < 8; ++r) {
    const int argmax = free.state_logits(r, 1) > free.state_logits(r, 0) ? 1 : 0;
    CHECK(free.fused_states[r] == argmax);
  }
}

TEST_CASE("forward is bit-identical for identical parameters and inputs") {
  const ModelDims d = ModelDims::from_config(small_config(), static_cast<int>(kSelectedSensors.size()));
  std::mt19937_64 rng(4);
  const WindowSample s = random_window(d, rng, 4);
  MafnModel a(d, 9), b(d, 9);
  SampleOutput x = a.forward(s), y = b.forward(s);
  CHECK(x.forecast.values() == y.forecast.values());
  CHECK(x.rul.item() == y.rul.item());
  CHECK(x.attention.values() == y.attention.values());
  MafnModel c(d, 10);
  CHECK(c.forward(s).rul.item() != x.rul.item());
}

TEST_CASE("full model gradient matches finite differences on the tiny configuration") {
  const GradReport r = model_gradient_check(3);
  CAPTURE(r.worst);
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("every parameter gets a gradient even without valid horizon steps") {
  const ModelDims d = tiny_dims();
  MafnModel model(d, 5);
  std::mt19937_64 rng(5);
  std::vector<WindowSample> samples = {random_window(d, rng, 0)};
  LossReport r = compute_loss(model, make_batch(samples), LossWeights{});
  CHECK(r.components.state.item() == 0.0);
  CHECK(r.components.forecast.item() == 0.0);
  backward(r.total);
  for (const auto& [name, t] : model.parameters()) {
    CAPTURE(name);
    CHECK(t.has_grad());
  }
}

TEST_CASE("parameter names are hierarchical and sorted") {
  MafnModel model(tiny_dims(), 1);
  const NamedParams p = model.parameters();
  std::vector<std::string> names;
  for (const auto& [n, t] : p) names.push_back(n);
  CHECK(std::is_sorted(names.begin(), names.end()));
  CHECK(std::find(names.begin(), names.end(), "encoder.bilstm.fwd.W_i") != names.end());
  CHECK(std::find(names.begin(), names.end(), "embedding.weight") != names.end());
  std::size_t total = 0;
  for (const auto& [n, t] : p) total += t.numel();
  CHECK(model.parameter_count() == total);
}

TEST_CASE("fusion input is trend vector plus state embedding") {
  TrainConfig c = small_config();
  MafnModel m(ModelDims::from_config(c, 11), 1);
  CHECK(m.fusion.front().in() == static_cast<std::size_t>(c.trend_dim + c.embed_dim));
  CHECK(m.fusion_out.out() == 11);
  CHECK(m.state_out.out() == 2);
  CHECK(m.rul_out.out() == 1);
  CHECK(m.rul_out.activation == Activation::Identity);

  c.fusion_widths = {};
  MafnModel direct(ModelDims::from_config(c, 11), 1);
  CHECK(direct.fusion_out.in() == static_cast<std::size_t>(c.trend_dim + c.embed_dim));
}

TEST_CASE("forward rejects a wrong window length naming the stage") {
  const ModelDims d = tiny_dims();
  MafnModel m(d, 1);
  ModelDims longer = d;
  longer.window = 5;
  std::mt19937_64 rng(1);
  try {
    m.forward(random_window(longer, rng, 3));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("input stage") != std::string::npos);
  }
}

TEST_CASE("model save and load round trip and mismatch errors") {
  const ModelDims d = tiny_dims();
  MafnModel a(d, 1), b(d, 2);
  ParamFile f;
  a.save_to(f);
  b.load_from(f);
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second.values() == pb[i].second.values());

  ModelDims wider = d;
  wider.lstm_hidden = 4;
  MafnModel c(wider, 1);
  CHECK_THROWS_AS(c.load_from(f), DimensionError);

  MafnModel copy = a.clone();
  copy.rul_out.bias.mutable_values().setConstant(7.0);
  CHECK(a.rul_out.bias.values()(0) != 7.0);
}

TEST_CASE("checkpoint file round trip") {
  const TrainConfig config = small_config();
  const SynthDataset fleet = small_fleet();
  Checkpoint ck = untrained_checkpoint(config, fleet.train);
  ck.validation_units = {2, 5};
  TempDir dir("ckpt");
  ck.save(dir / "c.bin");
  Checkpoint back = Checkpoint::load(dir / "c.bin");
  CHECK(back.kind == "mafn");
  CHECK(back.config.dump() == config.dump());
  CHECK(back.validation_units == ck.validation_units);
  CHECK(back.stats.min == ck.stats.min);
  CHECK(back.clusters.centroids == ck.clusters.centroids);
  CHECK(predict_rul(fleet.train[0], back) == predict_rul(fleet.train[0], ck));

  Checkpoint oracle;
  oracle.kind = Checkpoint::kKindOracle;
  oracle.config = config;
  oracle.stats = ck.stats;
  oracle.clusters = ck.clusters;
  oracle.save(dir / "o.bin");
  CHECK(Checkpoint::load(dir / "o.bin").is_oracle());
  CHECK_THROWS_AS(predict_rul(fleet.train[0], oracle), ContractError);
}

TEST_CASE("predicted RUL is clamped to [0, cap]") {
  CHECK(clamp_rul(-3, 125) == 0);
  CHECK(clamp_rul(140, 125) == 125);
  CHECK(clamp_rul(60, 125) == 60);

  const SynthDataset fleet = small_fleet();
  Checkpoint ck = untrained_checkpoint(small_config(), fleet.train);
  force_raw_rul(ck.model, -3.0);
  CHECK(predict_rul(fleet.train[1], ck) == 0.0);
  force_raw_rul(ck.model, 140.0);
  CHECK(predict_rul(fleet.train[1], ck) == 125.0);
  force_raw_rul(ck.model, 42.0);
  CHECK(std::abs(predict_rul(fleet.train[1], ck) - 42.0) < 1e-9);
}

TEST_CASE("short histories: left padding or an error") {
  TrainConfig config = small_config();
  const SynthDataset fleet = small_fleet();
  Checkpoint ck = untrained_checkpoint(config, fleet.train);
  PreparedEngine e = prepare(fleet.train[0], ck);

  // Exactly the window: one window of the last cycles.
  EngineRecord exact = fleet.train[0];
  exact.cycles.resize(8);
  WindowSample w = last_window(prepare(exact, ck), config);
  CHECK(w.inputs.row(0) == e.sensors.row(0));
  CHECK(w.inputs.row(7) == e.sensors.row(7));

  EngineRecord shorter = fleet.train[0];
  shorter.cycles.resize(3);
  WindowSample padded = last_window(prepare(shorter, ck), config);
  for (int t = 0; t < 6; ++t) CHECK(padded.inputs.row(t) == e.sensors.row(0));
  CHECK(padded.inputs.row(6) == e.sensors.row(1));
  CHECK(padded.inputs.row(7) == e.sensors.row(2));
  CHECK(std::isfinite(predict_rul(shorter, ck)));

  ck.config.short_history = "error";
  try {
    predict_rul(shorter, ck);
    FAIL("expected ContractError");
  } catch (const ContractError& err) {
    CHECK(std::string(err.what()).find("repeat_first") != std::string::npos);
  }
  EngineRecord empty = fleet.train[0];
  empty.cycles.clear();
  CHECK_THROWS_AS(last_window(prepare(empty, ck), config), ContractError);
}

TEST_CASE("forecast trajectory denormalizes the normalized forecast") {
  TrainConfig config = small_config();
  const SynthDataset fleet = small_fleet();
  Checkpoint ck = untrained_checkpoint(config, fleet.train);
  Forecast f = forecast_trajectory(fleet.train[2], ck);
  CHECK(f.sensors.rows() == 4);
  CHECK(f.sensors.cols() == 11);
  CHECK(f.states.size() == 4);
  CHECK(f.trend.size() == 4);
  for (Eigen::Index h = 0; h < 4; ++h) {
    for (Eigen::Index c = 0; c < 11; ++c) {
      CHECK(std::abs(normalize(f.sensors(h, c), ck.stats, c) - f.normalized(h, c)) <= 1e-12);
    }
  }

  config.horizon = 1;
  Checkpoint one = untrained_checkpoint(config, fleet.train);
  Forecast g = forecast_trajectory(fleet.train[2], one);
  CHECK(g.sensors.rows() == 1);
  CHECK(g.states.size() == 1);
}

TEST_CASE("horizon 1 trains without a degradation term") {
  ModelDims d = tiny_dims();
  d.horizon = 1;
  MafnModel m(d, 1);
  std::mt19937_64 rng(6);
  std::vector<WindowSample> samples = {random_window(d, rng, 1)};
  LossReport r = compute_loss(m, make_batch(samples), LossWeights{});
  CHECK(r.components.degradation.item() == 0.0);
  backward(r.total);
  for (const auto& [name, t] : m.parameters()) CHECK(t.has_grad());
}
