#include "mafn/model.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace mafn {

// ---- dims -----------------------------------------------------------------------

ModelDims ModelDims::from_config(const TrainConfig& c, int sensors) {
  ModelDims d;
  d.sensors = sensors;
  d.states = c.num_states;
  d.window = c.window;
  d.horizon = c.horizon;
  d.embed_dim = c.embed_dim;
  d.kernel_size = c.kernel_size;
  d.num_filters = c.num_filters;
  d.lstm_hidden = c.lstm_hidden;
  d.attention_dim = c.attention_dim;
  d.trend_dim = c.trend_dim;
  d.fusion_widths = c.fusion_widths;
  d.rul_hidden1 = c.rul_hidden1;
  d.rul_hidden2 = c.rul_hidden2;
  d.rul_scale = c.rul_scale;
  d.validate();
  return d;
}

void ModelDims::validate() const {
  for (int v : {sensors, states, window, horizon, embed_dim, kernel_size, num_filters, lstm_hidden, attention_dim,
                trend_dim, rul_hidden1, rul_hidden2}) {
    if (v < 1) throw ContractError("model dimensions must be positive");
  }
  for (int w : fusion_widths) {
    if (w < 1) throw ContractError("fusion widths must be positive");
  }
  if (!(rul_scale > 0)) throw ContractError("rul_scale must be positive");
  if (kernel_size > 2 * window) throw ContractError("kernel_size exceeds twice the window");
}

// ---- batching -------------------------------------------------------------------

Batch make_batch(std::span<const WindowSample* const> samples) {
  if (samples.empty()) throw ContractError("make_batch: no samples");
  const WindowSample& first = *samples[0];
  const auto T = static_cast<std::size_t>(first.inputs.rows());
  const auto D = static_cast<std::size_t>(first.inputs.cols());
  const std::size_t H = first.mask.size();
  const std::size_t B = samples.size();
  for (const WindowSample* s : samples) {
    if (static_cast<std::size_t>(s->inputs.rows()) != T || static_cast<std::size_t>(s->inputs.cols()) != D ||
        s->input_states.size() != T || s->mask.size() != H || s->future_states.size() != H ||
        static_cast<std::size_t>(s->future_sensors.rows()) != H ||
        (H > 0 && static_cast<std::size_t>(s->future_sensors.cols()) != D)) {
      throw DimensionError("make_batch: sample from unit " + std::to_string(s->unit_id) +
                           " does not match the batch layout");
    }
  }

  Batch batch;
  batch.size = B;
  batch.inputs.reserve(T);
  batch.input_states.assign(T, std::vector<int>(B));
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> v(B * D);
    for (std::size_t b = 0; b < B; ++b) {
      const auto row = samples[b]->inputs.row(static_cast<Eigen::Index>(t));
      std::copy(row.data(), row.data() + D, v.begin() + static_cast<std::ptrdiff_t>(b * D));
      batch.input_states[t][b] = samples[b]->input_states[t];
    }
    batch.inputs.push_back(Tensor::from({B, D}, std::move(v)));
  }

  batch.future_states.assign(H, std::vector<int>(B));
  batch.future_states_flat.resize(H * B);
  batch.mask.resize(H * B);
  std::vector<double> future(H * B * D);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t r = h * B + b;
      batch.future_states[h][b] = samples[b]->future_states[h];
      batch.future_states_flat[r] = samples[b]->future_states[h];
      batch.mask[r] = samples[b]->mask[h];
      const auto row = samples[b]->future_sensors.row(static_cast<Eigen::Index>(h));
      std::copy(row.data(), row.data() + D, future.begin() + static_cast<std::ptrdiff_t>(r * D));
    }
  }
  if (H > 0) batch.future_sensors = Tensor::from({H * B, D}, std::move(future));

  std::vector<double> rul(B);
  for (std::size_t b = 0; b < B; ++b) rul[b] = samples[b]->rul;
  batch.rul = Tensor::from({B, 1}, std::move(rul));
  return batch;
}

Batch make_batch(std::span<const WindowSample> samples) {
  std::vector<const WindowSample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(std::span<const WindowSample* const>(ptrs));
}

// ---- model ----------------------------------------------------------------------

MafnModel::MafnModel(const ModelDims& d, std::uint64_t seed) : dims(d) {
  dims.validate();
  std::mt19937_64 rng(seed);
  const auto S = static_cast<std::size_t>(d.sensors);
  const auto K = static_cast<std::size_t>(d.states);
  const auto m = static_cast<std::size_t>(d.embed_dim);
  const auto Hl = static_cast<std::size_t>(d.lstm_hidden);
  const auto enc = 2 * Hl;
  const auto dd = static_cast<std::size_t>(d.trend_dim);

  embedding = EmbeddingTable(K, m, rng);
  conv = Conv1dLayer(static_cast<std::size_t>(d.kernel_size), S + m, static_cast<std::size_t>(d.num_filters),
                     Activation::Relu, rng);
  encoder_fwd = LstmCell(static_cast<std::size_t>(d.num_filters), Hl, rng);
  encoder_bwd = LstmCell(static_cast<std::size_t>(d.num_filters), Hl, rng);
  attention = AttentionParams(enc, static_cast<std::size_t>(d.attention_dim),
                              static_cast<std::size_t>(d.attention_dim), rng);

  trend_init_h = DenseLayer(enc, dd, Activation::Identity, rng);
  trend_init_c = DenseLayer(enc, dd, Activation::Identity, rng);
  trend_cell = LstmCell(enc, dd, rng);
  trend_out = DenseLayer(dd, 1, Activation::Identity, rng);

  state_init_h = DenseLayer(enc, Hl, Activation::Identity, rng);
  state_init_c = DenseLayer(enc, Hl, Activation::Identity, rng);
  state_cell = LstmCell(enc, Hl, rng);
  state_out = DenseLayer(Hl, K, Activation::Identity, rng);

  std::size_t in = dd + m;
  fusion.clear();
  for (int w : d.fusion_widths) {
    fusion.emplace_back(in, static_cast<std::size_t>(w), Activation::Relu, rng);
    in = static_cast<std::size_t>(w);
  }
  fusion_out = DenseLayer(in, S, Activation::Identity, rng);

  rul1 = DenseLayer(enc, static_cast<std::size_t>(d.rul_hidden1), Activation::Relu, rng);
  rul2 = DenseLayer(static_cast<std::size_t>(d.rul_hidden1), static_cast<std::size_t>(d.rul_hidden2),
                    Activation::Relu, rng);
  rul_out = DenseLayer(static_cast<std::size_t>(d.rul_hidden2), 1, Activation::Identity, rng);
}

NamedParams MafnModel::parameters() const {
  NamedParams p;
  embedding.collect("embedding", p);
  conv.collect("encoder.conv", p);
  encoder_fwd.collect("encoder.bilstm.fwd", p);
  encoder_bwd.collect("encoder.bilstm.bwd", p);
  attention.collect("encoder.attention", p);
  trend_init_h.collect("trend.init_h", p);
  trend_init_c.collect("trend.init_c", p);
  trend_cell.collect("trend.lstm", p);
  trend_out.collect("trend.out", p);
  state_init_h.collect("state.init_h", p);
  state_init_c.collect("state.init_c", p);
  state_cell.collect("state.lstm", p);
  state_out.collect("state.out", p);
  for (std::size_t i = 0; i < fusion.size(); ++i) fusion[i].collect("fusion." + std::to_string(i), p);
  fusion_out.collect("fusion.out", p);
  rul1.collect("rul.dense1", p);
  rul2.collect("rul.dense2", p);
  rul_out.collect("rul.out", p);
  std::sort(p.begin(), p.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return p;
}

std::size_t MafnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.numel();
  return n;
}

namespace {

Tensor initial_state(const Tensor& context, const DenseLayer& proj) { return dense(context, proj); }

std::vector<int> argmax_rows(const Tensor& logits) {
  const auto m = logits.matrix();
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c) {
      if (m(r, c) > m(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

Tensor stack(const Sequence& parts, int axis) {
  return parts.size() == 1 ? parts[0] : concat(std::span<const Tensor>(parts), axis);
}

}  // namespace

MafnOutput MafnModel::forward(const Batch& batch, bool teacher_forcing) const {
  const std::size_t B = batch.size;
  const std::size_t T = batch.inputs.size();
  const auto H = static_cast<std::size_t>(dims.horizon);
  const auto S = static_cast<std::size_t>(dims.sensors);
  if (T != static_cast<std::size_t>(dims.window)) {
    throw DimensionError("input stage: window of " + std::to_string(T) + " steps, model expects " +
                         std::to_string(dims.window));
  }
  if (batch.input_states.size() != T) throw DimensionError("input stage: state ids do not cover the window");
  for (const auto& x : batch.inputs) {
    if (x.shape() != Shape{B, S}) {
      throw DimensionError("input stage: step shape " + shape_string(x.shape()) + ", expected " +
                           shape_string({B, S}));
    }
  }
  if (teacher_forcing && batch.future_states.size() != H) {
    throw DimensionError("fusion stage: teacher forcing needs " + std::to_string(H) + " future state rows");
  }

  Sequence augmented;
  augmented.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    augmented.push_back(concat({batch.inputs[t], embed(batch.input_states[t], embedding)}, 1));
  }
  const Sequence features = conv1d(augmented, conv);
  const Sequence encoded = bilstm(features, encoder_fwd, encoder_bwd);
  AttentionResult att = mafn::attention(encoded, attention);
  const Tensor& context = att.context;

  MafnOutput out;
  out.attention = att.weights;
  out.rul = scale(dense(dense(dense(context, rul1), rul2), rul_out), dims.rul_scale);

  // Both decoders read the context at every step and start from a linear
  // projection of it.
  const FusedLstm trend_lstm(trend_cell);
  const FusedLstm state_lstm(state_cell);
  LstmState ts{initial_state(context, trend_init_h), initial_state(context, trend_init_c)};
  LstmState ss{initial_state(context, state_init_h), initial_state(context, state_init_c)};

  Sequence trend_steps, logits, forecasts;
  trend_steps.reserve(H);
  logits.reserve(H);
  forecasts.reserve(H);
  out.trend_vectors.reserve(H);
  out.fused_states.reserve(H * B);
  for (std::size_t h = 0; h < H; ++h) {
    ts = lstm_step(context, ts, trend_lstm);
    ss = lstm_step(context, ss, state_lstm);
    out.trend_vectors.push_back(ts.h);
    trend_steps.push_back(dense(ts.h, trend_out));
    logits.push_back(dense(ss.h, state_out));

    std::vector<int> fused = teacher_forcing ? batch.future_states[h] : argmax_rows(logits.back());
    Tensor f = concat({ts.h, embed(fused, embedding)}, 1);
    for (const auto& layer : fusion) f = dense(f, layer);
    forecasts.push_back(dense(f, fusion_out));
    out.fused_states.insert(out.fused_states.end(), fused.begin(), fused.end());
  }
  out.trend = stack(trend_steps, 1);
  out.state_logits = stack(logits, 0);
  out.forecast = stack(forecasts, 0);
  return out;
}

SampleOutput MafnModel::forward(const WindowSample& sample, bool teacher_forcing) const {
  const WindowSample* one[] = {&sample};
  MafnOutput o = forward(make_batch(std::span<const WindowSample* const>(one)), teacher_forcing);
  SampleOutput s;
  s.state_logits = o.state_logits;
  s.trend = reshape(o.trend, {o.trend.numel()});
  s.forecast = o.forecast;
  s.rul = reshape(o.rul, {});
  s.attention = reshape(o.attention, {o.attention.numel()});
  s.states = std::move(o.fused_states);
  return s;
}

void MafnModel::save_to(ParamFile& file, const std::string& prefix) const {
  for (const auto& [name, t] : parameters()) file.put(prefix + "." + name, t);
}

void MafnModel::load_from(const ParamFile& file, const std::string& prefix) {
  for (auto& [name, t] : parameters()) {
    const std::string key = prefix + "." + name;
    if (!file.has_array(key)) throw DimensionError("checkpoint lacks parameter " + key);
    Tensor stored = file.tensor(key);
    if (stored.shape() != t.shape()) {
      throw DimensionError("parameter " + key + ": expected " + shape_string(t.shape()) + ", found " +
                           shape_string(stored.shape()));
    }
    t.mutable_values() = stored.values();
  }
}

void MafnModel::copy_values_from(const MafnModel& other) {
  NamedParams mine = parameters();
  NamedParams theirs = other.parameters();
  if (mine.size() != theirs.size()) throw DimensionError("copy_values_from: parameter sets differ");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].first != theirs[i].first || mine[i].second.shape() != theirs[i].second.shape()) {
      throw DimensionError("copy_values_from: parameter " + mine[i].first + " differs");
    }
    mine[i].second.mutable_values() = theirs[i].second.values();
  }
}

MafnModel MafnModel::clone() const {
  MafnModel copy(dims, 0);
  copy.copy_values_from(*this);
  return copy;
}

// ---- losses ---------------------------------------------------------------------

LossReport compute_loss(const MafnModel& model, const Batch& batch, const LossWeights& w, bool teacher_forcing) {
  MafnOutput out = model.forward(batch, teacher_forcing);
  const double valid = std::accumulate(batch.mask.begin(), batch.mask.end(), 0.0);
  // A zero-weighted sum keeps a head on the tape when its loss is undefined,
  // so every parameter still receives a (zero) gradient.
  auto detached_zero = [](const Tensor& t) { return scale(sum(t), 0.0); };

  LossReport r;
  r.components.state =
      valid > 0 ? state_loss(out.state_logits, batch.future_states_flat, batch.mask) : detached_zero(out.state_logits);
  r.components.forecast =
      valid > 0 ? forecast_loss(out.forecast, batch.future_sensors, batch.mask) : detached_zero(out.forecast);
  r.components.degradation =
      model.dims.horizon >= 2 ? degradation_loss(out.trend, w.lambda_smooth) : detached_zero(out.trend);
  r.components.rul = rul_loss(out.rul, batch.rul, w.lambda_late, w.lambda_early);
  r.total = total_loss(r.components, w);
  return r;
}

// ---- checkpoint -----------------------------------------------------------------

ParamFile Checkpoint::to_file() const {
  ParamFile f;
  f.strings["kind"] = kind;
  f.strings["config"] = config.dump();
  std::ostringstream units;
  for (std::size_t i = 0; i < validation_units.size(); ++i) units << (i ? "," : "") << validation_units[i];
  f.strings["validation_units"] = units.str();
  stats.save_to(f);
  clusters.save_to(f);
  if (!is_oracle()) model.save_to(f);
  return f;
}

Checkpoint Checkpoint::from_file(const ParamFile& f) {
  Checkpoint c;
  c.kind = f.string("kind");
  if (c.kind != kKindModel && c.kind != kKindOracle) throw DataError("unknown checkpoint kind '" + c.kind + "'");
  try {
    c.config = TrainConfig::from_json(nlohmann::json::parse(f.string("config")));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  c.stats = NormalizationStats::load_from(f);
  c.clusters = ClusterModel::load_from(f);
  std::istringstream units(f.string("validation_units"));
  for (std::string tok; std::getline(units, tok, ',');) c.validation_units.push_back(std::stoi(tok));
  if (!c.is_oracle()) {
    c.model = MafnModel(ModelDims::from_config(c.config, static_cast<int>(c.stats.channels())), 0);
    c.model.load_from(f);
  }
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const { to_file().save(path); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return from_file(ParamFile::load(path)); }

// ---- inference ------------------------------------------------------------------

PreparedEngine prepare(const EngineRecord& record, const Checkpoint& ckpt) {
  return prepare_engine(select_sensors(record), ckpt.stats, ckpt.clusters,
                        parse_cluster_input(ckpt.config.cluster_features));
}

WindowSample last_window(const PreparedEngine& engine, const TrainConfig& config) {
  const auto L = static_cast<int>(engine.length());
  const int W = config.window;
  const int H = config.horizon;
  if (L == 0) throw ContractError("unit " + std::to_string(engine.unit_id) + " has an empty history");
  if (L < W && config.short_history == "error") {
    throw ContractError("unit " + std::to_string(engine.unit_id) + " has " + std::to_string(L) +
                        " cycles, fewer than the window of " + std::to_string(W) +
                        "; set short_history to \"repeat_first\" to left-pad by repeating the first cycle");
  }
  const Eigen::Index D = engine.sensors.cols();
  WindowSample s;
  s.unit_id = engine.unit_id;
  s.cutoff = L;
  s.inputs.resize(W, D);
  s.input_states.resize(static_cast<std::size_t>(W));
  for (int t = 0; t < W; ++t) {
    const int src = std::max(0, L - W + t);
    s.inputs.row(t) = engine.sensors.row(src);
    s.input_states[static_cast<std::size_t>(t)] = engine.states[static_cast<std::size_t>(src)];
  }
  s.future_states.assign(static_cast<std::size_t>(H), 0);
  s.future_sensors = RowMatrix::Zero(H, D);
  s.mask.assign(static_cast<std::size_t>(H), 0.0);
  return s;
}

double clamp_rul(double raw, double cap) { return std::clamp(raw, 0.0, cap); }

namespace {

const MafnModel& network(const Checkpoint& ckpt) {
  if (ckpt.is_oracle()) throw ContractError("an oracle checkpoint has no network to run");
  return ckpt.model;
}

}  // namespace

double predict_rul(const EngineRecord& history, const Checkpoint& ckpt) {
  const MafnModel& model = network(ckpt);
  NoGradGuard no_grad;
  SampleOutput out = model.forward(last_window(prepare(history, ckpt), ckpt.config), false);
  return clamp_rul(out.rul.item(), ckpt.config.rul_cap);
}

Forecast forecast_trajectory(const EngineRecord& history, const Checkpoint& ckpt) {
  const MafnModel& model = network(ckpt);
  NoGradGuard no_grad;
  SampleOutput out = model.forward(last_window(prepare(history, ckpt), ckpt.config), false);
  Forecast f;
  f.normalized = out.forecast.matrix();
  f.sensors = denormalize(f.normalized, ckpt.stats);
  f.states = out.states;
  f.trend.assign(out.trend.values().data(), out.trend.values().data() + out.trend.numel());
  f.rul = clamp_rul(out.rul.item(), ckpt.config.rul_cap);
  return f;
}

}  // namespace mafn
