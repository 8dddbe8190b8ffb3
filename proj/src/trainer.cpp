#include "mafn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "mafn/log.hpp"

namespace mafn {

// ---- optimizer ------------------------------------------------------------------

void zero_grads(const NamedParams& params) {
  for (auto [name, t] : params) t.zero_grad();
}

double global_grad_norm(const NamedParams& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    if (t.has_grad()) sq += t.grad().squaredNorm();
  }
  return std::sqrt(sq);
}

double clip_grad_norm(const NamedParams& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto [name, t] : params) {
      if (t.has_grad()) t.mutable_grad() *= f;
    }
  }
  return norm;
}

void adam_step(const NamedParams& params, AdamState& state, const AdamOptions& o) {
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) throw ContractError("adam_step: parameter '" + name + "' has no gradient");
  }
  if (state.m.empty()) {
    for (const auto& [name, t] : params) {
      state.m.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t.numel())));
      state.v.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t.numel())));
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: optimizer state tracks another parameter set");
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].second;
    const Eigen::VectorXd& g = t.grad();
    if (state.m[i].size() != g.size()) {
      throw ContractError("adam_step: moment shape differs for '" + params[i].first + "'");
    }
    state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * g;
    state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * g.cwiseProduct(g);
    const auto m_hat = state.m[i].array() / c1;
    const auto v_hat = state.v[i].array() / c2;
    t.mutable_values().array() -= o.lr * m_hat / (v_hat.sqrt() + o.eps);
  }
}

// ---- training -------------------------------------------------------------------

namespace {

struct Accumulator {
  double state = 0, degradation = 0, forecast = 0, rul = 0, total = 0, weight = 0;

  void add(const LossReport& r, double w) {
    state += w * r.components.state.item();
    degradation += w * r.components.degradation.item();
    forecast += w * r.components.forecast.item();
    rul += w * r.components.rul.item();
    total += w * r.total.item();
    weight += w;
  }

  EpochLog mean(int epoch) const {
    return {epoch, state / weight, degradation / weight, forecast / weight, rul / weight, total / weight, 0.0};
  }
};

std::vector<std::vector<const WindowSample*>> batches_of(std::span<const WindowSample> samples,
                                                         std::span<const std::size_t> order, std::size_t size) {
  std::vector<std::vector<const WindowSample*>> out;
  for (std::size_t start = 0; start < order.size(); start += size) {
    const std::size_t end = std::min(order.size(), start + size);
    std::vector<const WindowSample*> b;
    for (std::size_t i = start; i < end; ++i) b.push_back(&samples[order[i]]);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

EpochLog evaluate_loss(const MafnModel& model, std::span<const WindowSample> samples, const TrainConfig& config) {
  if (samples.empty()) throw ContractError("evaluate_loss: no samples");
  NoGradGuard no_grad;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Accumulator acc;
  for (const auto& b : batches_of(samples, order, static_cast<std::size_t>(config.batch_size))) {
    acc.add(compute_loss(model, make_batch(b), config.loss), static_cast<double>(b.size()));
  }
  return acc.mean(0);
}

TrainResult train(const TrainData& data, const ModelDims& dims, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (data.train.empty()) throw ContractError("train: no training windows");
  if (data.validation.empty()) throw ContractError("train: no validation windows");

  MafnModel model(dims, config.seed);
  const NamedParams params = model.parameters();
  AdamState adam;
  const AdamOptions opts{config.learning_rate, config.beta1, config.beta2, config.adam_epsilon};
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  TrainResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  std::vector<Eigen::VectorXd> best_values;
  int bad_epochs = 0;

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    Accumulator acc;
    const auto batches = batches_of(data.train, order, static_cast<std::size_t>(config.batch_size));
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      zero_grads(params);
      LossReport r;
      try {
        r = compute_loss(model, make_batch(batches[bi]), config.loss);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(bi + 1));
      }
      backward(r.total);
      clip_grad_norm(params, config.grad_clip);
      adam_step(params, adam, opts);
      acc.add(r, static_cast<double>(batches[bi].size()));
    }
    EpochLog row = acc.mean(epoch);
    try {
      row.val_total = evaluate_loss(model, data.validation, config).total;
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " on validation after epoch " + std::to_string(epoch));
    }
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);

    if (row.val_total < result.best_val) {
      result.best_val = row.val_total;
      result.best_epoch = epoch;
      best_values.clear();
      for (const auto& [name, t] : params) best_values.push_back(t.values());
      bad_epochs = 0;
    } else if (++bad_epochs >= std::max(1, config.patience)) {
      log_info("early stop after epoch " + std::to_string(epoch) + " (best epoch " +
               std::to_string(result.best_epoch) + ")");
      break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].second;
    t.mutable_values() = best_values[i];
  }
  result.model = std::move(model);
  return result;
}

void write_training_log(std::ostream& os, std::span<const EpochLog> log) {
  os << "epoch,L_state,L_degradation,L_forecast,L_RUL,L_total,val_total\n";
  const auto old = os.precision(17);
  for (const auto& r : log) {
    os << r.epoch << ',' << r.state << ',' << r.degradation << ',' << r.forecast << ',' << r.rul << ',' << r.total
       << ',' << r.val_total << '\n';
  }
  os.precision(old);
}

// ---- evaluation -----------------------------------------------------------------

int min_history(const TrainConfig& config) { return config.short_history == "error" ? config.window : 1; }

RulPredictor model_predictor(const Checkpoint& ckpt) {
  return [&ckpt](const EvalCase& c) { return predict_rul(c.history, ckpt); };
}

RulPredictor oracle_predictor() {
  return [](const EvalCase& c) { return c.truth; };
}

RulPredictor checkpoint_predictor(const Checkpoint& ckpt) {
  return ckpt.is_oracle() ? oracle_predictor() : model_predictor(ckpt);
}

std::vector<CutoffRow> evaluate_cutoffs(std::span<const EngineRecord> engines, const RulPredictor& predict,
                                        double rul_cap, int min_history, std::span<const int> percents) {
  if (engines.empty()) throw ContractError("evaluate: no engines");
  std::vector<CutoffRow> rows;
  for (int pct : percents) {
    std::vector<double> pred, truth;
    int skipped = 0;
    for (const auto& e : engines) {
      Truncated t = truncate_at_fraction(e, pct / 100.0);
      if (static_cast<int>(t.record.length()) < std::max(1, min_history)) {
        ++skipped;
        continue;
      }
      EvalCase c{std::move(t.record), std::min(static_cast<double>(t.residual), rul_cap)};
      pred.push_back(predict(c));
      truth.push_back(c.truth);
    }
    if (skipped > 0) {
      log_warn(std::to_string(skipped) + " engine(s) skipped at " + std::to_string(pct) +
               "% cutoff: history too short");
    }
    CutoffRow row;
    row.cutoff_pct = pct;
    row.engines = static_cast<int>(pred.size());
    row.skipped = skipped;
    if (pred.empty()) {
      row.rmse = row.re = row.score = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.rmse = rmse(as_vector(pred), as_vector(truth));
      row.re = relative_error(as_vector(pred), as_vector(truth));
      row.score = prognostic_score(as_vector(pred), as_vector(truth));
    }
    rows.push_back(row);
  }
  return rows;
}

TestsetRow evaluate_testset(std::span<const EngineRecord> engines, std::span<const double> rul,
                            const RulPredictor& predict, double rul_cap, bool cap_truth) {
  if (engines.empty()) throw ContractError("evaluate: no test engines");
  if (engines.size() != rul.size()) {
    throw DimensionError("evaluate: " + std::to_string(engines.size()) + " test engines but " +
                         std::to_string(rul.size()) + " RUL values");
  }
  std::vector<double> pred, truth;
  for (std::size_t i = 0; i < engines.size(); ++i) {
    EvalCase c{engines[i], cap_truth ? std::min(rul[i], rul_cap) : rul[i]};
    pred.push_back(predict(c));
    truth.push_back(c.truth);
  }
  return {rmse(as_vector(pred), as_vector(truth)), prognostic_score(as_vector(pred), as_vector(truth)),
          static_cast<int>(engines.size())};
}

void write_cutoff_report(std::ostream& os, std::span<const CutoffRow> rows) {
  os << "cutoff_pct,rmse,re,score\n";
  const auto old = os.precision(10);
  for (const auto& r : rows) os << r.cutoff_pct << ',' << r.rmse << ',' << r.re << ',' << r.score << '\n';
  os.precision(old);
}

void write_testset_report(std::ostream& os, const TestsetRow& row) {
  os << "rmse,score\n";
  const auto old = os.precision(10);
  os << row.rmse << ',' << row.score << '\n';
  os.precision(old);
}

}  // namespace mafn
