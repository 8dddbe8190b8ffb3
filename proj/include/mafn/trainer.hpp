#ifndef MAFN_TRAINER_HPP
#define MAFN_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mafn/config.hpp"
#include "mafn/model.hpp"

namespace mafn {

// ---- optimizer ------------------------------------------------------------------

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::VectorXd> v;
  long step = 0;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Moments are allocated on the first call. A parameter without a
/// gradient raises a ContractError naming it.
void adam_step(const NamedParams& params, AdamState& state, const AdamOptions& options);

double global_grad_norm(const NamedParams& params);
/// Rescales all gradients so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(const NamedParams& params, double max_norm);

void zero_grads(const NamedParams& params);

// ---- training -------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double state = 0.0;
  double degradation = 0.0;
  double forecast = 0.0;
  double rul = 0.0;
  double total = 0.0;
  double val_total = 0.0;
};

struct TrainResult {
  MafnModel model;  // parameters of the best validation epoch
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val = 0.0;
};

struct TrainData {
  std::vector<WindowSample> train;
  std::vector<WindowSample> validation;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Shuffled mini-batch Adam with early stopping on validation L_total.
/// Deterministic in (data, config).
TrainResult train(const TrainData& data, const ModelDims& dims, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Mean loss components over samples (teacher-forced, no gradient).
EpochLog evaluate_loss(const MafnModel& model, std::span<const WindowSample> samples, const TrainConfig& config);

void write_training_log(std::ostream& os, std::span<const EpochLog> log);

// ---- evaluation -----------------------------------------------------------------

/// A truncated history with its true RUL. Model predictors ignore `truth`;
/// the oracle predictor returns it.
struct EvalCase {
  EngineRecord history;
  double truth = 0.0;
};

using RulPredictor = std::function<double(const EvalCase&)>;

RulPredictor model_predictor(const Checkpoint& ckpt);
RulPredictor oracle_predictor();
/// Oracle for "oracle" checkpoints, the network otherwise.
RulPredictor checkpoint_predictor(const Checkpoint& ckpt);

struct CutoffRow {
  int cutoff_pct = 0;
  double rmse = 0.0;
  double re = 0.0;
  double score = 0.0;
  int engines = 0;
  int skipped = 0;  // engines whose truncated history was shorter than min_history
};

inline constexpr int kCutoffPercents[] = {10, 20, 30, 40, 50, 60, 70, 80, 90};

/// Truncates every run-to-failure engine at each percentage and scores the
/// predictions against min(residual, rul_cap). Truncations keeping fewer
/// than `min_history` cycles are skipped and counted.
std::vector<CutoffRow> evaluate_cutoffs(std::span<const EngineRecord> engines, const RulPredictor& predict,
                                        double rul_cap, int min_history = 1,
                                        std::span<const int> percents = kCutoffPercents);

/// 1 when short histories are left-padded, else the window length.
int min_history(const TrainConfig& config);

struct TestsetRow {
  double rmse = 0.0;
  double score = 0.0;
  int engines = 0;
};

/// One prediction per test engine against the RUL file, truth capped at
/// rul_cap when `cap_truth` is set.
TestsetRow evaluate_testset(std::span<const EngineRecord> engines, std::span<const double> rul,
                            const RulPredictor& predict, double rul_cap, bool cap_truth = true);

void write_cutoff_report(std::ostream& os, std::span<const CutoffRow> rows);
void write_testset_report(std::ostream& os, const TestsetRow& row);

}  // namespace mafn

#endif  // MAFN_TRAINER_HPP
