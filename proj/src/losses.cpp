#include "mafn/losses.hpp"

#include <numeric>
#include <vector>

namespace mafn {

void LossWeights::validate() const {
  for (double v : {w_state, w_degradation, w_forecast, w_rul, lambda_smooth, lambda_late, lambda_early}) {
    if (!(v >= 0.0)) throw ContractError("loss weights must be non-negative");
  }
  if (w_state + w_degradation + w_forecast + w_rul <= 0.0) {
    throw ContractError("at least one head weight must be positive");
  }
  if (!(lambda_late > lambda_early)) throw ContractError("lambda_late must exceed lambda_early");
}

namespace {

double mask_total(std::span<const double> mask, std::size_t rows, const char* name) {
  if (mask.size() != rows) {
    throw DimensionError(std::string(name) + ": mask has " + std::to_string(mask.size()) + " entries for " +
                         std::to_string(rows) + " rows");
  }
  const double total = std::accumulate(mask.begin(), mask.end(), 0.0);
  if (!(total > 0.0)) throw ContractError(std::string(name) + ": mask has no valid positions");
  return total;
}

Tensor mask_column(std::span<const double> mask) {
  return Tensor::from({mask.size(), 1}, std::vector<double>(mask.begin(), mask.end()));
}

}  // namespace

Tensor state_loss(const Tensor& logits, std::span<const int> targets, std::span<const double> mask) {
  if (logits.rank() != 2) throw DimensionError("state_loss: logits must be [N x K], got " + shape_string(logits.shape()));
  const double total = mask_total(mask, logits.rows(), "state_loss");
  std::vector<int> safe(targets.begin(), targets.end());
  if (safe.size() != logits.rows()) throw DimensionError("state_loss: target count differs from logits rows");
  // Masked rows may carry any label; pin them to a valid column.
  for (std::size_t i = 0; i < safe.size(); ++i) {
    if (mask[i] == 0.0) safe[i] = 0;
  }
  Tensor picked = pick(log_softmax(logits, 1), safe);
  return scale(sum(mul(picked, mask_column(mask))), -1.0 / total);
}

Tensor degradation_loss(const Tensor& trend, double lambda_smooth) {
  Tensor t = trend.rank() == 1 ? reshape(trend, {1, trend.shape()[0]}) : trend;
  if (t.rank() != 2) throw DimensionError("degradation_loss: trend must be [H] or [B x H]");
  const std::size_t h = t.shape()[1];
  if (h < 2) throw ContractError("degradation_loss: needs a horizon of at least 2 steps");
  Tensor diff = slice(t, 1, 1, h) - slice(t, 1, 0, h - 1);
  Tensor mono = sum(relu(neg(diff)));
  Tensor smooth = sum(square(diff));
  const double norm = static_cast<double>(h - 1) * static_cast<double>(t.shape()[0]);
  return scale(mono + scale(smooth, lambda_smooth), 1.0 / norm);
}

Tensor forecast_loss(const Tensor& prediction, const Tensor& target, std::span<const double> mask) {
  if (prediction.shape() != target.shape() || prediction.rank() != 2) {
    throw DimensionError("forecast_loss: prediction " + shape_string(prediction.shape()) + " vs target " +
                         shape_string(target.shape()));
  }
  const double total = mask_total(mask, prediction.rows(), "forecast_loss");
  // Zero masked rows before squaring so garbage there cannot leak NaN/Inf.
  Tensor m = mask_column(mask);
  Tensor err = mul(prediction - target, m);
  return scale(sum(sum_axis(square(err), 1)), 1.0 / total);
}

Tensor rul_loss(const Tensor& prediction, const Tensor& target, double lambda_late, double lambda_early) {
  if (prediction.numel() == 0) throw ContractError("rul_loss: empty batch");
  if (prediction.shape() != target.shape()) {
    throw DimensionError("rul_loss: prediction " + shape_string(prediction.shape()) + " vs target " +
                         shape_string(target.shape()));
  }
  Tensor e = prediction - target;
  Tensor late = sum(square(relu(e)));
  Tensor early = sum(square(relu(neg(e))));
  return scale(scale(late, lambda_late) + scale(early, lambda_early), 1.0 / static_cast<double>(prediction.numel()));
}

Tensor total_loss(const LossComponents& c, const LossWeights& w) {
  const std::pair<const char*, const Tensor*> named[] = {
      {"state", &c.state}, {"degradation", &c.degradation}, {"forecast", &c.forecast}, {"rul", &c.rul}};
  for (const auto& [name, t] : named) {
    if (t->numel() != 1) throw DimensionError(std::string("total_loss: ") + name + " component is not a scalar");
    if (!std::isfinite(t->item())) throw NumericError(std::string("non-finite ") + name + " loss");
  }
  return scale(c.state, w.w_state) + scale(c.degradation, w.w_degradation) + scale(c.forecast, w.w_forecast) +
         scale(c.rul, w.w_rul);
}

}  // namespace mafn
