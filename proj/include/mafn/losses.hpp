#ifndef MAFN_LOSSES_HPP
#define MAFN_LOSSES_HPP

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>

#include "mafn/errors.hpp"
#include "mafn/tensor.hpp"

namespace mafn {

struct LossWeights {
  double w_state = 0.5;
  double w_degradation = 0.3;
  double w_forecast = 1.0;
  double w_rul = 1.0;
  double lambda_smooth = 0.1;
  double lambda_late = 2.0;
  double lambda_early = 1.0;

  /// Throws ContractError unless every term is non-negative, some head
  /// weight is positive and lambda_late > lambda_early.
  void validate() const;
};

/// Masked sparse categorical cross-entropy over rows of `logits` [N x K]:
/// -(sum_t m_t log softmax(logits_t)[c_t]) / sum_t m_t.
Tensor state_loss(const Tensor& logits, std::span<const int> targets, std::span<const double> mask);

/// Monotonicity hinge plus smoothness penalty on a trend, divided by (H - 1).
/// `trend` is [H] for one sequence or [B x H] for a batch (averaged over B).
Tensor degradation_loss(const Tensor& trend, double lambda_smooth);

/// Masked MSE: squared error summed over channels, averaged over valid rows.
/// `prediction`, `target` are [N x d].
Tensor forecast_loss(const Tensor& prediction, const Tensor& target, std::span<const double> mask);

/// Asymmetric squared loss, mean over the batch.
Tensor rul_loss(const Tensor& prediction, const Tensor& target, double lambda_late, double lambda_early);

struct LossComponents {
  Tensor state;
  Tensor degradation;
  Tensor forecast;
  Tensor rul;
};

/// Weighted sum of the four head losses. A NaN component raises a
/// NumericError naming it.
Tensor total_loss(const LossComponents& components, const LossWeights& weights);

// ---- evaluation metrics ----------------------------------------------------------

namespace detail {
template <typename A, typename B>
void check_metric_args(const Eigen::DenseBase<A>& pred, const Eigen::DenseBase<B>& truth, const char* name) {
  if (pred.size() == 0) throw ContractError(std::string(name) + ": empty input");
  if (pred.size() != truth.size()) {
    throw DimensionError(std::string(name) + ": " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " targets");
  }
}
}  // namespace detail

inline constexpr double kRelativeErrorEpsilon = 1e-8;

template <typename A, typename B>
double rmse(const Eigen::DenseBase<A>& pred, const Eigen::DenseBase<B>& truth) {
  detail::check_metric_args(pred, truth, "rmse");
  const auto diff = pred.derived().array().template cast<double>() - truth.derived().array().template cast<double>();
  return std::sqrt(diff.square().mean());
}

/// Mean of |pred - truth| / (truth + eps).
template <typename A, typename B>
double relative_error(const Eigen::DenseBase<A>& pred, const Eigen::DenseBase<B>& truth,
                      double eps = kRelativeErrorEpsilon) {
  detail::check_metric_args(pred, truth, "relative_error");
  const auto p = pred.derived().array().template cast<double>();
  const auto t = truth.derived().array().template cast<double>();
  return ((p - t).abs() / (t + eps)).mean();
}

/// Asymmetric exponential score summed over units: exp(-d/13) - 1 when the
/// prediction is early or exact (d <= 0), exp(d/10) - 1 when late.
template <typename A, typename B>
double prognostic_score(const Eigen::DenseBase<A>& pred, const Eigen::DenseBase<B>& truth) {
  detail::check_metric_args(pred, truth, "score");
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.derived()(i)) - static_cast<double>(truth.derived()(i));
    total += d <= 0.0 ? std::exp(-d / 13.0) - 1.0 : std::exp(d / 10.0) - 1.0;
  }
  return total;
}

inline Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

}  // namespace mafn

#endif  // MAFN_LOSSES_HPP
