#ifndef MAFN_TESTS_ORACLES_HPP
#define MAFN_TESTS_ORACLES_HPP

// Independent reference implementations shared by unit and acceptance tests.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "mafn/layers.hpp"

namespace mafn::testing {

/// Optimal k-means objective by enumerating every labeling of the rows.
inline double exhaustive_kmeans(const Eigen::MatrixXd& points, int k) {
  const Eigen::Index n = points.rows();
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++count[static_cast<std::size_t>(l)];
    bool all_used = true;
    for (int c : count) all_used = all_used && c > 0;
    if (all_used) {
      Eigen::MatrixXd means = Eigen::MatrixXd::Zero(k, points.cols());
      for (Eigen::Index i = 0; i < n; ++i) means.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
      for (int j = 0; j < k; ++j) means.row(j) /= count[static_cast<std::size_t>(j)];
      double obj = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        obj += (points.row(i) - means.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
      }
      best = std::min(best, obj);
    }
    std::size_t pos = 0;
    while (pos < labels.size() && ++labels[pos] == k) labels[pos++] = 0;
    if (pos == labels.size()) break;
  }
  return best;
}

/// Direct nested-loop convolution: out[t][n] = act(b[n] + sum_j sum_c
/// W[j][c][n] x[t + j - p][c]) with zero padding.
inline Eigen::MatrixXd naive_conv1d(const Eigen::MatrixXd& x, const Conv1dLayer& layer) {
  const auto T = static_cast<long>(x.rows());
  const auto C = static_cast<long>(layer.channels);
  const auto k = static_cast<long>(layer.kernel);
  const auto p = static_cast<long>((layer.kernel - 1) / 2);
  const auto N = static_cast<long>(layer.filters());
  Eigen::MatrixXd out(T, N);
  for (long t = 0; t < T; ++t) {
    for (long n = 0; n < N; ++n) {
      double acc = 0.0;
      for (long j = 0; j < k; ++j) {
        const long src = t + j - p;
        if (src < 0 || src >= T) continue;
        for (long c = 0; c < C; ++c) {
          acc += layer.weights(static_cast<std::size_t>(j * C + c), static_cast<std::size_t>(n)) * x(src, c);
        }
      }
      acc += layer.bias(0, static_cast<std::size_t>(n));
      switch (layer.activation) {
        case Activation::Relu: acc = acc > 0 ? acc : 0.0; break;
        case Activation::Tanh: acc = std::tanh(acc); break;
        case Activation::Identity: break;
      }
      out(t, n) = acc;
    }
  }
  return out;
}

}  // namespace mafn::testing

#endif  // MAFN_TESTS_ORACLES_HPP
