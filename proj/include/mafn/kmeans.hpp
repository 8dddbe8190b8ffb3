#ifndef MAFN_KMEANS_HPP
#define MAFN_KMEANS_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mafn/checkpoint.hpp"
#include "mafn/errors.hpp"

namespace mafn {

/// K centroids (one per row) and the nearest-centroid assignment rule.
struct ClusterModel {
  int k = 0;
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
  /// Names of the clustered columns, e.g. {"setting1", "setting2", "setting3"}.
  std::vector<std::string> feature_spec;

  Eigen::Index dim() const { return centroids.cols(); }

  void save_to(ParamFile& file, const std::string& prefix = "cluster") const;
  static ClusterModel load_from(const ParamFile& file, const std::string& prefix = "cluster");
};

struct KMeansOptions {
  int max_iter = 300;
  double tol = 1e-10;
  int restarts = 10;
  std::uint64_t seed = 0;
};

/// Per-restart objective after every assignment step; filled when requested.
struct KMeansTrace {
  std::vector<std::vector<double>> objective;
};

/// Nearest centroid by Euclidean distance; ties go to the lowest index.
template <typename Derived>
int assign_state(const Eigen::MatrixBase<Derived>& point, const ClusterModel& model) {
  if (point.size() != model.dim()) {
    throw DimensionError("assign_state: point has " + std::to_string(point.size()) + " features, model expects " +
                         std::to_string(model.dim()));
  }
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < model.centroids.rows(); ++j) {
    const double d = (model.centroids.row(j).transpose() - point.derived().template cast<double>()).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

/// Assignment of every row of `points`.
std::vector<int> assign_states(const Eigen::MatrixXd& points, const ClusterModel& model);

/// Sum of squared distances of each row to its nearest centroid.
double inertia(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids);

/// Lloyd's algorithm with k-means++ seeding; best inertia over `restarts`.
ClusterModel kmeans_fit(const Eigen::MatrixXd& points, int k, const KMeansOptions& options = {},
                        KMeansTrace* trace = nullptr);

/// Renumbers clusters by descending training count, ties broken by
/// lexicographic centroid order.
ClusterModel relabel_canonical(const ClusterModel& model, const Eigen::MatrixXd& train_points);

}  // namespace mafn

#endif  // MAFN_KMEANS_HPP
