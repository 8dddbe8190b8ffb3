#include "mafn/kmeans.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

namespace mafn {

using Eigen::Index;
using Eigen::MatrixXd;

namespace {

bool row_less(const MatrixXd& m, Index a, Index b) {
  for (Index c = 0; c < m.cols(); ++c) {
    if (m(a, c) != m(b, c)) return m(a, c) < m(b, c);
  }
  return false;
}

Index count_distinct(const MatrixXd& points) {
  std::vector<Index> idx(static_cast<std::size_t>(points.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](Index a, Index b) { return row_less(points, a, b); });
  Index distinct = idx.empty() ? 0 : 1;
  for (std::size_t i = 1; i < idx.size(); ++i) {
    if (row_less(points, idx[i - 1], idx[i])) ++distinct;
  }
  return distinct;
}

// Writes nearest-centroid labels and squared distances; returns the objective.
double assign_all(const MatrixXd& points, const MatrixXd& centroids, std::vector<int>& labels,
                  Eigen::VectorXd& dist2) {
  double total = 0.0;
  for (Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < centroids.rows(); ++j) {
      const double d = (centroids.row(j) - points.row(i)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    dist2(i) = best_d;
    total += best_d;
  }
  return total;
}

MatrixXd kmeanspp_init(const MatrixXd& points, int k, std::mt19937_64& rng) {
  const Index n = points.rows();
  MatrixXd centroids(k, points.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  Eigen::VectorXd d2(n);
  for (Index i = 0; i < n; ++i) d2(i) = (points.row(i) - centroids.row(0)).squaredNorm();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0.0) {
      double target = u(rng) * total;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        target -= d2(i);
        if (target < 0.0 && d2(i) > 0.0) {
          pick = i;
          break;
        }
      }
      // Floating-point fallthrough must still land on a non-zero weight.
      while (d2(pick) == 0.0 && pick > 0) --pick;
    }
    centroids.row(c) = points.row(pick);
    for (Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (points.row(i) - centroids.row(c)).squaredNorm());
  }
  return centroids;
}

/*
 * Single-point transfers from a Lloyd fixpoint. Moving x from cluster a to b
 * changes the objective by n_b/(n_b+1) |x-mu_b|^2 - n_a/(n_a-1) |x-mu_a|^2;
 * apply the best strictly improving move per point until none is left.
 */
void hartigan_refine(const MatrixXd& points, MatrixXd& centroids, std::vector<double>* trace) {
  const Index n = points.rows();
  const Index k = centroids.rows();
  if (k < 2) return;
  std::vector<int> labels(static_cast<std::size_t>(n));
  Eigen::VectorXd dist2(n);
  double objective = assign_all(points, centroids, labels, dist2);
  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (int l : labels) counts[static_cast<std::size_t>(l)] += 1.0;
  // Means of the current partition (equal to the centroids at a fixpoint,
  // but recomputed so empty-cluster reseeds cannot leave them stale).
  MatrixXd means = MatrixXd::Zero(k, points.cols());
  for (Index i = 0; i < n; ++i) means.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
  for (Index j = 0; j < k; ++j) {
    if (counts[static_cast<std::size_t>(j)] > 0) means.row(j) /= counts[static_cast<std::size_t>(j)];
    else means.row(j) = centroids.row(j);
  }

  bool moved = true;
  for (int sweep = 0; moved && sweep < 1000; ++sweep) {
    moved = false;
    for (Index i = 0; i < n; ++i) {
      const auto a = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
      if (counts[a] <= 1.0) continue;
      const double remove = counts[a] / (counts[a] - 1.0) * (points.row(i) - means.row(static_cast<Index>(a))).squaredNorm();
      double best_gain = 1e-12 * std::max(1.0, objective);
      Index best = -1;
      for (Index b = 0; b < k; ++b) {
        if (static_cast<std::size_t>(b) == a) continue;
        const double nb = counts[static_cast<std::size_t>(b)];
        const double add = nb / (nb + 1.0) * (points.row(i) - means.row(b)).squaredNorm();
        if (remove - add > best_gain) {
          best_gain = remove - add;
          best = b;
        }
      }
      if (best < 0) continue;
      const auto b = static_cast<std::size_t>(best);
      means.row(static_cast<Index>(a)) = (means.row(static_cast<Index>(a)) * counts[a] - points.row(i)) / (counts[a] - 1.0);
      means.row(best) = (means.row(best) * counts[b] + points.row(i)) / (counts[b] + 1.0);
      counts[a] -= 1.0;
      counts[b] += 1.0;
      labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
      objective -= best_gain;
      moved = true;
    }
  }
  // Exact recomputation of the refined means, then a final objective.
  MatrixXd exact = MatrixXd::Zero(k, points.cols());
  for (Index i = 0; i < n; ++i) exact.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
  for (Index j = 0; j < k; ++j) {
    if (counts[static_cast<std::size_t>(j)] > 0) centroids.row(j) = exact.row(j) / counts[static_cast<std::size_t>(j)];
  }
  if (trace) trace->push_back(inertia(points, centroids));
}

struct LloydResult {
  MatrixXd centroids;
  double inertia;
};

LloydResult lloyd(const MatrixXd& points, MatrixXd centroids, const KMeansOptions& opt,
                  std::vector<double>* trace) {
  const Index n = points.rows();
  const int k = static_cast<int>(centroids.rows());
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  std::vector<int> previous;
  Eigen::VectorXd dist2(n);
  double objective = 0.0;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    previous = labels;
    objective = assign_all(points, centroids, labels, dist2);
    if (trace) trace->push_back(objective);
    if (iter > 0 && labels == previous) break;

    MatrixXd sums = MatrixXd::Zero(k, points.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    MatrixXd next = centroids;
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        next.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
      }
    }
    // Empty clusters take the point currently farthest from its centroid.
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) continue;
      Index far = 0;
      for (Index i = 1; i < n; ++i) {
        if (dist2(i) > dist2(far)) far = i;
      }
      next.row(j) = points.row(far);
      dist2(far) = 0.0;
    }
    const double shift = (next - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(next);
    if (shift < opt.tol) {
      objective = assign_all(points, centroids, labels, dist2);
      if (trace) trace->push_back(objective);
      break;
    }
  }
  hartigan_refine(points, centroids, trace);
  const double final_inertia = inertia(points, centroids);
  return {std::move(centroids), final_inertia};
}

}  // namespace

std::vector<int> assign_states(const MatrixXd& points, const ClusterModel& model) {
  if (points.cols() != model.dim()) {
    throw DimensionError("assign_states: points have " + std::to_string(points.cols()) + " features, model expects " +
                         std::to_string(model.dim()));
  }
  std::vector<int> labels(static_cast<std::size_t>(points.rows()));
  Eigen::VectorXd d2(points.rows());
  assign_all(points, model.centroids, labels, d2);
  return labels;
}

double inertia(const MatrixXd& points, const MatrixXd& centroids) {
  std::vector<int> labels(static_cast<std::size_t>(points.rows()));
  Eigen::VectorXd d2(points.rows());
  return assign_all(points, centroids, labels, d2);
}

ClusterModel kmeans_fit(const MatrixXd& points, int k, const KMeansOptions& options, KMeansTrace* trace) {
  if (k < 1) throw ContractError("kmeans_fit: k must be >= 1, got " + std::to_string(k));
  if (options.restarts < 1) throw ContractError("kmeans_fit: restarts must be >= 1");
  if (!points.allFinite()) throw NumericError("kmeans_fit: non-finite input point");
  const Index distinct = count_distinct(points);
  if (distinct < k) {
    throw ContractError("kmeans_fit: " + std::to_string(distinct) + " distinct points cannot form " +
                        std::to_string(k) + " clusters");
  }
  if (trace) trace->objective.clear();

  ClusterModel best;
  best.k = k;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < options.restarts; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    std::vector<double>* t = nullptr;
    if (trace) t = &trace->objective.emplace_back();
    LloydResult res = lloyd(points, kmeanspp_init(points, k, rng), options, t);
    if (res.inertia < best.inertia) {
      best.inertia = res.inertia;
      best.centroids = std::move(res.centroids);
    }
  }
  return best;
}

ClusterModel relabel_canonical(const ClusterModel& model, const MatrixXd& train_points) {
  std::vector<int> labels = assign_states(train_points, model);
  std::vector<Index> counts(static_cast<std::size_t>(model.k), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  std::vector<Index> order(static_cast<std::size_t>(model.k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (counts[static_cast<std::size_t>(a)] != counts[static_cast<std::size_t>(b)]) {
      return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
    }
    return row_less(model.centroids, a, b);
  });
  ClusterModel out = model;
  for (std::size_t j = 0; j < order.size(); ++j) out.centroids.row(static_cast<Index>(j)) = model.centroids.row(order[j]);
  return out;
}

void ClusterModel::save_to(ParamFile& file, const std::string& prefix) const {
  RowMatrix c = centroids;
  file.put(prefix + ".centroids", Tensor::from_matrix(c));
  file.put(prefix + ".inertia", Tensor::scalar(inertia));
  std::string spec;
  for (std::size_t i = 0; i < feature_spec.size(); ++i) {
    if (i) spec += ',';
    spec += feature_spec[i];
  }
  file.strings[prefix + ".feature_spec"] = spec;
}

ClusterModel ClusterModel::load_from(const ParamFile& file, const std::string& prefix) {
  ClusterModel m;
  Tensor c = file.tensor(prefix + ".centroids");
  m.centroids = c.matrix();
  m.k = static_cast<int>(m.centroids.rows());
  m.inertia = file.tensor(prefix + ".inertia").item();
  std::stringstream ss(file.string(prefix + ".feature_spec"));
  for (std::string item; std::getline(ss, item, ',');) m.feature_spec.push_back(item);
  return m;
}

}  // namespace mafn
