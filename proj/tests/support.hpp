#ifndef MAFN_TESTS_SUPPORT_HPP
#define MAFN_TESTS_SUPPORT_HPP

#include <algorithm>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <system_error>
#include <vector>

#include "mafn/layers.hpp"
#include "mafn/tensor.hpp"

namespace mafn::testing {

inline constexpr double kFdEpsilon = 1e-5;

/// ||a - n|| / max(||a||, ||n||, 1e-6)
inline double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  const double denom = std::max({analytic.norm(), numeric.norm(), 1e-6});
  return (analytic - numeric).norm() / denom;
}

struct GradReport {
  double max_rel = 0.0;
  std::string worst;
};

/*
 * Central finite differences for every entry of every parameter against the
 * gradient from backward(). `loss` must rebuild the graph on each call.
 */
inline GradReport gradcheck(const std::function<Tensor()>& loss, const NamedParams& params,
                            double eps = kFdEpsilon) {
  for (auto [name, p] : params) p.zero_grad();
  backward(loss());
  GradReport report;
  for (auto [name, p] : params) {
    Eigen::VectorXd analytic = p.has_grad() ? p.grad() : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.numel()));
    Eigen::VectorXd numeric(analytic.size());
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      const double saved = p.mutable_values()(i);
      p.mutable_values()(i) = saved + eps;
      const double up = loss().item();
      p.mutable_values()(i) = saved - eps;
      const double down = loss().item();
      p.mutable_values()(i) = saved;
      numeric(i) = (up - down) / (2 * eps);
    }
    const double rel = relative_error(analytic, numeric);
    if (report.worst.empty() || rel > report.max_rel) {
      report.max_rel = rel;
      report.worst = name;
    }
  }
  return report;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<int> random_ids(std::size_t n, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, k - 1);
  std::vector<int> ids(n);
  for (auto& i : ids) i = d(rng);
  return ids;
}

/// Fixed linear functional sum(w .* x) with random weights, so gradchecks
/// exercise every output entry with a distinct upstream value.
inline Tensor probe(const Tensor& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor w = random_tensor(x.shape(), rng, false);
  return sum(mul(x, w));
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("mafn_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace mafn::testing

#endif  // MAFN_TESTS_SUPPORT_HPP
