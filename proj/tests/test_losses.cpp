#include <doctest.h>

#include <cmath>
#include <random>

#include "mafn/losses.hpp"
#include "suites.hpp"

using namespace mafn;
using namespace mafn::testing;

namespace {

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v, bool rg = false) {
  return Tensor::from({r, c}, std::move(v), rg);
}

Tensor vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from({n}, std::move(v));
}

Tensor col(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from({n, 1}, std::move(v));
}

LossComponents components(double s, double d, double f, double r) {
  return {Tensor::scalar(s), Tensor::scalar(d), Tensor::scalar(f), Tensor::scalar(r)};
}

}  // namespace

TEST_CASE("every loss matches finite differences on 20 seeded instances") {
  for (const auto& r : loss_gradient_suite(20)) {
    CAPTURE(r.name);
    CHECK(r.instances == 20);
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("state_loss examples") {
  const int targets[] = {0, 2, 1};
  const double all[] = {1, 1, 1};
  Tensor sharp = mat(3, 3, {60, 0, 0, 0, 0, 60, 0, 60, 0});
  CHECK(state_loss(sharp, targets, all).item() < 1e-20);

  Tensor flat = Tensor::zeros({3, 4});
  CHECK(std::abs(state_loss(flat, targets, all).item() - std::log(4.0)) < 1e-12);

  // Restriction oracle: masking equals dropping rows.
  std::mt19937_64 rng(1);
  Tensor logits = random_tensor({4, 3}, rng, false, 3.0);
  const int t4[] = {2, 0, 1, 1};
  const double half[] = {1, 0, 1, 0};
  const int kept_targets[] = {2, 1};
  Tensor kept = concat({slice(logits, 0, 0, 1), slice(logits, 0, 2, 3)}, 0);
  const double ones[] = {1, 1};
  CHECK(std::abs(state_loss(logits, t4, half).item() - state_loss(kept, kept_targets, ones).item()) < 1e-12);

  const double none[] = {0, 0, 0};
  CHECK_THROWS_AS(state_loss(flat, targets, none), ContractError);
}

TEST_CASE("state_loss uses a stable log-softmax") {
  const int targets[] = {1};
  const double one[] = {1};
  const double l = state_loss(mat(1, 2, {1000, 0}), targets, one).item();
  CHECK(std::isfinite(l));
  CHECK(l == doctest::Approx(1000.0));
}

TEST_CASE("degradation_loss examples") {
  CHECK(degradation_loss(vec({0, 1, 2.5, 3}), 0.0).item() == 0.0);
  CHECK(degradation_loss(vec({1, 0}), 0.0).item() == 1.0);
  CHECK(std::abs(degradation_loss(vec({0, 2, 1}), 0.5).item() - 1.75) < 1e-12);
  CHECK(degradation_loss(vec({2, 2, 2}), 0.7).item() == 0.0);
  CHECK_THROWS_AS(degradation_loss(vec({1}), 0.1), ContractError);

  // A batch is the mean of its rows.
  Tensor batch = mat(2, 3, {0, 2, 1, 1, 0, 0});
  const double expected = (1.75 + degradation_loss(vec({1, 0, 0}), 0.5).item()) / 2;
  CHECK(std::abs(degradation_loss(batch, 0.5).item() - expected) < 1e-12);
}

TEST_CASE("forecast_loss examples") {
  std::mt19937_64 rng(2);
  Tensor y = random_tensor({3, 2}, rng, false);
  const double all[] = {1, 1, 1};
  CHECK(forecast_loss(y, y, all).item() == 0.0);

  const double first[] = {1};
  CHECK(forecast_loss(mat(1, 2, {1, -1}), Tensor::zeros({1, 2}), first).item() == 2.0);

  const double partial[] = {1, 1, 0};
  Tensor pred = random_tensor({3, 2}, rng, false);
  RowMatrix junk = pred.matrix();
  junk.row(2) << 1e6, -3e5;
  CHECK(forecast_loss(pred, y, partial).item() == forecast_loss(Tensor::from_matrix(junk), y, partial).item());

  const double none[] = {0, 0, 0};
  CHECK_THROWS_AS(forecast_loss(pred, y, none), ContractError);
}

TEST_CASE("rul_loss examples") {
  CHECK(rul_loss(col({7, 3}), col({7, 3}), 2, 1).item() == 0.0);
  CHECK(std::abs(rul_loss(col({55}), col({50}), 2, 1).item() - 50.0) <= 1e-12);
  CHECK(std::abs(rul_loss(col({45}), col({50}), 2, 1).item() - 25.0) <= 1e-12);
  // An empty batch cannot even be built: tensors have positive dimensions.
  CHECK_THROWS(Tensor::zeros({0, 1}));
  CHECK_THROWS_AS(rul_loss(col({1, 2}), col({1}), 2, 1), DimensionError);
}

TEST_CASE("rul_loss and score are asymmetric against late predictions") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> e(0.01, 40), y(0, 125), lam(0, 3);
  for (int i = 0; i < 200; ++i) {
    const double err = e(rng), truth = y(rng), early = lam(rng), late = early + 0.1 + lam(rng);
    CHECK(rul_loss(col({truth + err}), col({truth}), late, early).item() >
          rul_loss(col({truth - err}), col({truth}), late, early).item());
    const double p_late[] = {truth + err}, p_early[] = {truth - err}, t[] = {truth};
    CHECK(prognostic_score(as_vector(p_late), as_vector(t)) > prognostic_score(as_vector(p_early), as_vector(t)));
  }
}

TEST_CASE("total_loss examples") {
  LossWeights only_rul{0, 0, 0, 1};
  CHECK(total_loss(components(9, 8, 7, 4), only_rul).item() == 4.0);

  LossWeights ones{1, 1, 1, 1};
  CHECK(total_loss(components(1, 2, 3, 4), ones).item() == 10.0);

  LossWeights w{0.5, 0.3, 1.0, 1.0}, doubled{1.0, 0.6, 2.0, 2.0};
  const auto c = components(1.5, 0.25, 3.0, 7.0);
  CHECK(std::abs(total_loss(c, doubled).item() - 2 * total_loss(c, w).item()) < 1e-12);

  try {
    total_loss(components(1, std::nan(""), 1, 1), w);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("degradation") != std::string::npos);
  }
}

TEST_CASE("losses are non-negative on random inputs") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    Tensor logits = random_tensor({5, 3}, rng, false, 4.0);
    const auto targets = random_ids(5, 3, rng);
    const auto mask = random_mask(5, rng);
    CHECK(state_loss(logits, targets, mask).item() >= 0.0);
    CHECK(degradation_loss(random_tensor({2, 4}, rng, false), 0.3).item() >= 0.0);
    CHECK(forecast_loss(random_tensor({5, 2}, rng, false), random_tensor({5, 2}, rng, false), mask).item() >= 0.0);
    CHECK(rul_loss(random_tensor({3, 1}, rng, false), random_tensor({3, 1}, rng, false), 2, 1).item() >= 0.0);
  }
}

TEST_CASE("metric examples") {
  const double y[] = {10, 50, 100};
  CHECK(rmse(as_vector(y), as_vector(y)) == 0.0);
  CHECK(relative_error(as_vector(y), as_vector(y)) == 0.0);
  CHECK(prognostic_score(as_vector(y), as_vector(y)) == 0.0);

  const double late[] = {20}, early[] = {7}, truth[] = {10}, truth20[] = {20};
  CHECK(std::abs(prognostic_score(as_vector(late), as_vector(truth)) - (std::exp(1.0) - 1)) < 1e-9);
  CHECK(std::abs(prognostic_score(as_vector(early), as_vector(truth20)) - (std::exp(1.0) - 1)) < 1e-9);

  const double p[] = {3, 5}, t[] = {1, 1};
  CHECK(rmse(as_vector(p), as_vector(t)) == doctest::Approx(std::sqrt(10.0)));
  CHECK(relative_error(as_vector(p), as_vector(t)) == doctest::Approx(3.0));

  CHECK_THROWS_AS(rmse(Eigen::VectorXd(), Eigen::VectorXd()), ContractError);
  CHECK_THROWS_AS(prognostic_score(as_vector(p), as_vector(truth)), DimensionError);
}

TEST_CASE("relative error uses epsilon 1e-8") {
  CHECK(kRelativeErrorEpsilon == 1e-8);
  const double p[] = {1}, zero[] = {0};
  CHECK(relative_error(as_vector(p), as_vector(zero)) == 1.0 / 1e-8);
  const double t[] = {2};
  CHECK(relative_error(as_vector(p), as_vector(t)) == 1.0 / (2.0 + 1e-8));
}

TEST_CASE("score sums per-engine terms") {
  const double p[] = {20, 7, 5}, t[] = {10, 20, 5};
  CHECK(std::abs(prognostic_score(as_vector(p), as_vector(t)) - 2 * (std::exp(1.0) - 1)) < 1e-9);
}

TEST_CASE("loss weight validation") {
  CHECK_NOTHROW(LossWeights{}.validate());
  LossWeights w;
  w.w_state = -1;
  CHECK_THROWS_AS(w.validate(), ContractError);
  w = {};
  w.lambda_late = 1.0;
  w.lambda_early = 1.0;
  CHECK_THROWS_AS(w.validate(), ContractError);
  w = {0, 0, 0, 0};
  CHECK_THROWS_AS(w.validate(), ContractError);
}
