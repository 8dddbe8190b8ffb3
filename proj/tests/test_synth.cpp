#include <doctest.h>

#include <json.hpp>

#include <fstream>
#include <sstream>

#include "mafn/synth.hpp"
#include "support.hpp"

using namespace mafn;

namespace {

double selected(const CycleRow& row, std::size_t i) {
  return row.sensors[static_cast<std::size_t>(kSelectedSensors[i] - 1)];
}

}  // namespace

TEST_CASE("noise-free single state is the pure trend") {
  SynthSpec s;
  s.engines = 3;
  s.states = 1;
  s.offsets = {0.0};
  s.noise = 0.0;
  s.trend = "quadratic";
  s.trend_amplitude = 2.0;
  const SynthDataset d = synthesize(s);
  std::size_t k = 0;
  for (const auto& e : d.train) {
    const int L = static_cast<int>(e.length());
    for (const auto& row : e.cycles) {
      const double t = static_cast<double>(row.cycle) / L;
      for (std::size_t i = 0; i < kSelectedSensors.size(); ++i) CHECK(selected(row, i) == doctest::Approx(2.0 * t * t));
      CHECK(d.truth[k].state == 0);
      ++k;
    }
  }
}

TEST_CASE("two states give the trend plus a unit square wave") {
  SynthSpec s;
  s.engines = 4;
  s.noise = 0.0;
  s.dwell = 5;
  const SynthDataset d = synthesize(s);
  std::size_t k = 0;
  for (const auto& e : d.train) {
    const int L = static_cast<int>(e.length());
    int run = 0, last = -1;
    for (const auto& row : e.cycles) {
      const SynthTruthRow& truth = d.truth[k++];
      const double trend = static_cast<double>(row.cycle) / L;
      CHECK(truth.trend == doctest::Approx(trend));
      CHECK(truth.rul == L - row.cycle);
      const double expected = trend + (truth.state == 0 ? -1.0 : 1.0);
      CHECK(std::abs(selected(row, 3) - expected) < 1e-12);
      // Settings encode the state.
      CHECK(row.settings == synth_settings(truth.state));
      // Dwell-length runs, except possibly the first and last.
      if (truth.state == last) {
        ++run;
      } else {
        if (last >= 0 && run > 0) CHECK(run <= 5);
        run = 1;
        last = truth.state;
      }
    }
  }
}

TEST_CASE("lives fall in range and units are numbered from 1") {
  SynthSpec s;
  s.engines = 25;
  s.min_life = 50;
  s.max_life = 60;
  const SynthDataset d = synthesize(s);
  REQUIRE(d.train.size() == 25);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    CHECK(d.train[i].unit_id == static_cast<int>(i + 1));
    CHECK(d.train[i].length() >= 50);
    CHECK(d.train[i].length() <= 60);
  }
}

TEST_CASE("generator is seeded") {
  SynthSpec s;
  s.engines = 3;
  CHECK(synthesize(s).train == synthesize(s).train);
  SynthSpec t = s;
  t.seed = 8;
  CHECK(synthesize(s).train != synthesize(t).train);
}

TEST_CASE("test engines are truncated with their residual life") {
  SynthSpec s;
  s.engines = 2;
  s.test_engines = 6;
  s.noise = 0.0;
  const SynthDataset d = synthesize(s);
  REQUIRE(d.test.size() == 6);
  REQUIRE(d.test_rul.size() == 6);
  std::size_t k = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    const double kept = static_cast<double>(d.test[i].length());
    k += d.test[i].length();
    const double life = kept + d.test_rul[i];
    CHECK(kept >= std::floor(0.3 * life) - 1);
    CHECK(kept <= 0.9 * life);
    CHECK(d.test_rul[i] >= 1);
  }
  CHECK(d.test_truth.size() == k);
}

TEST_CASE("written files parse back with 26 columns") {
  mafn::testing::TempDir dir("synth");
  SynthSpec s;
  s.engines = 3;
  s.test_engines = 2;
  const SynthDataset d = synthesize(s);
  const SynthFiles f = write_synth(d, dir.path());
  CHECK(parse_cmapss(f.train) == d.train);
  CHECK(parse_cmapss(f.test) == d.test);
  CHECK(parse_rul_file(f.rul) == d.test_rul);

  std::ifstream is(f.train);
  std::string line;
  std::getline(is, line);
  std::istringstream fields(line);
  int count = 0;
  for (std::string tok; fields >> tok;) ++count;
  CHECK(count == 26);

  std::ifstream truth(f.truth);
  std::getline(truth, line);
  CHECK(line == "unit,cycle,state,trend,rul");
  std::size_t rows = 0;
  while (std::getline(truth, line)) ++rows;
  CHECK(rows == d.truth.size());
}

TEST_CASE("invalid specs are rejected") {
  auto bad = [](auto mutate) {
    SynthSpec s;
    mutate(s);
    return s;
  };
  CHECK_THROWS_AS(synthesize(bad([](SynthSpec& s) { s.offsets = {1.0}; })), ContractError);
  CHECK_THROWS_AS(synthesize(bad([](SynthSpec& s) { s.trend = "cubic"; })), ContractError);
  CHECK_THROWS_AS(synthesize(bad([](SynthSpec& s) { s.noise = -1; })), ContractError);
  CHECK_THROWS_AS(synthesize(bad([](SynthSpec& s) { s.max_life = 10; })), ContractError);
  CHECK_THROWS_AS(synthesize(bad([](SynthSpec& s) { s.sensor_gains = {1, 2}; })), ContractError);
  CHECK_THROWS_AS(SynthSpec::from_json(nlohmann::json{{"engine", 3}}), ContractError);
}

TEST_CASE("spec JSON round trip") {
  SynthSpec s;
  s.states = 3;
  s.offsets = {-1, 0, 2};
  s.sensor_gains = std::vector<double>(11, 0.5);
  const SynthSpec back = SynthSpec::from_json(nlohmann::json::parse(s.to_json().dump()));
  CHECK(back.to_json() == s.to_json());
  CHECK(back.gain(3) == 0.5);
  CHECK(SynthSpec{}.gain(3) == 1.0);
}
