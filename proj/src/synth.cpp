#include "mafn/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace mafn {

using nlohmann::json;
using nlohmann::ordered_json;

void SynthSpec::validate() const {
  if (engines < 1) throw ContractError("synth: engines must be positive");
  if (states < 1) throw ContractError("synth: states must be positive");
  if (offsets.size() != static_cast<std::size_t>(states)) {
    throw ContractError("synth: need one offset per state (" + std::to_string(states) + "), got " +
                        std::to_string(offsets.size()));
  }
  if (trend != "linear" && trend != "quadratic") throw ContractError("synth: trend must be linear or quadratic");
  if (!(noise >= 0)) throw ContractError("synth: noise must be >= 0");
  if (min_life < 2 || max_life < min_life) throw ContractError("synth: need 2 <= min_life <= max_life");
  if (dwell < 1) throw ContractError("synth: dwell must be positive");
  if (!sensor_gains.empty() && sensor_gains.size() != kSelectedSensors.size()) {
    throw ContractError("synth: sensor_gains needs " + std::to_string(kSelectedSensors.size()) + " entries");
  }
  if (test_engines < 0) throw ContractError("synth: test_engines must be >= 0");
  if (!(test_min_fraction > 0 && test_min_fraction <= test_max_fraction && test_max_fraction < 1)) {
    throw ContractError("synth: need 0 < test_min_fraction <= test_max_fraction < 1");
  }
}

double SynthSpec::trend_at(int cycle, int life) const {
  const double u = static_cast<double>(cycle) / static_cast<double>(life);
  return trend_amplitude * (trend == "quadratic" ? u * u : u);
}

double SynthSpec::gain(std::size_t i) const { return sensor_gains.empty() ? 1.0 : sensor_gains.at(i); }

ordered_json SynthSpec::to_json() const {
  ordered_json j;
  j["engines"] = engines;
  j["states"] = states;
  j["offsets"] = offsets;
  j["trend"] = trend;
  j["trend_amplitude"] = trend_amplitude;
  j["noise"] = noise;
  j["min_life"] = min_life;
  j["max_life"] = max_life;
  j["dwell"] = dwell;
  j["sensor_gains"] = sensor_gains;
  j["test_engines"] = test_engines;
  j["test_min_fraction"] = test_min_fraction;
  j["test_max_fraction"] = test_max_fraction;
  j["seed"] = seed;
  return j;
}

SynthSpec SynthSpec::from_json(const json& j) {
  if (!j.is_object()) throw ContractError("synth spec must be a JSON object");
  SynthSpec s;
  const ordered_json known = s.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ContractError("synth spec: unknown key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception& e) {
      throw ContractError(std::string("synth spec: bad value for '") + key + "': " + e.what());
    }
  };
  get("engines", s.engines);
  get("states", s.states);
  get("offsets", s.offsets);
  get("trend", s.trend);
  get("trend_amplitude", s.trend_amplitude);
  get("noise", s.noise);
  get("min_life", s.min_life);
  get("max_life", s.max_life);
  get("dwell", s.dwell);
  get("sensor_gains", s.sensor_gains);
  get("test_engines", s.test_engines);
  get("test_min_fraction", s.test_min_fraction);
  get("test_max_fraction", s.test_max_fraction);
  get("seed", s.seed);
  s.validate();
  return s;
}

SynthSpec SynthSpec::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open synth spec " + path.string());
  try {
    return from_json(json::parse(is, nullptr, true, true));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::array<double, kNumSettings> synth_settings(int state) {
  return {10.0 * state, 0.25 * state, 60.0 + 20.0 * state};
}

namespace {

struct Engine {
  EngineRecord record;
  std::vector<SynthTruthRow> truth;
};

Engine make_engine(const SynthSpec& spec, int unit, int life, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> phase_dist(0, spec.dwell * spec.states - 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int phase = phase_dist(rng);
  Engine e;
  e.record.unit_id = unit;
  for (int t = 1; t <= life; ++t) {
    const int state = ((t - 1 + phase) / spec.dwell) % spec.states;
    const double trend = spec.trend_at(t, life);
    CycleRow row;
    row.cycle = t;
    row.settings = synth_settings(state);
    for (int s = 0; s < kNumRawSensors; ++s) row.sensors[static_cast<std::size_t>(s)] = 100.0 + s;
    for (std::size_t i = 0; i < kSelectedSensors.size(); ++i) {
      const double eps = spec.noise > 0 ? spec.noise * noise(rng) : 0.0;
      row.sensors[static_cast<std::size_t>(kSelectedSensors[i] - 1)] =
          spec.gain(i) * (trend + spec.offsets[static_cast<std::size_t>(state)]) + eps;
    }
    e.record.cycles.push_back(row);
    e.truth.push_back({unit, t, state, trend, static_cast<double>(life - t)});
  }
  return e;
}

}  // namespace

SynthDataset synthesize(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> life_dist(spec.min_life, spec.max_life);
  SynthDataset out;
  for (int u = 1; u <= spec.engines; ++u) {
    Engine e = make_engine(spec, u, life_dist(rng), rng);
    out.train.push_back(std::move(e.record));
    out.truth.insert(out.truth.end(), e.truth.begin(), e.truth.end());
  }
  std::uniform_real_distribution<double> frac(spec.test_min_fraction, spec.test_max_fraction);
  for (int u = 1; u <= spec.test_engines; ++u) {
    const int life = life_dist(rng);
    Engine e = make_engine(spec, u, life, rng);
    const int kept = std::max(1, static_cast<int>(std::floor(frac(rng) * life)));
    e.record.cycles.resize(static_cast<std::size_t>(kept));
    e.truth.resize(static_cast<std::size_t>(kept));
    out.test.push_back(std::move(e.record));
    out.test_rul.push_back(static_cast<double>(life - kept));
    out.test_truth.insert(out.test_truth.end(), e.truth.begin(), e.truth.end());
  }
  return out;
}

void write_truth_csv(std::ostream& os, const std::vector<SynthTruthRow>& rows) {
  os << "unit,cycle,state,trend,rul\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.trend);
    os << r.unit << ',' << r.cycle << ',' << r.state << ',' << buf << ',' << r.rul << '\n';
  }
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw DataError("cannot open " + p.string() + " for writing");
  return os;
}

}  // namespace

SynthFiles write_synth(const SynthDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SynthFiles f;
  f.train = dir / "train.txt";
  f.truth = dir / "truth.csv";
  {
    auto os = open_out(f.train);
    write_cmapss(os, data.train);
  }
  {
    auto os = open_out(f.truth);
    write_truth_csv(os, data.truth);
  }
  if (!data.test.empty()) {
    f.test = dir / "test.txt";
    f.rul = dir / "rul.txt";
    f.test_truth = dir / "test_truth.csv";
    auto os = open_out(f.test);
    write_cmapss(os, data.test);
    auto rs = open_out(f.rul);
    for (double r : data.test_rul) rs << r << '\n';
    auto ts = open_out(f.test_truth);
    write_truth_csv(ts, data.test_truth);
  }
  return f;
}

}  // namespace mafn
