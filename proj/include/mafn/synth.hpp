#ifndef MAFN_SYNTH_HPP
#define MAFN_SYNTH_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mafn/cmapss.hpp"

namespace mafn {

/*
 * Synthetic run-to-failure fleet with a known decomposition. Every selected
 * sensor reads
 *
 *   gain_s * (trend(t) + offset[state(t)]) + noise,   noise ~ N(0, sigma^2)
 *
 * The state follows a square wave that dwells `dwell` cycles in each state
 * (random phase per engine). The operating settings encode the state, so
 * clustering on them recovers it. Unselected sensors are constant.
 */
struct SynthSpec {
  int engines = 40;
  int states = 2;
  std::vector<double> offsets = {-1.0, 1.0};
  std::string trend = "linear";  // linear: a * t / L, quadratic: a * (t / L)^2
  double trend_amplitude = 1.0;
  double noise = 0.05;
  int min_life = 120;
  int max_life = 200;
  int dwell = 4;
  std::vector<double> sensor_gains;  // empty: all 1
  int test_engines = 0;
  double test_min_fraction = 0.3;
  double test_max_fraction = 0.9;
  std::uint64_t seed = 7;

  void validate() const;
  double trend_at(int cycle, int life) const;
  double gain(std::size_t selected_index) const;

  nlohmann::ordered_json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
  static SynthSpec load(const std::filesystem::path& path);
};

struct SynthTruthRow {
  int unit = 0;
  int cycle = 0;
  int state = 0;
  double trend = 0.0;
  double rul = 0.0;
};

struct SynthDataset {
  std::vector<EngineRecord> train;
  std::vector<SynthTruthRow> truth;
  std::vector<EngineRecord> test;
  std::vector<double> test_rul;
  std::vector<SynthTruthRow> test_truth;
};

/// Operating settings that encode state `s`.
std::array<double, kNumSettings> synth_settings(int state);

SynthDataset synthesize(const SynthSpec& spec);

struct SynthFiles {
  std::filesystem::path train;
  std::filesystem::path truth;
  std::filesystem::path test;
  std::filesystem::path rul;
  std::filesystem::path test_truth;
};

/// Writes train.txt and truth.csv, plus test.txt, rul.txt and test_truth.csv
/// when test engines were requested.
SynthFiles write_synth(const SynthDataset& data, const std::filesystem::path& dir);
void write_truth_csv(std::ostream& os, const std::vector<SynthTruthRow>& rows);

}  // namespace mafn

#endif  // MAFN_SYNTH_HPP
