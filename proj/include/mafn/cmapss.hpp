#ifndef MAFN_CMAPSS_HPP
#define MAFN_CMAPSS_HPP

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mafn/checkpoint.hpp"
#include "mafn/kmeans.hpp"
#include "mafn/tensor.hpp"

namespace mafn {

inline constexpr int kNumSettings = 3;
inline constexpr int kNumRawSensors = 21;
inline constexpr int kNumColumns = 2 + kNumSettings + kNumRawSensors;

/// 1-based indices of the informative sensors kept for modelling.
inline constexpr std::array<int, 11> kSelectedSensors = {2, 3, 4, 7, 8, 11, 12, 15, 17, 20, 21};

struct CycleRow {
  int cycle = 0;
  std::array<double, kNumSettings> settings{};
  std::array<double, kNumRawSensors> sensors{};

  bool operator==(const CycleRow&) const = default;
};

/// One engine's cycle series, cycle indices 1, 2, ..., L.
struct EngineRecord {
  int unit_id = 0;
  std::vector<CycleRow> cycles;

  std::size_t length() const { return cycles.size(); }
  bool operator==(const EngineRecord&) const = default;
};

/// Reads whitespace-separated 26-column text. Units are returned in order of
/// first appearance.
std::vector<EngineRecord> parse_cmapss(const std::filesystem::path& path);
std::vector<EngineRecord> parse_cmapss(std::istream& is, const std::string& source = "<stream>");
void write_cmapss(std::ostream& os, std::span<const EngineRecord> records);

/// One integer (or real) per line, ordered by unit.
std::vector<double> parse_rul_file(const std::filesystem::path& path);

/// Engine reduced to the selected sensor channels.
struct SelectedRecord {
  int unit_id = 0;
  RowMatrix sensors;         // L x 11
  Eigen::MatrixXd settings;  // L x 3

  Eigen::Index length() const { return sensors.rows(); }
};

SelectedRecord select_sensors(const EngineRecord& record);
std::vector<SelectedRecord> select_sensors(std::span<const EngineRecord> records);

/// Per-channel min/max fitted on training data.
struct NormalizationStats {
  Eigen::VectorXd min;
  Eigen::VectorXd max;

  Eigen::Index channels() const { return min.size(); }
  bool degenerate(Eigen::Index channel) const { return max(channel) == min(channel); }

  void save_to(ParamFile& file, const std::string& prefix = "norm") const;
  static NormalizationStats load_from(const ParamFile& file, const std::string& prefix = "norm");
};

NormalizationStats fit_normalization(std::span<const SelectedRecord> train);

/// (v - min) / (max - min); constant channels map to 0. Not clipped.
double normalize(double value, const NormalizationStats& stats, Eigen::Index channel);
double denormalize(double value, const NormalizationStats& stats, Eigen::Index channel);
RowMatrix normalize(const RowMatrix& values, const NormalizationStats& stats);
RowMatrix denormalize(const RowMatrix& values, const NormalizationStats& stats);

enum class ClusterInput { Settings, Sensors };

ClusterInput parse_cluster_input(const std::string& name);
std::string to_string(ClusterInput input);
std::vector<std::string> cluster_feature_names(ClusterInput input);

/// Rows to cluster for one engine: raw operating settings, or normalized sensors.
Eigen::MatrixXd cluster_features(const SelectedRecord& record, ClusterInput input, const NormalizationStats& stats);

/// Normalized sensors plus the operating state of every cycle.
struct PreparedEngine {
  int unit_id = 0;
  RowMatrix sensors;  // L x D, normalized
  std::vector<int> states;

  Eigen::Index length() const { return sensors.rows(); }
};

PreparedEngine prepare_engine(const SelectedRecord& record, const NormalizationStats& stats,
                              const ClusterModel& clusters, ClusterInput input);

struct WindowSpec {
  int window = 30;
  int horizon = 10;
  int stride = 1;
  double rul_cap = 125.0;
};

/// One fixed-length training sample with all four head targets.
struct WindowSample {
  RowMatrix inputs;  // window x D
  std::vector<int> input_states;
  std::vector<int> future_states;  // horizon; 0 where masked
  RowMatrix future_sensors;        // horizon x D; 0 where masked
  std::vector<double> mask;        // horizon; 1 where the record covers the step
  double rul = 0.0;
  int unit_id = 0;
  int cutoff = 0;  // 1-based cycle index of the last input step
};

/// Count of windows make_windows() yields for a record of `length` cycles.
std::size_t window_count(std::size_t length, const WindowSpec& spec);

/// One sample per cutoff cycle c = window, window + stride, ... <= L; the
/// record is treated as run-to-failure (failure at cycle L).
std::vector<WindowSample> make_windows(const PreparedEngine& engine, const WindowSpec& spec);

struct Truncated {
  EngineRecord record;
  int residual = 0;
};

/// Keeps the first floor(pct * L) cycles; residual is L minus that.
Truncated truncate_at_fraction(const EngineRecord& record, double pct);
int kept_cycles(std::size_t length, double pct);

/// Seeded engine-level split; both sides non-empty when there are >= 2 engines.
struct EngineSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
EngineSplit split_engines(std::size_t n_engines, double validation_fraction, std::uint64_t seed);

// ---- windowed dataset cache ---------------------------------------------------

/// Versioned binary cache of window samples, tagged with a key (config hash).
void save_window_cache(const std::filesystem::path& path, std::span<const WindowSample> samples, std::uint64_t key);
/// nullopt when the file is absent, of another version, or keyed differently.
std::optional<std::vector<WindowSample>> load_window_cache(const std::filesystem::path& path, std::uint64_t key);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull);
std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace mafn

#endif  // MAFN_CMAPSS_HPP
