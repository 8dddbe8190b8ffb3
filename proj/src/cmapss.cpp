#include "mafn/cmapss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "binary_io.hpp"
#include "mafn/log.hpp"

namespace mafn {

using Eigen::Index;

namespace {

int as_integer(double v, const std::string& source, std::size_t line, const char* what) {
  if (v != std::floor(v) || v < 1 || v > 1e9) {
    throw ParseError(source + ":" + std::to_string(line) + ": " + what + " must be a positive integer");
  }
  return static_cast<int>(v);
}

}  // namespace

// ---- parsing ------------------------------------------------------------------

std::vector<EngineRecord> parse_cmapss(std::istream& is, const std::string& source) {
  std::vector<EngineRecord> records;
  std::unordered_map<int, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> tokens;
  while (std::getline(is, line)) {
    ++line_no;
    tokens.clear();
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        throw ParseError(source + ":" + std::to_string(line_no) + ": not a number: '" + tok + "'");
      }
      tokens.push_back(v);
    }
    if (tokens.empty()) continue;
    if (tokens.size() != kNumColumns) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(kNumColumns) +
                       " columns, found " + std::to_string(tokens.size()));
    }
    CycleRow row;
    const int unit = as_integer(tokens[0], source, line_no, "unit id");
    row.cycle = as_integer(tokens[1], source, line_no, "cycle index");
    std::copy_n(tokens.begin() + 2, kNumSettings, row.settings.begin());
    std::copy_n(tokens.begin() + 2 + kNumSettings, kNumRawSensors, row.sensors.begin());

    auto [it, inserted] = index.try_emplace(unit, records.size());
    if (inserted) records.push_back(EngineRecord{unit, {}});
    EngineRecord& rec = records[it->second];
    const int expected = static_cast<int>(rec.cycles.size()) + 1;
    if (row.cycle != expected) {
      throw DataError(source + ":" + std::to_string(line_no) + ": unit " + std::to_string(unit) + " cycle " +
                      std::to_string(row.cycle) + " where " + std::to_string(expected) + " was expected");
    }
    rec.cycles.push_back(row);
  }
  return records;
}

std::vector<EngineRecord> parse_cmapss(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open data file " + path.string());
  return parse_cmapss(is, path.string());
}

void write_cmapss(std::ostream& os, std::span<const EngineRecord> records) {
  char buf[32];
  for (const auto& rec : records) {
    for (const auto& row : rec.cycles) {
      os << rec.unit_id << ' ' << row.cycle;
      for (double v : row.settings) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << ' ' << buf;
      }
      for (double v : row.sensors) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << ' ' << buf;
      }
      os << '\n';
    }
  }
}

std::vector<double> parse_rul_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open RUL file " + path.string());
  std::vector<double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    double v = 0;
    if (!(ls >> v)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected a RUL value");
    }
    if (v < 0) throw DataError(path.string() + ":" + std::to_string(line_no) + ": negative RUL");
    out.push_back(v);
  }
  return out;
}

// ---- sensor selection and normalization -------------------------------------------

SelectedRecord select_sensors(const EngineRecord& record) {
  SelectedRecord out;
  out.unit_id = record.unit_id;
  const auto n = static_cast<Index>(record.cycles.size());
  out.sensors.resize(n, static_cast<Index>(kSelectedSensors.size()));
  out.settings.resize(n, kNumSettings);
  for (Index i = 0; i < n; ++i) {
    const auto& row = record.cycles[static_cast<std::size_t>(i)];
    for (std::size_t c = 0; c < kSelectedSensors.size(); ++c) {
      out.sensors(i, static_cast<Index>(c)) = row.sensors[static_cast<std::size_t>(kSelectedSensors[c] - 1)];
    }
    for (int s = 0; s < kNumSettings; ++s) out.settings(i, s) = row.settings[static_cast<std::size_t>(s)];
  }
  return out;
}

std::vector<SelectedRecord> select_sensors(std::span<const EngineRecord> records) {
  std::vector<SelectedRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(select_sensors(r));
  return out;
}

NormalizationStats fit_normalization(std::span<const SelectedRecord> train) {
  Index channels = -1;
  NormalizationStats stats;
  for (const auto& rec : train) {
    if (rec.length() == 0) continue;
    if (channels < 0) {
      channels = rec.sensors.cols();
      stats.min = Eigen::VectorXd::Constant(channels, std::numeric_limits<double>::infinity());
      stats.max = Eigen::VectorXd::Constant(channels, -std::numeric_limits<double>::infinity());
    }
    if (rec.sensors.cols() != channels) {
      throw DimensionError("fit_normalization: engine " + std::to_string(rec.unit_id) + " has " +
                           std::to_string(rec.sensors.cols()) + " channels, expected " + std::to_string(channels));
    }
    stats.min = stats.min.cwiseMin(rec.sensors.colwise().minCoeff().transpose());
    stats.max = stats.max.cwiseMax(rec.sensors.colwise().maxCoeff().transpose());
  }
  if (channels < 0) throw ContractError("fit_normalization: empty training set");
  for (Index c = 0; c < channels; ++c) {
    if (stats.degenerate(c)) log_warn("sensor channel " + std::to_string(c) + " is constant; it normalizes to 0");
  }
  return stats;
}

double normalize(double value, const NormalizationStats& stats, Index channel) {
  const double lo = stats.min(channel);
  const double hi = stats.max(channel);
  if (hi == lo) return 0.0;
  return (value - lo) / (hi - lo);
}

double denormalize(double value, const NormalizationStats& stats, Index channel) {
  const double lo = stats.min(channel);
  const double hi = stats.max(channel);
  if (hi == lo) return lo;
  return lo + value * (hi - lo);
}

RowMatrix normalize(const RowMatrix& values, const NormalizationStats& stats) {
  if (values.cols() != stats.channels()) {
    throw DimensionError("normalize: " + std::to_string(values.cols()) + " channels, stats have " +
                         std::to_string(stats.channels()));
  }
  RowMatrix out(values.rows(), values.cols());
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) out(r, c) = normalize(values(r, c), stats, c);
  }
  return out;
}

RowMatrix denormalize(const RowMatrix& values, const NormalizationStats& stats) {
  if (values.cols() != stats.channels()) {
    throw DimensionError("denormalize: " + std::to_string(values.cols()) + " channels, stats have " +
                         std::to_string(stats.channels()));
  }
  RowMatrix out(values.rows(), values.cols());
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) out(r, c) = denormalize(values(r, c), stats, c);
  }
  return out;
}

void NormalizationStats::save_to(ParamFile& file, const std::string& prefix) const {
  file.put(prefix + ".min", Tensor::from({static_cast<std::size_t>(min.size())},
                                          std::vector<double>(min.data(), min.data() + min.size())));
  file.put(prefix + ".max", Tensor::from({static_cast<std::size_t>(max.size())},
                                          std::vector<double>(max.data(), max.data() + max.size())));
}

NormalizationStats NormalizationStats::load_from(const ParamFile& file, const std::string& prefix) {
  NormalizationStats s;
  s.min = file.tensor(prefix + ".min").values();
  s.max = file.tensor(prefix + ".max").values();
  if (s.min.size() != s.max.size()) throw DataError("normalization stats: min/max length mismatch");
  return s;
}

// ---- state assignment ---------------------------------------------------------------

ClusterInput parse_cluster_input(const std::string& name) {
  if (name == "settings") return ClusterInput::Settings;
  if (name == "sensors") return ClusterInput::Sensors;
  throw ContractError("cluster input must be 'settings' or 'sensors', got '" + name + "'");
}

std::string to_string(ClusterInput input) { return input == ClusterInput::Settings ? "settings" : "sensors"; }

std::vector<std::string> cluster_feature_names(ClusterInput input) {
  std::vector<std::string> names;
  if (input == ClusterInput::Settings) {
    for (int s = 1; s <= kNumSettings; ++s) names.push_back("setting" + std::to_string(s));
  } else {
    for (int s : kSelectedSensors) names.push_back("sensor" + std::to_string(s));
  }
  return names;
}

Eigen::MatrixXd cluster_features(const SelectedRecord& record, ClusterInput input, const NormalizationStats& stats) {
  if (input == ClusterInput::Settings) return record.settings;
  RowMatrix n = normalize(record.sensors, stats);
  return Eigen::MatrixXd(n);
}

PreparedEngine prepare_engine(const SelectedRecord& record, const NormalizationStats& stats,
                              const ClusterModel& clusters, ClusterInput input) {
  PreparedEngine out;
  out.unit_id = record.unit_id;
  out.sensors = normalize(record.sensors, stats);
  out.states = assign_states(cluster_features(record, input, stats), clusters);
  return out;
}

// ---- windowing ----------------------------------------------------------------------

std::size_t window_count(std::size_t length, const WindowSpec& spec) {
  const auto w = static_cast<std::size_t>(spec.window);
  if (length < w) return 0;
  return (length - w) / static_cast<std::size_t>(spec.stride) + 1;
}

std::vector<WindowSample> make_windows(const PreparedEngine& engine, const WindowSpec& spec) {
  if (spec.window < 1 || spec.horizon < 1 || spec.stride < 1) {
    throw ContractError("make_windows: window, horizon and stride must be positive");
  }
  if (spec.rul_cap < 0) throw ContractError("make_windows: rul_cap must be non-negative");
  if (static_cast<std::size_t>(engine.length()) != engine.states.size()) {
    throw DimensionError("make_windows: state sequence length differs from sensor rows");
  }
  const Index L = engine.length();
  const Index W = spec.window;
  const Index H = spec.horizon;
  const Index D = engine.sensors.cols();
  std::vector<WindowSample> out;
  out.reserve(window_count(static_cast<std::size_t>(L), spec));
  for (Index cut = W; cut <= L; cut += spec.stride) {
    WindowSample s;
    s.unit_id = engine.unit_id;
    s.cutoff = static_cast<int>(cut);
    // Cycle c (1-based) lives in row c - 1.
    s.inputs = engine.sensors.middleRows(cut - W, W);
    s.input_states.assign(engine.states.begin() + (cut - W), engine.states.begin() + cut);
    s.future_states.assign(static_cast<std::size_t>(H), 0);
    s.future_sensors = RowMatrix::Zero(H, D);
    s.mask.assign(static_cast<std::size_t>(H), 0.0);
    for (Index h = 0; h < H; ++h) {
      const Index row = cut + h;  // cycle cut + h + 1
      if (row >= L) break;
      s.mask[static_cast<std::size_t>(h)] = 1.0;
      s.future_states[static_cast<std::size_t>(h)] = engine.states[static_cast<std::size_t>(row)];
      s.future_sensors.row(h) = engine.sensors.row(row);
    }
    s.rul = std::min(static_cast<double>(L - cut), spec.rul_cap);
    out.push_back(std::move(s));
  }
  return out;
}

int kept_cycles(std::size_t length, double pct) {
  if (!(pct > 0.0 && pct < 1.0)) throw ContractError("cutoff fraction must lie in (0, 1)");
  // The small guard keeps e.g. 0.7 * 100 from rounding down to 69.
  return static_cast<int>(std::floor(pct * static_cast<double>(length) + 1e-9));
}

Truncated truncate_at_fraction(const EngineRecord& record, double pct) {
  const int kept = kept_cycles(record.length(), pct);
  Truncated t;
  t.record.unit_id = record.unit_id;
  t.record.cycles.assign(record.cycles.begin(), record.cycles.begin() + kept);
  t.residual = static_cast<int>(record.length()) - kept;
  return t;
}

EngineSplit split_engines(std::size_t n_engines, double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ContractError("validation fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> idx(n_engines);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  EngineSplit split;
  if (n_engines < 2) {
    split.train = idx;
    return split;
  }
  auto n_val = static_cast<std::size_t>(std::lround(validation_fraction * static_cast<double>(n_engines)));
  n_val = std::clamp<std::size_t>(n_val, 1, n_engines - 1);
  split.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

// ---- cache -----------------------------------------------------------------------------

namespace {

constexpr char kCacheMagic[8] = {'M', 'A', 'F', 'N', 'W', 'I', 'N', 'D'};
constexpr std::uint32_t kCacheVersion = 1;

void write_matrix(std::ostream& os, const RowMatrix& m) {
  io::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  io::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.size(); ++i) io::write_le<double>(os, m.data()[i]);
}

RowMatrix read_matrix(std::istream& is) {
  const auto r = io::read_le<std::uint64_t>(is);
  const auto c = io::read_le<std::uint64_t>(is);
  if (r * c > (1ull << 30)) throw DataError("window cache: implausible matrix size");
  RowMatrix m(static_cast<Index>(r), static_cast<Index>(c));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = io::read_le<double>(is);
  return m;
}

template <typename T>
void write_vec(std::ostream& os, const std::vector<T>& v) {
  io::write_le<std::uint64_t>(os, v.size());
  for (const T& x : v) io::write_le<T>(os, x);
}

template <typename T>
std::vector<T> read_vec(std::istream& is) {
  const auto n = io::read_le<std::uint64_t>(is);
  if (n > (1ull << 30)) throw DataError("window cache: implausible vector size");
  std::vector<T> v(n);
  for (auto& x : v) x = io::read_le<T>(is);
  return v;
}

}  // namespace

void save_window_cache(const std::filesystem::path& path, std::span<const WindowSample> samples, std::uint64_t key) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(kCacheMagic, sizeof kCacheMagic);
  io::write_le<std::uint32_t>(os, kCacheVersion);
  io::write_le<std::uint64_t>(os, key);
  io::write_le<std::uint64_t>(os, samples.size());
  for (const auto& s : samples) {
    write_matrix(os, s.inputs);
    write_vec<std::int32_t>(os, std::vector<std::int32_t>(s.input_states.begin(), s.input_states.end()));
    write_vec<std::int32_t>(os, std::vector<std::int32_t>(s.future_states.begin(), s.future_states.end()));
    write_matrix(os, s.future_sensors);
    write_vec<double>(os, s.mask);
    io::write_le<double>(os, s.rul);
    io::write_le<std::int32_t>(os, s.unit_id);
    io::write_le<std::int32_t>(os, s.cutoff);
  }
  if (!os) throw DataError("write failed: " + path.string());
}

std::optional<std::vector<WindowSample>> load_window_cache(const std::filesystem::path& path, std::uint64_t key) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  char magic[8];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kCacheMagic)) return std::nullopt;
  if (io::read_le<std::uint32_t>(is) != kCacheVersion) return std::nullopt;
  if (io::read_le<std::uint64_t>(is) != key) return std::nullopt;
  const auto n = io::read_le<std::uint64_t>(is);
  std::vector<WindowSample> out;
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    WindowSample s;
    s.inputs = read_matrix(is);
    auto in_states = read_vec<std::int32_t>(is);
    s.input_states.assign(in_states.begin(), in_states.end());
    auto fut_states = read_vec<std::int32_t>(is);
    s.future_states.assign(fut_states.begin(), fut_states.end());
    s.future_sensors = read_matrix(is);
    s.mask = read_vec<double>(is);
    s.rul = io::read_le<double>(is);
    s.unit_id = io::read_le<std::int32_t>(is);
    s.cutoff = io::read_le<std::int32_t>(is);
    out.push_back(std::move(s));
  }
  return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    h = fnv1a(std::string_view(buf, static_cast<std::size_t>(is.gcount())), h);
  }
  return h;
}

}  // namespace mafn
