#include <doctest.h>

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "mafn/cmapss.hpp"
#include "support.hpp"

using namespace mafn;

namespace {

std::string row_text(int unit, int cycle, double base = 0.0) {
  std::ostringstream os;
  os << unit << ' ' << cycle;
  for (int i = 0; i < kNumSettings; ++i) os << ' ' << (0.1 * i + base);
  for (int s = 1; s <= kNumRawSensors; ++s) os << ' ' << (s + base);
  os << '\n';
  return os.str();
}

EngineRecord make_record(int unit, int length, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-5, 5);
  EngineRecord r;
  r.unit_id = unit;
  for (int c = 1; c <= length; ++c) {
    CycleRow row;
    row.cycle = c;
    for (auto& s : row.settings) s = u(rng);
    for (auto& s : row.sensors) s = u(rng);
    r.cycles.push_back(row);
  }
  return r;
}

PreparedEngine ramp_engine(int length, int channels = 2) {
  PreparedEngine e;
  e.unit_id = 3;
  e.sensors.resize(length, channels);
  for (int t = 0; t < length; ++t) {
    for (int c = 0; c < channels; ++c) e.sensors(t, c) = static_cast<double>(t) / length + c;
  }
  e.states.resize(static_cast<std::size_t>(length));
  for (int t = 0; t < length; ++t) e.states[static_cast<std::size_t>(t)] = t % 3;
  return e;
}

SelectedRecord one_channel(std::vector<double> v, int unit = 1) {
  SelectedRecord r;
  r.unit_id = unit;
  r.sensors.resize(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) r.sensors(static_cast<Eigen::Index>(i), 0) = v[i];
  r.settings = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(v.size()), kNumSettings);
  return r;
}

}  // namespace

TEST_CASE("parse a minimal two-line file") {
  std::istringstream is(row_text(1, 1) + row_text(1, 2));
  auto records = parse_cmapss(is);
  REQUIRE(records.size() == 1);
  CHECK(records[0].unit_id == 1);
  CHECK(records[0].length() == 2);
  CHECK(records[0].cycles[1].sensors[20] == 21);
}

TEST_CASE("parse groups units in order of appearance and preserves rows") {
  std::istringstream is(row_text(5, 1) + row_text(5, 2) + row_text(2, 1) + row_text(5, 3));
  auto records = parse_cmapss(is);
  REQUIRE(records.size() == 2);
  CHECK(records[0].unit_id == 5);
  CHECK(records[0].length() == 3);
  CHECK(records[1].unit_id == 2);
}

TEST_CASE("wrong column count is a parse error with the line number") {
  std::istringstream is(row_text(1, 1) + "1 2 3\n");
  try {
    parse_cmapss(is, "bad.txt");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad.txt") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
  }
  std::istringstream word(row_text(1, 1).replace(0, 1, "x"));
  CHECK_THROWS_AS(parse_cmapss(word), ParseError);
}

TEST_CASE("non-consecutive cycle index is a data error") {
  std::istringstream gap(row_text(1, 1) + row_text(1, 3));
  CHECK_THROWS_AS(parse_cmapss(gap), DataError);
  std::istringstream late_start(row_text(1, 2));
  CHECK_THROWS_AS(parse_cmapss(late_start), DataError);
}

TEST_CASE("parse, write, parse round-trips records") {
  std::mt19937_64 rng(3);
  std::vector<EngineRecord> records = {make_record(1, 7, rng), make_record(4, 3, rng)};
  std::ostringstream os;
  write_cmapss(os, records);
  std::istringstream is(os.str());
  CHECK(parse_cmapss(is) == records);
}

TEST_CASE("sensor selection") {
  std::istringstream is(row_text(1, 1));
  auto rec = parse_cmapss(is)[0];
  SelectedRecord sel = select_sensors(rec);
  REQUIRE(sel.sensors.cols() == 11);
  const std::vector<double> expected = {2, 3, 4, 7, 8, 11, 12, 15, 17, 20, 21};
  for (int i = 0; i < 11; ++i) CHECK(sel.sensors(0, i) == expected[static_cast<std::size_t>(i)]);

  rec.cycles[0].sensors[1] = 7.7;  // sensor 2
  CHECK(select_sensors(rec).sensors(0, 0) == 7.7);

  std::set<int> dropped;
  for (int s = 1; s <= 21; ++s) {
    if (std::find(kSelectedSensors.begin(), kSelectedSensors.end(), s) == kSelectedSensors.end()) dropped.insert(s);
  }
  CHECK(dropped == std::set<int>{1, 5, 6, 9, 10, 13, 14, 16, 18, 19});
  CHECK(sel.settings.cols() == 3);
}

TEST_CASE("fit_normalization examples") {
  const SelectedRecord a = one_channel({2, 4, 10});
  auto stats = fit_normalization(std::span<const SelectedRecord>(&a, 1));
  CHECK(stats.min(0) == 2);
  CHECK(stats.max(0) == 10);

  const SelectedRecord c = one_channel({5, 5, 5});
  auto flat = fit_normalization(std::span<const SelectedRecord>(&c, 1));
  CHECK(flat.min(0) == 5);
  CHECK(flat.max(0) == 5);
  CHECK(flat.degenerate(0));

  std::vector<SelectedRecord> two = {one_channel({1, 3}, 1), one_channel({7, 9}, 2)};
  auto joint = fit_normalization(two);
  CHECK(joint.min(0) == 1);
  CHECK(joint.max(0) == 9);

  CHECK_THROWS_AS(fit_normalization(std::span<const SelectedRecord>()), ContractError);
}

TEST_CASE("normalize examples") {
  NormalizationStats s;
  s.min = Eigen::VectorXd::Constant(2, 2.0);
  s.max = Eigen::VectorXd::Constant(2, 10.0);
  s.max(1) = 2.0;
  CHECK(normalize(2.0, s, 0) == 0.0);
  CHECK(normalize(10.0, s, 0) == 1.0);
  CHECK(normalize(6.0, s, 0) == 0.5);
  CHECK(normalize(14.0, s, 0) == 1.5);  // not clipped
  CHECK(normalize(5.0, s, 1) == 0.0);   // degenerate
  for (double v : {-3.0, 0.25, 0.5, 7.0}) CHECK(std::abs(normalize(denormalize(v, s, 0), s, 0) - v) <= 1e-12);
}

TEST_CASE("normalization round trip through a param file") {
  NormalizationStats s;
  s.min = Eigen::VectorXd::LinSpaced(11, -1, 1);
  s.max = s.min.array() + 3;
  ParamFile f;
  s.save_to(f);
  auto back = NormalizationStats::load_from(f);
  CHECK(back.min == s.min);
  CHECK(back.max == s.max);
}

TEST_CASE("window examples") {
  WindowSpec spec{30, 10, 1, 125};
  CHECK(make_windows(ramp_engine(200), spec).size() == 171);
  CHECK(window_count(200, spec) == 171);

  auto w220 = make_windows(ramp_engine(220), spec);
  auto at = [&](int cut) {
    return *std::find_if(w220.begin(), w220.end(), [&](const WindowSample& s) { return s.cutoff == cut; });
  };
  CHECK(at(100).rul == 120);
  CHECK(at(50).rul == 125);
  CHECK(at(220).rul == 0);

  CHECK(make_windows(ramp_engine(29), spec).empty());
}

TEST_CASE("window contents, targets and masks") {
  const PreparedEngine e = ramp_engine(40);
  WindowSpec spec{5, 4, 1, 125};
  for (const auto& s : make_windows(e, spec)) {
    const int cut = s.cutoff;
    for (int t = 0; t < 5; ++t) {
      CHECK(s.inputs(t, 1) == e.sensors(cut - 5 + t, 1));
      CHECK(s.input_states[static_cast<std::size_t>(t)] == e.states[static_cast<std::size_t>(cut - 5 + t)]);
    }
    bool seen_zero = false;
    for (int h = 0; h < 4; ++h) {
      const bool valid = cut + h < 40;
      CHECK(s.mask[static_cast<std::size_t>(h)] == (valid ? 1.0 : 0.0));
      // prefix of ones then zeros
      if (!valid) seen_zero = true;
      if (seen_zero) CHECK(s.mask[static_cast<std::size_t>(h)] == 0.0);
      if (valid) {
        CHECK(s.future_sensors(h, 0) == e.sensors(cut + h, 0));
        CHECK(s.future_states[static_cast<std::size_t>(h)] == e.states[static_cast<std::size_t>(cut + h)]);
      }
    }
    CHECK(s.rul >= 0);
    CHECK(s.rul <= 125);
    CHECK(s.rul == std::min(40.0 - cut, 125.0));
  }
}

TEST_CASE("window count formula holds for random lengths, windows and strides") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> len(1, 80), win(1, 20), str(1, 7), hor(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const int L = len(rng);
    WindowSpec spec{win(rng), hor(rng), str(rng), 50};
    // brute-force count of admissible cutoffs
    std::size_t expected = 0;
    for (int cut = spec.window; cut <= L; cut += spec.stride) ++expected;
    auto samples = make_windows(ramp_engine(L, 1), spec);
    CHECK(samples.size() == expected);
    CHECK(window_count(static_cast<std::size_t>(L), spec) == expected);
  }
}

TEST_CASE("training windows lie in [0, 1] after normalization") {
  std::mt19937_64 rng(8);
  std::vector<EngineRecord> recs = {make_record(1, 60, rng), make_record(2, 45, rng)};
  auto sel = select_sensors(recs);
  auto stats = fit_normalization(sel);
  ClusterModel one{1, Eigen::MatrixXd::Zero(1, 3), 0, {}};
  for (const auto& r : sel) {
    auto prepared = prepare_engine(r, stats, one, ClusterInput::Settings);
    for (const auto& w : make_windows(prepared, {20, 5, 3, 125})) {
      CHECK(w.inputs.minCoeff() >= 0.0);
      CHECK(w.inputs.maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("truncate_at_fraction examples") {
  std::mt19937_64 rng(1);
  auto t100 = truncate_at_fraction(make_record(1, 100, rng), 0.5);
  CHECK(t100.record.length() == 50);
  CHECK(t100.residual == 50);
  auto rec137 = make_record(2, 137, rng);
  auto t10 = truncate_at_fraction(rec137, 0.1);
  CHECK(t10.record.length() == 13);
  CHECK(t10.residual == 124);
  auto t90 = truncate_at_fraction(rec137, 0.9);
  CHECK(t90.record.length() == 123);
  CHECK(t90.residual == 14);
  CHECK(t90.record.cycles.back() == rec137.cycles[122]);
  CHECK(kept_cycles(100, 0.7) == 70);
  CHECK_THROWS_AS(truncate_at_fraction(rec137, 1.0), ContractError);
  CHECK_THROWS_AS(truncate_at_fraction(rec137, 0.0), ContractError);
}

TEST_CASE("engine split is seeded, disjoint and covers every engine") {
  auto a = split_engines(50, 0.2, 9);
  auto b = split_engines(50, 0.2, 9);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK(a.validation.size() == 10);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  for (auto v : a.validation) CHECK(all.insert(v).second);
  CHECK(all.size() == 50);
  auto two = split_engines(2, 0.01, 1);
  CHECK(two.train.size() == 1);
  CHECK(two.validation.size() == 1);
}

TEST_CASE("window cache round trip keyed by hash") {
  mafn::testing::TempDir dir("cache");
  auto windows = make_windows(ramp_engine(50), {10, 3, 2, 125});
  save_window_cache(dir / "w.bin", windows, 1234);
  auto back = load_window_cache(dir / "w.bin", 1234);
  REQUIRE(back.has_value());
  REQUIRE(back->size() == windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    CHECK((*back)[i].inputs == windows[i].inputs);
    CHECK((*back)[i].future_sensors == windows[i].future_sensors);
    CHECK((*back)[i].mask == windows[i].mask);
    CHECK((*back)[i].future_states == windows[i].future_states);
    CHECK((*back)[i].input_states == windows[i].input_states);
    CHECK((*back)[i].rul == windows[i].rul);
    CHECK((*back)[i].cutoff == windows[i].cutoff);
  }
  CHECK_FALSE(load_window_cache(dir / "w.bin", 999).has_value());
  CHECK_FALSE(load_window_cache(dir / "absent.bin", 1234).has_value());
}

TEST_CASE("RUL file parsing") {
  mafn::testing::TempDir dir("rul");
  {
    std::ofstream os(dir / "rul.txt");
    os << "112\n98\n\n69\n";
  }
  CHECK(parse_rul_file(dir / "rul.txt") == std::vector<double>{112, 98, 69});
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a("") == 14695981039346656037ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
}
