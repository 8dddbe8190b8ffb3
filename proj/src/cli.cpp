#include "mafn/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mafn/cmapss.hpp"
#include "mafn/config.hpp"
#include "mafn/log.hpp"
#include "mafn/model.hpp"
#include "mafn/pipeline.hpp"
#include "mafn/svg.hpp"
#include "mafn/synth.hpp"
#include "mafn/trainer.hpp"

namespace fs = std::filesystem;

namespace mafn {

namespace {

using nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/*
 * Output directory bookkeeping: tracks what a command wrote so a failed run
 * can remove its partial outputs, and emits the manifest last.
 */
class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) {
    created_dir_ = !fs::exists(dir_);
    fs::create_directories(dir_);
  }

  fs::path file(const std::string& name) {
    written_.push_back(name);
    return dir_ / name;
  }

  std::ofstream open(const std::string& name) {
    std::ofstream os(file(name), std::ios::trunc | std::ios::binary);
    if (!os) throw DataError("cannot open " + (dir_ / name).string() + " for writing");
    return os;
  }

  void write_manifest(ordered_json manifest) {
    ordered_json artifacts = ordered_json::array();
    for (const auto& w : written_) artifacts.push_back(w);
    manifest["artifacts"] = artifacts;
    auto os = open("manifest.json");
    os << manifest.dump(2) << '\n';
  }

  void discard() noexcept {
    std::error_code ec;
    for (const auto& w : written_) fs::remove(dir_ / w, ec);
    if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }

 private:
  fs::path dir_;
  bool created_dir_ = false;
  std::vector<std::string> written_;
};

ordered_json manifest_base(const std::string& command, std::uint64_t seed) {
  ordered_json m;
  m["tool"] = "mafn";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["seed"] = seed;
  return m;
}

ordered_json input_entry(const fs::path& path) {
  ordered_json e;
  e["path"] = path.string();
  e["fnv1a64"] = hex64(hash_file(path));
  return e;
}

std::vector<EngineRecord> read_records(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("data file not found: " + path.string());
  return parse_cmapss(path);
}

struct Common {
  std::string config_path;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
};

TrainConfig load_config(const Common& c) {
  TrainConfig cfg = c.config_path.empty() ? TrainConfig{} : TrainConfig::load(c.config_path);
  cfg.apply_env_overrides();
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::ValidationError(std::string(flag) + " is required");
}

// ---- commands -------------------------------------------------------------------

void cmd_config_init(const std::string& out_path, std::ostream& out) {
  const std::string text = TrainConfig{}.dump();
  if (out_path.empty()) {
    out << text;
    return;
  }
  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + out_path + " for writing");
  os << text;
}

void cmd_config_show(const Common& c, std::ostream& out) { out << load_config(c).dump(); }

void cmd_cluster(const Common& c, std::ostream& out) {
  require(c.data, "--data");
  require(c.out, "--out");
  const TrainConfig cfg = load_config(c);
  const auto records = read_records(c.data);
  const auto selected = select_sensors(records);
  const NormalizationStats stats = fit_normalization(selected);
  const ClusterModel model = fit_clusters(selected, stats, cfg);

  const ClusterInput input = parse_cluster_input(cfg.cluster_features);
  std::vector<int> counts(static_cast<std::size_t>(model.k), 0);
  for (const auto& e : selected) {
    for (int s : assign_states(cluster_features(e, input, stats), model)) ++counts[static_cast<std::size_t>(s)];
  }

  OutputDir dir(c.out);
  try {
    {
      auto os = dir.open("clusters.csv");
      os << "cluster,count";
      for (const auto& f : model.feature_spec) os << ',' << f;
      os << '\n';
      char buf[32];
      for (int k = 0; k < model.k; ++k) {
        os << k << ',' << counts[static_cast<std::size_t>(k)];
        for (Eigen::Index j = 0; j < model.centroids.cols(); ++j) {
          std::snprintf(buf, sizeof buf, "%.10g", model.centroids(k, j));
          os << ',' << buf;
        }
        os << '\n';
      }
    }
    ParamFile pf;
    model.save_to(pf);
    stats.save_to(pf);
    pf.save(dir.file("cluster_model.bin"));
    ordered_json m = manifest_base("cluster", cfg.seed);
    m["config"] = cfg.to_json();
    m["inputs"]["data"] = input_entry(c.data);
    dir.write_manifest(m);
  } catch (...) {
    dir.discard();
    throw;
  }
  out << "clusters: " << model.k << ", inertia " << model.inertia << '\n';
  for (int k = 0; k < model.k; ++k) out << "  cluster " << k << ": " << counts[static_cast<std::size_t>(k)] << " cycles\n";
}

void cmd_train(const Common& c, std::ostream& out) {
  require(c.data, "--data");
  require(c.out, "--out");
  const TrainConfig cfg = load_config(c);
  OutputDir dir(c.out);
  try {
    const auto records = in_stage("parse", [&] { return read_records(c.data); });
    TrainOutcome t = train_pipeline(records, cfg, [](const EpochLog& e) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %d: train %.6g, val %.6g", e.epoch, e.total, e.val_total);
      log_info(buf);
    });
    in_stage("checkpoint", [&] { t.checkpoint.save(dir.file("checkpoint.bin")); });
    {
      auto os = dir.open("training_log.csv");
      write_training_log(os, t.result.log);
    }
    cfg.save(dir.file("config.json"));
    ordered_json m = manifest_base("train", cfg.seed);
    m["config"] = cfg.to_json();
    m["inputs"]["data"] = input_entry(c.data);
    if (!c.config_path.empty()) m["inputs"]["config"] = input_entry(c.config_path);
    m["best_epoch"] = t.result.best_epoch;
    dir.write_manifest(m);
    out << "trained " << t.result.log.size() << " epochs, best epoch " << t.result.best_epoch << " (val "
        << t.result.best_val << ")\n";
  } catch (...) {
    dir.discard();
    throw;
  }
}

void check_compatible(const Checkpoint& ckpt) {
  const auto expected = static_cast<Eigen::Index>(kSelectedSensors.size());
  if (ckpt.stats.channels() != expected) {
    throw DimensionError("checkpoint expects " + std::to_string(ckpt.stats.channels()) +
                         " sensor channels, the data provides " + std::to_string(expected));
  }
  const auto cluster_dim = static_cast<Eigen::Index>(
      cluster_feature_names(parse_cluster_input(ckpt.config.cluster_features)).size());
  if (ckpt.clusters.dim() != cluster_dim) {
    throw DimensionError("checkpoint clusters expect " + std::to_string(ckpt.clusters.dim()) +
                         " features, found " + std::to_string(cluster_dim));
  }
}

void cmd_evaluate(const Common& c, const std::string& checkpoint, const std::string& mode, const std::string& rul_path,
                  bool holdout, bool uncapped, std::ostream& out) {
  require(checkpoint, "--checkpoint");
  require(c.data, "--data");
  require(c.out, "--out");
  if (!fs::exists(checkpoint)) throw DataError("checkpoint not found: " + checkpoint);
  const Checkpoint ckpt = Checkpoint::load(checkpoint);
  check_compatible(ckpt);
  auto records = read_records(c.data);
  const RulPredictor predict = checkpoint_predictor(ckpt);

  ordered_json m = manifest_base("evaluate", ckpt.config.seed);
  m["mode"] = mode;
  m["inputs"]["checkpoint"] = input_entry(checkpoint);
  m["inputs"]["data"] = input_entry(c.data);

  std::ostringstream report;
  std::string name;
  if (mode == "cutoffs") {
    if (holdout) {
      const auto& keep = ckpt.validation_units;
      std::erase_if(records, [&](const EngineRecord& r) {
        return std::find(keep.begin(), keep.end(), r.unit_id) == keep.end();
      });
      if (records.empty()) throw DataError("no held-out units of the checkpoint appear in " + c.data);
    }
    m["holdout"] = holdout;
    const auto rows = evaluate_cutoffs(records, predict, ckpt.config.rul_cap, min_history(ckpt.config));
    write_cutoff_report(report, rows);
    name = "cutoffs.csv";
  } else {
    require(rul_path, "--rul");
    if (!fs::exists(rul_path)) throw DataError("RUL file not found: " + rul_path);
    const auto rul = parse_rul_file(rul_path);
    m["inputs"]["rul"] = input_entry(rul_path);
    m["cap_truth"] = !uncapped;
    write_testset_report(report, evaluate_testset(records, rul, predict, ckpt.config.rul_cap, !uncapped));
    name = "testset.csv";
  }

  OutputDir dir(c.out);
  try {
    auto os = dir.open(name);
    os << report.str();
    os.close();
    dir.write_manifest(m);
  } catch (...) {
    dir.discard();
    throw;
  }
  out << report.str();
}

std::size_t sensor_column(int sensor) {
  const auto it = std::find(kSelectedSensors.begin(), kSelectedSensors.end(), sensor);
  if (it == kSelectedSensors.end()) {
    std::string list;
    for (int s : kSelectedSensors) list += (list.empty() ? "" : ", ") + std::to_string(s);
    throw ContractError("sensor " + std::to_string(sensor) + " is not modelled; choose one of " + list);
  }
  return static_cast<std::size_t>(it - kSelectedSensors.begin());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void cmd_forecast(const Common& c, const std::string& checkpoint, int unit, double cutoff_pct, int sensor,
                  std::ostream& out) {
  require(checkpoint, "--checkpoint");
  require(c.data, "--data");
  require(c.out, "--out");
  if (!fs::exists(checkpoint)) throw DataError("checkpoint not found: " + checkpoint);
  const Checkpoint ckpt = Checkpoint::load(checkpoint);
  check_compatible(ckpt);
  const std::size_t col = sensor_column(sensor);
  const auto records = read_records(c.data);
  const auto it = std::find_if(records.begin(), records.end(), [&](const EngineRecord& r) { return r.unit_id == unit; });
  if (it == records.end()) {
    std::string ids;
    for (const auto& r : records) ids += (ids.empty() ? "" : ", ") + std::to_string(r.unit_id);
    throw DataError("unit " + std::to_string(unit) + " not found; available units: " + ids);
  }
  if (!(cutoff_pct > 0 && cutoff_pct < 100)) {
    throw ContractError("cutoff " + fmt(cutoff_pct) + "% leaves no remaining cycles to forecast; use (0, 100)");
  }
  const Truncated t = truncate_at_fraction(*it, cutoff_pct / 100.0);
  const int kept = static_cast<int>(t.record.length());
  if (kept < ckpt.config.window) {
    throw ContractError("cutoff keeps " + std::to_string(kept) + " cycles, fewer than the window of " +
                        std::to_string(ckpt.config.window));
  }
  if (t.residual < 1) throw ContractError("cutoff leaves no remaining cycles to forecast");

  const Forecast f = forecast_trajectory(t.record, ckpt);
  const PreparedEngine full = prepare(*it, ckpt);
  const int H = ckpt.config.horizon;
  const int life = static_cast<int>(it->length());

  std::ostringstream csv;
  csv << "cycle,history,forecast,truth\n";
  LineSeries hist{"history", "#1f77b4", {}}, fc{"forecast", "#ff7f0e", {}}, truth{"truth", "#2ca02c", {}};
  for (int i = 0; i < kept; ++i) {
    const double v = full.sensors(i, static_cast<Eigen::Index>(col));
    csv << (i + 1) << ',' << fmt(v) << ",,\n";
    hist.points.emplace_back(i + 1, v);
  }
  for (int h = 0; h < H; ++h) {
    const int cycle = kept + h + 1;
    const double p = f.normalized(h, static_cast<Eigen::Index>(col));
    csv << cycle << ",," << fmt(p) << ',';
    fc.points.emplace_back(cycle, p);
    if (cycle <= life) {
      const double v = full.sensors(cycle - 1, static_cast<Eigen::Index>(col));
      csv << fmt(v);
      truth.points.emplace_back(cycle, v);
    }
    csv << '\n';
  }
  // Ground truth continues to failure so the true TTF marker has context.
  for (int cycle = kept + H + 1; cycle <= life; ++cycle) {
    truth.points.emplace_back(cycle, full.sensors(cycle - 1, static_cast<Eigen::Index>(col)));
  }

  LineChart chart;
  chart.title = "Unit " + std::to_string(unit) + ", sensor " + std::to_string(sensor) + ", cutoff " +
                fmt(cutoff_pct) + "%";
  chart.x_label = "cycle";
  chart.y_label = "normalized sensor " + std::to_string(sensor);
  chart.series = {hist, fc, truth};
  chart.markers = {{"predicted failure", "#d62728", kept + f.rul}, {"true failure", "#7f7f7f", double(life)}};
  std::ostringstream svg;
  write_svg(svg, chart);

  OutputDir dir(c.out);
  try {
    {
      auto os = dir.open("forecast.csv");
      os << csv.str();
    }
    {
      auto os = dir.open("forecast.svg");
      os << svg.str();
    }
    ordered_json m = manifest_base("forecast", ckpt.config.seed);
    m["unit"] = unit;
    m["cutoff_pct"] = cutoff_pct;
    m["sensor"] = sensor;
    m["inputs"]["checkpoint"] = input_entry(checkpoint);
    m["inputs"]["data"] = input_entry(c.data);
    dir.write_manifest(m);
  } catch (...) {
    dir.discard();
    throw;
  }
  out << "unit " << unit << ": kept " << kept << " cycles, predicted RUL " << fmt(f.rul) << ", true RUL "
      << t.residual << '\n';
}

void cmd_synthesize(const Common& c, const std::string& spec_path, std::ostream& out) {
  require(c.out, "--out");
  SynthSpec spec = spec_path.empty() ? SynthSpec{} : SynthSpec::load(spec_path);
  if (c.seed) spec.seed = *c.seed;
  spec.validate();
  const SynthDataset data = synthesize(spec);
  OutputDir dir(c.out);
  try {
    // write_synth picks the names; register them for cleanup and the manifest.
    dir.file("train.txt");
    dir.file("truth.csv");
    if (spec.test_engines > 0) {
      dir.file("test.txt");
      dir.file("rul.txt");
      dir.file("test_truth.csv");
    }
    write_synth(data, c.out);
    {
      auto os = dir.open("spec.json");
      os << spec.to_json().dump(2) << '\n';
    }
    ordered_json m = manifest_base("synthesize", spec.seed);
    m["spec"] = spec.to_json();
    dir.write_manifest(m);
  } catch (...) {
    dir.discard();
    throw;
  }
  out << "synthesized " << data.train.size() << " engines (" << data.truth.size() << " cycles)";
  if (!data.test.empty()) out << " and " << data.test.size() << " test engines";
  out << '\n';
}

void add_common(CLI::App* app, Common& c, bool config, bool data) {
  if (config) app->add_option("--config", c.config_path, "JSON config file (defaults apply for absent keys)");
  if (data) app->add_option("--data", c.data, "C-MAPSS format data file");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "seed overriding the config");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-head attention fusion network for turbofan RUL prognostics", "mafn"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  bool quiet = false, verbose = false;
  app.add_flag("-q,--quiet", quiet, "suppress warnings");
  app.add_flag("-v,--verbose", verbose, "progress output on stderr");

  Common common;
  std::string checkpoint, mode = "cutoffs", rul_path, spec_path, config_out;
  bool holdout = false, uncapped = false;
  int unit = 0, sensor = 7;
  double cutoff = 70.0;

  auto* config = app.add_subcommand("config", "config file helpers");
  config->require_subcommand(1);
  auto* init = config->add_subcommand("init", "write the default config");
  init->add_option("--out", config_out, "file to write (stdout when absent)");
  auto* show = config->add_subcommand("show", "print the effective config after overrides");
  add_common(show, common, true, false);

  auto* cluster = app.add_subcommand("cluster", "fit operating-state clusters");
  add_common(cluster, common, true, true);

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train, common, true, true);

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint");
  add_common(evaluate, common, false, true);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file");
  evaluate->add_option("--mode", mode, "cutoffs or testset")->check(CLI::IsMember({"cutoffs", "testset"}));
  evaluate->add_option("--rul", rul_path, "RUL file (testset mode)");
  evaluate->add_flag("--holdout", holdout, "cutoffs mode: only the checkpoint's validation units");
  evaluate->add_flag("--uncapped-truth", uncapped, "testset mode: do not cap true RUL at rul_cap");

  auto* forecast = app.add_subcommand("forecast", "plot a post-cutoff sensor forecast");
  add_common(forecast, common, false, true);
  forecast->add_option("--checkpoint", checkpoint, "checkpoint file");
  forecast->add_option("--unit", unit, "unit id")->required();
  forecast->add_option("--cutoff", cutoff, "percentage of the life kept as history");
  forecast->add_option("--sensor", sensor, "sensor number (1-based, one of the modelled sensors)");

  auto* synth = app.add_subcommand("synthesize", "generate a synthetic fleet with known ground truth");
  add_common(synth, common, false, false);
  synth->add_option("--spec", spec_path, "JSON generator spec");

  std::vector<const char*> argv{"mafn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  set_log_level(quiet ? LogLevel::Quiet : verbose ? LogLevel::Info : LogLevel::Warn);
  try {
    if (*config) {
      if (*init) cmd_config_init(config_out, out);
      if (*show) cmd_config_show(common, out);
    } else if (*cluster) {
      cmd_cluster(common, out);
    } else if (*train) {
      cmd_train(common, out);
    } else if (*evaluate) {
      cmd_evaluate(common, checkpoint, mode, rul_path, holdout, uncapped, out);
    } else if (*forecast) {
      cmd_forecast(common, checkpoint, unit, cutoff, sensor, out);
    } else if (*synth) {
      cmd_synthesize(common, spec_path, out);
    }
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "error: numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace mafn
