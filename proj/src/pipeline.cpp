#include "mafn/pipeline.hpp"

#include "mafn/log.hpp"

namespace mafn {

ClusterModel fit_clusters(std::span<const SelectedRecord> engines, const NormalizationStats& stats,
                          const TrainConfig& config) {
  const ClusterInput input = parse_cluster_input(config.cluster_features);
  std::vector<Eigen::MatrixXd> blocks;
  Eigen::Index rows = 0;
  for (const auto& e : engines) {
    blocks.push_back(cluster_features(e, input, stats));
    rows += blocks.back().rows();
  }
  if (rows == 0) throw ContractError("clustering: no cycles");
  Eigen::MatrixXd points(rows, blocks.front().cols());
  Eigen::Index r = 0;
  for (const auto& b : blocks) {
    points.middleRows(r, b.rows()) = b;
    r += b.rows();
  }
  KMeansOptions opts;
  opts.max_iter = config.kmeans_max_iter;
  opts.restarts = config.kmeans_restarts;
  opts.seed = config.seed;
  ClusterModel model = relabel_canonical(kmeans_fit(points, config.num_states, opts), points);
  model.feature_spec = cluster_feature_names(input);
  return model;
}

Preprocessed preprocess(std::span<const EngineRecord> records, const TrainConfig& config) {
  config.validate();
  if (records.size() < 2) throw ContractError("training needs at least 2 engines (one for validation)");
  const EngineSplit split = split_engines(records.size(), config.validation_fraction, config.seed);
  const std::vector<SelectedRecord> selected = select_sensors(records);
  std::vector<SelectedRecord> train_sel;
  for (std::size_t i : split.train) train_sel.push_back(selected[i]);

  Preprocessed p;
  p.stats = fit_normalization(train_sel);
  p.clusters = fit_clusters(train_sel, p.stats, config);
  const ClusterInput input = parse_cluster_input(config.cluster_features);
  for (std::size_t i : split.train) p.train.push_back(prepare_engine(selected[i], p.stats, p.clusters, input));
  for (std::size_t i : split.validation) {
    p.validation.push_back(prepare_engine(selected[i], p.stats, p.clusters, input));
  }
  return p;
}

std::vector<WindowSample> windows_for(std::span<const PreparedEngine> engines, const WindowSpec& spec) {
  std::vector<WindowSample> out;
  for (const auto& e : engines) {
    if (e.length() < spec.window) {
      log_warn("unit " + std::to_string(e.unit_id) + " has " + std::to_string(e.length()) +
               " cycles, fewer than the window; no training windows");
      continue;
    }
    auto w = make_windows(e, spec);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

TrainOutcome train_pipeline(std::span<const EngineRecord> records, const TrainConfig& config,
                            const EpochCallback& on_epoch) {
  Preprocessed p = in_stage("preprocess", [&] { return preprocess(records, config); });
  TrainData data;
  in_stage("windowing", [&] {
    data.train = windows_for(p.train, config.window_spec());
    data.validation = windows_for(p.validation, config.window_spec());
  });
  log_info("training on " + std::to_string(data.train.size()) + " windows, validating on " +
           std::to_string(data.validation.size()));

  const ModelDims dims = ModelDims::from_config(config, static_cast<int>(p.stats.channels()));
  TrainOutcome out;
  out.result = in_stage("train", [&] { return train(data, dims, config, on_epoch); });
  out.checkpoint.kind = Checkpoint::kKindModel;
  out.checkpoint.config = config;
  out.checkpoint.stats = p.stats;
  out.checkpoint.clusters = p.clusters;
  out.checkpoint.model = out.result.model;
  for (const auto& e : p.validation) out.checkpoint.validation_units.push_back(e.unit_id);
  return out;
}

}  // namespace mafn
