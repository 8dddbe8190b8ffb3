#ifndef MAFN_PIPELINE_HPP
#define MAFN_PIPELINE_HPP

#include <span>
#include <vector>

#include "mafn/cmapss.hpp"
#include "mafn/config.hpp"
#include "mafn/kmeans.hpp"
#include "mafn/model.hpp"
#include "mafn/trainer.hpp"

namespace mafn {

/// K-Means over the configured features of every cycle, canonically labelled.
ClusterModel fit_clusters(std::span<const SelectedRecord> engines, const NormalizationStats& stats,
                          const TrainConfig& config);

struct Preprocessed {
  NormalizationStats stats;
  ClusterModel clusters;
  std::vector<PreparedEngine> train;
  std::vector<PreparedEngine> validation;
};

/// Engine-level split, then normalization and clustering fitted on the
/// training side only and applied to both.
Preprocessed preprocess(std::span<const EngineRecord> records, const TrainConfig& config);

/// Windows of every engine; engines shorter than the window contribute none.
std::vector<WindowSample> windows_for(std::span<const PreparedEngine> engines, const WindowSpec& spec);

struct TrainOutcome {
  Checkpoint checkpoint;
  TrainResult result;
};

TrainOutcome train_pipeline(std::span<const EngineRecord> records, const TrainConfig& config,
                            const EpochCallback& on_epoch = {});

}  // namespace mafn

#endif  // MAFN_PIPELINE_HPP
