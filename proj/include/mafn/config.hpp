#ifndef MAFN_CONFIG_HPP
#define MAFN_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mafn/cmapss.hpp"
#include "mafn/losses.hpp"

namespace mafn {

/// Environment variables named MAFN_<UPPERCASE_KEY> override config keys.
inline constexpr const char* kEnvPrefix = "MAFN_";

/*
 * Every tunable of the pipeline. Serialized as a flat JSON object whose keys
 * are the member names below; absent keys keep their defaults and unknown
 * keys are rejected.
 */
struct TrainConfig {
  // data
  int window = 30;
  int horizon = 10;
  int stride = 1;
  double rul_cap = 125.0;
  int num_states = 6;
  std::string cluster_features = "settings";
  int kmeans_restarts = 10;
  int kmeans_max_iter = 300;
  double validation_fraction = 0.2;
  std::string short_history = "repeat_first";  // or "error"

  // network
  int embed_dim = 8;
  int kernel_size = 3;
  int num_filters = 32;
  int lstm_hidden = 32;
  int attention_dim = 32;
  int trend_dim = 4;
  std::vector<int> fusion_widths = {32, 32};
  int rul_hidden1 = 64;
  int rul_hidden2 = 32;
  double rul_scale = 125.0;

  // losses
  LossWeights loss;

  // optimization
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double grad_clip = 5.0;  // global-norm clip; 0 disables
  int batch_size = 64;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 42;

  void validate() const;

  WindowSpec window_spec() const { return {window, horizon, stride, rul_cap}; }

  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  std::string dump() const;

  static TrainConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Applies MAFN_* environment overrides, then re-validates.
  void apply_env_overrides();

  std::uint64_t hash() const;
};

}  // namespace mafn

#endif  // MAFN_CONFIG_HPP
