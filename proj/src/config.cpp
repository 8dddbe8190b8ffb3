#include "mafn/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>

namespace mafn {

using nlohmann::json;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ContractError(std::string("config: ") + name + " must be positive");
  };
  positive(window, "window");
  positive(horizon, "horizon");
  positive(stride, "stride");
  positive(num_states, "num_states");
  positive(kmeans_restarts, "kmeans_restarts");
  positive(kmeans_max_iter, "kmeans_max_iter");
  positive(embed_dim, "embed_dim");
  positive(kernel_size, "kernel_size");
  positive(num_filters, "num_filters");
  positive(lstm_hidden, "lstm_hidden");
  positive(attention_dim, "attention_dim");
  positive(trend_dim, "trend_dim");
  positive(rul_hidden1, "rul_hidden1");
  positive(rul_hidden2, "rul_hidden2");
  positive(batch_size, "batch_size");
  positive(max_epochs, "max_epochs");
  for (int w : fusion_widths) positive(w, "fusion_widths entries");
  if (patience < 0) throw ContractError("config: patience must be >= 0");
  if (!(rul_cap > 0)) throw ContractError("config: rul_cap must be positive");
  if (!(rul_scale > 0)) throw ContractError("config: rul_scale must be positive");
  if (!(validation_fraction > 0 && validation_fraction < 1)) {
    throw ContractError("config: validation_fraction must lie in (0, 1)");
  }
  if (!(learning_rate >= 0)) throw ContractError("config: learning_rate must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ContractError("config: Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0)) throw ContractError("config: adam_epsilon must be positive");
  if (!(grad_clip >= 0)) throw ContractError("config: grad_clip must be >= 0");
  if (kernel_size > 2 * window) throw ContractError("config: kernel_size exceeds twice the window");
  if (short_history != "repeat_first" && short_history != "error") {
    throw ContractError("config: short_history must be 'repeat_first' or 'error'");
  }
  parse_cluster_input(cluster_features);
  loss.validate();
}

ordered_json TrainConfig::to_json() const {
  ordered_json j;
  j["window"] = window;
  j["horizon"] = horizon;
  j["stride"] = stride;
  j["rul_cap"] = rul_cap;
  j["num_states"] = num_states;
  j["cluster_features"] = cluster_features;
  j["kmeans_restarts"] = kmeans_restarts;
  j["kmeans_max_iter"] = kmeans_max_iter;
  j["validation_fraction"] = validation_fraction;
  j["short_history"] = short_history;
  j["embed_dim"] = embed_dim;
  j["kernel_size"] = kernel_size;
  j["num_filters"] = num_filters;
  j["lstm_hidden"] = lstm_hidden;
  j["attention_dim"] = attention_dim;
  j["trend_dim"] = trend_dim;
  j["fusion_widths"] = fusion_widths;
  j["rul_hidden1"] = rul_hidden1;
  j["rul_hidden2"] = rul_hidden2;
  j["rul_scale"] = rul_scale;
  j["w_state"] = loss.w_state;
  j["w_degradation"] = loss.w_degradation;
  j["w_forecast"] = loss.w_forecast;
  j["w_rul"] = loss.w_rul;
  j["lambda_smooth"] = loss.lambda_smooth;
  j["lambda_late"] = loss.lambda_late;
  j["lambda_early"] = loss.lambda_early;
  j["learning_rate"] = learning_rate;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["adam_epsilon"] = adam_epsilon;
  j["grad_clip"] = grad_clip;
  j["batch_size"] = batch_size;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["seed"] = seed;
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ContractError("config: top level must be a JSON object");
  TrainConfig c;
  const ordered_json defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ContractError("config: unknown key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception& e) {
      throw ContractError(std::string("config: bad value for '") + key + "': " + e.what());
    }
  };
  get("window", c.window);
  get("horizon", c.horizon);
  get("stride", c.stride);
  get("rul_cap", c.rul_cap);
  get("num_states", c.num_states);
  get("cluster_features", c.cluster_features);
  get("kmeans_restarts", c.kmeans_restarts);
  get("kmeans_max_iter", c.kmeans_max_iter);
  get("validation_fraction", c.validation_fraction);
  get("short_history", c.short_history);
  get("embed_dim", c.embed_dim);
  get("kernel_size", c.kernel_size);
  get("num_filters", c.num_filters);
  get("lstm_hidden", c.lstm_hidden);
  get("attention_dim", c.attention_dim);
  get("trend_dim", c.trend_dim);
  get("fusion_widths", c.fusion_widths);
  get("rul_hidden1", c.rul_hidden1);
  get("rul_hidden2", c.rul_hidden2);
  get("rul_scale", c.rul_scale);
  get("w_state", c.loss.w_state);
  get("w_degradation", c.loss.w_degradation);
  get("w_forecast", c.loss.w_forecast);
  get("w_rul", c.loss.w_rul);
  get("lambda_smooth", c.loss.lambda_smooth);
  get("lambda_late", c.loss.lambda_late);
  get("lambda_early", c.loss.lambda_early);
  get("learning_rate", c.learning_rate);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("adam_epsilon", c.adam_epsilon);
  get("grad_clip", c.grad_clip);
  get("batch_size", c.batch_size);
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  get("seed", c.seed);
  c.validate();
  return c;
}

std::string TrainConfig::dump() const { return to_json().dump(2) + "\n"; }

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void TrainConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << dump();
}

void TrainConfig::apply_env_overrides() {
  ordered_json j = to_json();
  bool changed = false;
  for (auto& [key, value] : j.items()) {
    std::string env = kEnvPrefix;
    for (char ch : key) env += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    const char* raw = std::getenv(env.c_str());
    if (!raw) continue;
    try {
      value = value.is_string() ? json(std::string(raw)) : json::parse(raw);
    } catch (const json::parse_error&) {
      throw ContractError("environment override " + env + " is not a valid value: '" + std::string(raw) + "'");
    }
    changed = true;
  }
  if (changed) *this = from_json(j);
}

std::uint64_t TrainConfig::hash() const { return fnv1a(to_json().dump()); }

}  // namespace mafn
