#ifndef MAFN_MODEL_HPP
#define MAFN_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mafn/checkpoint.hpp"
#include "mafn/cmapss.hpp"
#include "mafn/config.hpp"
#include "mafn/kmeans.hpp"
#include "mafn/layers.hpp"
#include "mafn/losses.hpp"

namespace mafn {

struct ModelDims {
  int sensors = 11;
  int states = 6;
  int window = 30;
  int horizon = 10;
  int embed_dim = 8;
  int kernel_size = 3;
  int num_filters = 32;
  int lstm_hidden = 32;
  int attention_dim = 32;
  int trend_dim = 4;
  std::vector<int> fusion_widths = {32, 32};
  int rul_hidden1 = 64;
  int rul_hidden2 = 32;
  /// The linear RUL output is multiplied by this constant, so unit-scale
  /// activations cover the capped target range.
  double rul_scale = 125.0;

  static ModelDims from_config(const TrainConfig& config, int sensors);
  void validate() const;
};

/// A mini-batch in time-major layout.
struct Batch {
  std::size_t size = 0;
  Sequence inputs;                              // window x [B x d_s]
  std::vector<std::vector<int>> input_states;   // window x B
  std::vector<std::vector<int>> future_states;  // horizon x B
  Tensor future_sensors;                        // [(horizon * B) x d_s], row h * B + b
  std::vector<int> future_states_flat;          // horizon * B, same row order
  std::vector<double> mask;                     // horizon * B
  Tensor rul;                                   // [B x 1]
};

Batch make_batch(std::span<const WindowSample* const> samples);
Batch make_batch(std::span<const WindowSample> samples);

/// Network outputs for a batch. Rows of the flattened tensors are h * B + b.
struct MafnOutput {
  Tensor state_logits;                // [(H * B) x K]
  Tensor trend;                       // [B x H], scalar trend per step
  Sequence trend_vectors;             // H x [B x d_d]
  Tensor forecast;                    // [(H * B) x d_s]
  Tensor rul;                         // [B x 1], before clamping
  Tensor attention;                   // [B x T]
  std::vector<int> fused_states;      // H * B states fed to the fusion path
};

/// Single-window view: shapes H x K, H, H x d_s, scalar, T.
struct SampleOutput {
  Tensor state_logits;
  Tensor trend;
  Tensor forecast;
  Tensor rul;
  Tensor attention;
  std::vector<int> states;
};

struct MafnModel {
  ModelDims dims;

  EmbeddingTable embedding;
  Conv1dLayer conv;
  LstmCell encoder_fwd;
  LstmCell encoder_bwd;
  AttentionParams attention;

  DenseLayer trend_init_h;
  DenseLayer trend_init_c;
  LstmCell trend_cell;
  DenseLayer trend_out;

  DenseLayer state_init_h;
  DenseLayer state_init_c;
  LstmCell state_cell;
  DenseLayer state_out;

  std::vector<DenseLayer> fusion;
  DenseLayer fusion_out;

  DenseLayer rul1;
  DenseLayer rul2;
  DenseLayer rul_out;

  MafnModel() = default;
  MafnModel(const ModelDims& dims, std::uint64_t seed);

  /// Every trainable tensor under a stable hierarchical name, sorted.
  NamedParams parameters() const;
  std::size_t parameter_count() const;

  /// With teacher forcing the fusion path embeds the batch's true future
  /// states (state 0 at masked steps); otherwise the state head's argmax.
  MafnOutput forward(const Batch& batch, bool teacher_forcing) const;
  SampleOutput forward(const WindowSample& sample, bool teacher_forcing = false) const;

  void save_to(ParamFile& file, const std::string& prefix = "model") const;
  /// Overwrites parameter values; throws DimensionError naming any mismatch.
  void load_from(const ParamFile& file, const std::string& prefix = "model");

  /// Independent deep copy.
  MafnModel clone() const;
  void copy_values_from(const MafnModel& other);
};

struct LossReport {
  LossComponents components;
  Tensor total;
};

/// The four head losses on one batch plus their weighted sum. When no
/// horizon step is valid the state and forecast terms are zero; with H = 1
/// the degradation term is zero. Zero terms stay attached to their heads.
LossReport compute_loss(const MafnModel& model, const Batch& batch, const LossWeights& weights,
                        bool teacher_forcing = true);

// ---- checkpoint and inference -------------------------------------------------

/*
 * Everything needed to score raw engine histories: network weights, the
 * operating-state clusterer, normalization and the training config. The
 * "oracle" kind carries no weights; it exists for evaluation tests.
 */
struct Checkpoint {
  static constexpr const char* kKindModel = "mafn";
  static constexpr const char* kKindOracle = "oracle";

  std::string kind = kKindModel;
  TrainConfig config;
  NormalizationStats stats;
  ClusterModel clusters;
  MafnModel model;
  std::vector<int> validation_units;

  ParamFile to_file() const;
  static Checkpoint from_file(const ParamFile& file);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  bool is_oracle() const { return kind == kKindOracle; }
};

/// Normalization + state assignment of a raw record under a checkpoint.
PreparedEngine prepare(const EngineRecord& record, const Checkpoint& ckpt);

/// Input sample from the last `window` cycles, left-padded by repeating the
/// first cycle when the history is shorter (unless the config forbids it).
WindowSample last_window(const PreparedEngine& engine, const TrainConfig& config);

/// RUL estimate clamped to [0, rul_cap].
double predict_rul(const EngineRecord& history, const Checkpoint& ckpt);
double clamp_rul(double raw, double cap);

struct Forecast {
  RowMatrix sensors;       // H x d_s, original units
  RowMatrix normalized;    // H x d_s
  std::vector<int> states; // H predicted states
  std::vector<double> trend;
  double rul = 0.0;
};

Forecast forecast_trajectory(const EngineRecord& history, const Checkpoint& ckpt);

}  // namespace mafn

#endif  // MAFN_MODEL_HPP
