#ifndef MAFN_LAYERS_HPP
#define MAFN_LAYERS_HPP

#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mafn/tensor.hpp"

namespace mafn {

/// Time-major batch: element t is the [B x F] slice at step t.
using Sequence = std::vector<Tensor>;
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

enum class Activation { Identity, Relu, Tanh };

Tensor activate(const Tensor& x, Activation act);

/// Uniform in +-sqrt(6 / (fan_in + fan_out)), shape [fan_in x fan_out].
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
Tensor uniform(Shape shape, double bound, std::mt19937_64& rng);

// ---- embedding ------------------------------------------------------------------

struct EmbeddingTable {
  Tensor weights;  // K x m

  EmbeddingTable() = default;
  EmbeddingTable(std::size_t states, std::size_t dim, std::mt19937_64& rng);
  explicit EmbeddingTable(Tensor w) : weights(std::move(w)) {}

  std::size_t states() const { return weights.shape()[0]; }
  std::size_t dim() const { return weights.shape()[1]; }
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Row lookup, [T] ids -> [T x m].
Tensor embed(std::span<const int> ids, const EmbeddingTable& table);

// ---- dense ------------------------------------------------------------------------

struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
  Activation activation = Activation::Identity;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng);
  DenseLayer(Tensor w, Tensor b, Activation act) : weight(std::move(w)), bias(std::move(b)), activation(act) {}

  std::size_t in() const { return weight.shape()[0]; }
  std::size_t out() const { return weight.shape()[1]; }
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// activation(x W + b) for x [B x in].
Tensor dense(const Tensor& x, const DenseLayer& layer);

// ---- convolution ------------------------------------------------------------------

/*
 * 1-D convolution over time with stride 1 and "same" zero padding.
 *
 * `weights` stacks the kernel slices: row j * C + c holds W_{j,c} for every
 * filter (one filter per column), so one matmul applies a whole filter bank
 * to the flattened receptive field. The left pad is p = floor((k - 1) / 2)
 * and the right pad k - 1 - p.
 */
struct Conv1dLayer {
  Tensor weights;  // (k * C) x N_f
  Tensor bias;     // 1 x N_f
  std::size_t kernel = 1;
  std::size_t channels = 1;
  Activation activation = Activation::Relu;

  Conv1dLayer() = default;
  Conv1dLayer(std::size_t kernel, std::size_t channels, std::size_t filters, Activation act, std::mt19937_64& rng);

  std::size_t filters() const { return weights.shape()[1]; }
  std::size_t left_pad() const { return (kernel - 1) / 2; }
  void collect(const std::string& prefix, NamedParams& out) const;
};

Sequence conv1d(const Sequence& x, const Conv1dLayer& layer);
/// Single sequence: [T x C] -> [T x N_f].
Tensor conv1d(const Tensor& x, const Conv1dLayer& layer);

// ---- recurrent ----------------------------------------------------------------------

struct LstmCell {
  // Gate order: input, forget, candidate (g), output.
  Tensor W_i, W_f, W_g, W_o;  // in x H
  Tensor U_i, U_f, U_g, U_o;  // H x H
  Tensor b_i, b_f, b_g, b_o;  // 1 x H

  LstmCell() = default;
  /// Uniform(+-1/sqrt(H)) weights, zero biases except forget bias = 1.
  LstmCell(std::size_t input, std::size_t hidden, std::mt19937_64& rng);

  std::size_t input() const { return W_i.shape()[0]; }
  std::size_t hidden() const { return W_i.shape()[1]; }
  void collect(const std::string& prefix, NamedParams& out) const;
};

struct LstmState {
  Tensor h;
  Tensor c;
};

/// Gate matrices concatenated once per forward pass.
struct FusedLstm {
  Tensor W;  // in x 4H
  Tensor U;  // H x 4H
  Tensor b;  // 1 x 4H
  std::size_t hidden;

  explicit FusedLstm(const LstmCell& cell);
};

LstmState lstm_step(const Tensor& x, const LstmState& prev, const FusedLstm& cell);
LstmState lstm_step(const Tensor& x, const LstmState& prev, const LstmCell& cell);
LstmState lstm_zero_state(std::size_t batch, std::size_t hidden);

/// Unrolls over the sequence from a zero state; returns every hidden state.
Sequence lstm_unroll(const Sequence& x, const LstmCell& cell, bool reverse = false);

/// Per step [forward h_t ; backward h_t], both directions from zero state.
Sequence bilstm(const Sequence& x, const LstmCell& forward, const LstmCell& backward);
/// Single sequence: [T x F] -> [T x 2H].
Tensor bilstm(const Tensor& x, const LstmCell& forward, const LstmCell& backward);

// ---- attention ----------------------------------------------------------------------

/// e_t = v^T tanh(W_h h_t + W_s s), alpha = softmax(e), c = sum_t alpha_t h_t.
struct AttentionParams {
  Tensor v;    // A x 1
  Tensor W_h;  // F x A
  Tensor W_s;  // S x A
  Tensor s;    // 1 x S, learned query

  AttentionParams() = default;
  AttentionParams(std::size_t features, std::size_t attention_dim, std::size_t query_dim, std::mt19937_64& rng);

  void collect(const std::string& prefix, NamedParams& out) const;
};

struct AttentionResult {
  Tensor context;  // B x F
  Tensor weights;  // B x T
  Tensor scores;   // B x T, before softmax
};

AttentionResult attention(const Sequence& h, const AttentionParams& params);
/// Single sequence: h [T x F] -> context [F], weights [T].
AttentionResult attention(const Tensor& h, const AttentionParams& params);

/// Splits a [T x F] matrix into T row tensors of shape [1 x F].
Sequence rows_to_sequence(const Tensor& x);
/// Stacks [B x F] steps into [T x F] (requires B = 1).
Tensor sequence_to_rows(const Sequence& seq);

}  // namespace mafn

#endif  // MAFN_LAYERS_HPP
