#include "mafn/layers.hpp"

#include <cmath>

namespace mafn {

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::Relu: return relu(x);
    case Activation::Tanh: return tanh(x);
    case Activation::Identity: break;
  }
  return x;
}

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  return uniform({fan_in, fan_out}, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

// ---- embedding ------------------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::size_t states, std::size_t dim, std::mt19937_64& rng)
    : weights(glorot_uniform(states, dim, rng)) {}

void EmbeddingTable::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".weight", weights);
}

Tensor embed(std::span<const int> ids, const EmbeddingTable& table) { return gather_rows(table.weights, ids); }

// ---- dense ------------------------------------------------------------------------

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng)
    : weight(glorot_uniform(in, out, rng)), bias(Tensor::zeros({1, out}, true)), activation(act) {}

void DenseLayer::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".W", weight);
  out.emplace_back(prefix + ".b", bias);
}

Tensor dense(const Tensor& x, const DenseLayer& layer) {
  if (x.rank() != 2 || x.cols() != layer.in()) {
    throw DimensionError("dense: input " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(layer.weight.shape()));
  }
  return activate(matmul(x, layer.weight) + layer.bias, layer.activation);
}

// ---- convolution ------------------------------------------------------------------

Conv1dLayer::Conv1dLayer(std::size_t k, std::size_t c, std::size_t filters, Activation act, std::mt19937_64& rng)
    : weights(glorot_uniform(k * c, filters, rng)),
      bias(Tensor::zeros({1, filters}, true)),
      kernel(k),
      channels(c),
      activation(act) {}

void Conv1dLayer::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".W", weights);
  out.emplace_back(prefix + ".b", bias);
}

Sequence conv1d(const Sequence& x, const Conv1dLayer& layer) {
  const std::size_t T = x.size();
  if (T == 0) throw ContractError("conv1d: empty sequence");
  if (layer.kernel > 2 * T) {
    throw ContractError("conv1d: kernel " + std::to_string(layer.kernel) + " exceeds twice the window length " +
                        std::to_string(T));
  }
  const std::size_t B = x[0].rows();
  for (const auto& step : x) {
    if (step.rank() != 2 || step.cols() != layer.channels || step.rows() != B) {
      throw DimensionError("conv1d: step shape " + shape_string(step.shape()) + ", expected [" + std::to_string(B) +
                           "x" + std::to_string(layer.channels) + "]");
    }
  }
  const Tensor zero = Tensor::zeros({B, layer.channels});
  const auto p = static_cast<std::ptrdiff_t>(layer.left_pad());
  Sequence out;
  out.reserve(T);
  std::vector<Tensor> field(layer.kernel);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < layer.kernel; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - p;
      field[j] = (src >= 0 && src < static_cast<std::ptrdiff_t>(T)) ? x[static_cast<std::size_t>(src)] : zero;
    }
    Tensor flat = layer.kernel == 1 ? field[0] : concat(std::span<const Tensor>(field), 1);
    out.push_back(activate(matmul(flat, layer.weights) + layer.bias, layer.activation));
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Conv1dLayer& layer) { return sequence_to_rows(conv1d(rows_to_sequence(x), layer)); }

// ---- recurrent ----------------------------------------------------------------------

LstmCell::LstmCell(std::size_t input, std::size_t hidden, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Tensor* w : {&W_i, &W_f, &W_g, &W_o}) *w = uniform({input, hidden}, bound, rng);
  for (Tensor* u : {&U_i, &U_f, &U_g, &U_o}) *u = uniform({hidden, hidden}, bound, rng);
  b_i = Tensor::zeros({1, hidden}, true);
  b_f = Tensor::full({1, hidden}, 1.0, true);
  b_g = Tensor::zeros({1, hidden}, true);
  b_o = Tensor::zeros({1, hidden}, true);
}

void LstmCell::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".W_i", W_i);
  out.emplace_back(prefix + ".W_f", W_f);
  out.emplace_back(prefix + ".W_g", W_g);
  out.emplace_back(prefix + ".W_o", W_o);
  out.emplace_back(prefix + ".U_i", U_i);
  out.emplace_back(prefix + ".U_f", U_f);
  out.emplace_back(prefix + ".U_g", U_g);
  out.emplace_back(prefix + ".U_o", U_o);
  out.emplace_back(prefix + ".b_i", b_i);
  out.emplace_back(prefix + ".b_f", b_f);
  out.emplace_back(prefix + ".b_g", b_g);
  out.emplace_back(prefix + ".b_o", b_o);
}

FusedLstm::FusedLstm(const LstmCell& cell)
    : W(concat({cell.W_i, cell.W_f, cell.W_g, cell.W_o}, 1)),
      U(concat({cell.U_i, cell.U_f, cell.U_g, cell.U_o}, 1)),
      b(concat({cell.b_i, cell.b_f, cell.b_g, cell.b_o}, 1)),
      hidden(cell.hidden()) {}

LstmState lstm_zero_state(std::size_t batch, std::size_t hidden) {
  return {Tensor::zeros({batch, hidden}), Tensor::zeros({batch, hidden})};
}

LstmState lstm_step(const Tensor& x, const LstmState& prev, const FusedLstm& cell) {
  const std::size_t H = cell.hidden;
  if (x.rank() != 2 || x.cols() != cell.W.shape()[0]) {
    throw DimensionError("lstm_step: input " + shape_string(x.shape()) + " vs weights " + shape_string(cell.W.shape()));
  }
  if (prev.h.shape() != Shape{x.rows(), H} || prev.c.shape() != Shape{x.rows(), H}) {
    throw DimensionError("lstm_step: state shape " + shape_string(prev.h.shape()) + " for batch " +
                         std::to_string(x.rows()) + " and hidden " + std::to_string(H));
  }
  Tensor z = matmul(x, cell.W) + matmul(prev.h, cell.U) + cell.b;
  Tensor i = sigmoid(slice(z, 1, 0, H));
  Tensor f = sigmoid(slice(z, 1, H, 2 * H));
  Tensor g = tanh(slice(z, 1, 2 * H, 3 * H));
  Tensor o = sigmoid(slice(z, 1, 3 * H, 4 * H));
  Tensor c = f * prev.c + i * g;
  return {o * tanh(c), c};
}

LstmState lstm_step(const Tensor& x, const LstmState& prev, const LstmCell& cell) {
  return lstm_step(x, prev, FusedLstm(cell));
}

Sequence lstm_unroll(const Sequence& x, const LstmCell& cell, bool reverse) {
  if (x.empty()) throw ContractError("lstm: empty sequence");
  const FusedLstm fused(cell);
  LstmState state = lstm_zero_state(x[0].rows(), cell.hidden());
  Sequence out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const std::size_t t = reverse ? x.size() - 1 - k : k;
    state = lstm_step(x[t], state, fused);
    out[t] = state.h;
  }
  return out;
}

Sequence bilstm(const Sequence& x, const LstmCell& forward, const LstmCell& backward) {
  Sequence fwd = lstm_unroll(x, forward, false);
  Sequence bwd = lstm_unroll(x, backward, true);
  Sequence out;
  out.reserve(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) out.push_back(concat({fwd[t], bwd[t]}, 1));
  return out;
}

Tensor bilstm(const Tensor& x, const LstmCell& forward, const LstmCell& backward) {
  return sequence_to_rows(bilstm(rows_to_sequence(x), forward, backward));
}

// ---- attention ----------------------------------------------------------------------

AttentionParams::AttentionParams(std::size_t features, std::size_t attention_dim, std::size_t query_dim,
                                 std::mt19937_64& rng)
    : v(glorot_uniform(attention_dim, 1, rng)),
      W_h(glorot_uniform(features, attention_dim, rng)),
      W_s(glorot_uniform(query_dim, attention_dim, rng)),
      s(uniform({1, query_dim}, 1.0 / std::sqrt(static_cast<double>(query_dim)), rng)) {}

void AttentionParams::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".v", v);
  out.emplace_back(prefix + ".W_h", W_h);
  out.emplace_back(prefix + ".W_s", W_s);
  out.emplace_back(prefix + ".s", s);
}

AttentionResult attention(const Sequence& h, const AttentionParams& params) {
  if (h.empty()) throw ContractError("attention: empty sequence");
  const Tensor query = matmul(params.s, params.W_s);  // 1 x A, broadcast over the batch
  Sequence scores;
  scores.reserve(h.size());
  for (const auto& ht : h) scores.push_back(matmul(tanh(matmul(ht, params.W_h) + query), params.v));
  AttentionResult r;
  r.scores = h.size() == 1 ? scores[0] : concat(std::span<const Tensor>(scores), 1);
  r.weights = softmax(r.scores, 1);
  for (std::size_t t = 0; t < h.size(); ++t) {
    Tensor term = slice(r.weights, 1, t, t + 1) * h[t];
    r.context = t == 0 ? term : r.context + term;
  }
  return r;
}

AttentionResult attention(const Tensor& h, const AttentionParams& params) {
  AttentionResult r = attention(rows_to_sequence(h), params);
  r.context = reshape(r.context, {r.context.numel()});
  r.weights = reshape(r.weights, {r.weights.numel()});
  r.scores = reshape(r.scores, {r.scores.numel()});
  return r;
}

Sequence rows_to_sequence(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("expected a [T x F] matrix, got " + shape_string(x.shape()));
  Sequence out;
  out.reserve(x.rows());
  for (std::size_t t = 0; t < x.rows(); ++t) out.push_back(slice(x, 0, t, t + 1));
  return out;
}

Tensor sequence_to_rows(const Sequence& seq) {
  if (seq.empty()) throw ContractError("empty sequence");
  if (seq[0].rows() != 1) throw DimensionError("sequence_to_rows needs batch size 1");
  return seq.size() == 1 ? seq[0] : concat(std::span<const Tensor>(seq), 0);
}

}  // namespace mafn
