#include "mac/layers.hpp"

#include <algorithm>
#include <cmath>

#include "mac/errors.hpp"

namespace mac {

namespace {

Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  std::vector<double> values(rows * cols);
  for (auto& v : values) v = uniform(rng, -bound, bound);
  return Tensor::from(rows, cols, std::move(values), true);
}

LstmGate make_gate(std::size_t input_dim, std::size_t hidden_dim, double bound, Rng& rng) {
  LstmGate gate;
  gate.input_weight = uniform_tensor(input_dim, hidden_dim, bound, rng);
  gate.recurrent_weight = uniform_tensor(hidden_dim, hidden_dim, bound, rng);
  gate.bias = uniform_tensor(1, hidden_dim, bound, rng);
  return gate;
}

Tensor gate_preactivation(Tape& tape, const LstmGate& gate, const Tensor& x, const Tensor& h) {
  return add(tape, add(tape, matmul(tape, x, gate.input_weight), matmul(tape, h, gate.recurrent_weight)), gate.bias);
}

void collect_gate(const std::string& prefix, const LstmGate& gate, ParamList& out) {
  out.push_back({prefix + ".W", gate.input_weight});
  out.push_back({prefix + ".U", gate.recurrent_weight});
  out.push_back({prefix + ".b", gate.bias});
}

}  // namespace

EmbeddingTable EmbeddingTable::uniform(std::size_t vocab_size, std::size_t dim, double lo, double hi, Rng& rng,
                                       bool pad_row, bool trainable) {
  std::vector<double> values(vocab_size * dim);
  for (auto& v : values) v = mac::uniform(rng, lo, hi);
  if (pad_row && vocab_size > 0) std::fill_n(values.begin(), dim, 0.0);
  return {Tensor::from(vocab_size, dim, std::move(values), trainable), trainable, pad_row};
}

Tensor embed_sequence(Tape& tape, const EmbeddingTable& table, std::span<const std::int32_t> ids) {
  return gather_rows(tape, table.table, ids);
}

LstmParams LstmParams::init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  if (hidden_dim == 0) throw ConfigError("LSTM hidden size must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.input_gate = make_gate(input_dim, hidden_dim, bound, rng);
  p.forget_gate = make_gate(input_dim, hidden_dim, bound, rng);
  p.cell_gate = make_gate(input_dim, hidden_dim, bound, rng);
  p.output_gate = make_gate(input_dim, hidden_dim, bound, rng);
  std::fill(p.forget_gate.bias.values().begin(), p.forget_gate.bias.values().end(), 1.0);
  return p;
}

void LstmParams::collect(const std::string& prefix, ParamList& out) const {
  collect_gate(prefix + ".i", input_gate, out);
  collect_gate(prefix + ".f", forget_gate, out);
  collect_gate(prefix + ".g", cell_gate, out);
  collect_gate(prefix + ".o", output_gate, out);
}

LstmState lstm_cell(Tape& tape, const LstmParams& p, const Tensor& x, const LstmState& prev) {
  if (x.rows() != 1 || x.cols() != p.input_dim) {
    throw ShapeError("lstm_cell: input " + x.shape_string() + " for input_dim " + std::to_string(p.input_dim));
  }
  if (prev.h.rows() != 1 || prev.h.cols() != p.hidden_dim || prev.c.rows() != 1 || prev.c.cols() != p.hidden_dim) {
    throw ShapeError("lstm_cell: state " + prev.h.shape_string() + "/" + prev.c.shape_string() + " for hidden " +
                     std::to_string(p.hidden_dim));
  }
  Tensor i = sigmoid(tape, gate_preactivation(tape, p.input_gate, x, prev.h));
  Tensor f = sigmoid(tape, gate_preactivation(tape, p.forget_gate, x, prev.h));
  Tensor g = tanh(tape, gate_preactivation(tape, p.cell_gate, x, prev.h));
  Tensor o = sigmoid(tape, gate_preactivation(tape, p.output_gate, x, prev.h));
  Tensor c = add(tape, mul(tape, f, prev.c), mul(tape, i, g));
  Tensor h = mul(tape, o, tanh(tape, c));
  return {h, c};
}

BiLstm BiLstm::init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  BiLstm b;
  b.forward = LstmParams::init(input_dim, hidden_dim, rng);
  b.backward = LstmParams::init(input_dim, hidden_dim, rng);
  return b;
}

void BiLstm::collect(const std::string& prefix, ParamList& out) const {
  forward.collect(prefix + ".fwd", out);
  backward.collect(prefix + ".bwd", out);
}

Tensor bilstm_encode(Tape& tape, const BiLstm& encoder, const Tensor& x, Mask mask) {
  const std::size_t len = x.rows();
  const std::size_t hidden = encoder.forward.hidden_dim;
  if (len == 0) throw DegenerateInputError("bilstm_encode: empty sequence");
  if (!mask.empty() && mask.size() != len) {
    throw ShapeError("bilstm_encode: mask length " + std::to_string(mask.size()) + " for " + std::to_string(len) +
                     " positions");
  }
  auto valid = [&](std::size_t t) { return mask.empty() || mask[t] != 0; };
  if (!mask.empty() && std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw DegenerateInputError("bilstm_encode: every position is masked");
  }

  std::vector<Tensor> forward_h(len), backward_h(len);
  LstmState state{Tensor::zeros(1, hidden), Tensor::zeros(1, hidden)};
  for (std::size_t t = 0; t < len; ++t) {
    if (!valid(t)) continue;
    state = lstm_cell(tape, encoder.forward, slice_row(tape, x, t), state);
    forward_h[t] = state.h;
  }
  state = {Tensor::zeros(1, hidden), Tensor::zeros(1, hidden)};
  for (std::size_t t = len; t-- > 0;) {
    if (!valid(t)) continue;
    state = lstm_cell(tape, encoder.backward, slice_row(tape, x, t), state);
    backward_h[t] = state.h;
  }

  std::vector<Tensor> rows;
  rows.reserve(len);
  for (std::size_t t = 0; t < len; ++t) {
    if (valid(t))
      rows.push_back(concat_cols(tape, backward_h[t], forward_h[t]));
    else
      rows.push_back(Tensor::zeros(1, 2 * hidden));
  }
  return stack_rows(tape, rows);
}

Tensor linear(Tape& tape, const Tensor& w, const std::optional<Tensor>& b, const Tensor& x) {
  Tensor out = matmul(tape, x, w);
  if (b) out = add_row(tape, out, *b);
  return out;
}

Tensor fan_in_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = rows == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(rows));
  return uniform_tensor(rows, cols, bound, rng);
}

}  // namespace mac
