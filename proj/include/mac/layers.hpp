#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mac/random.hpp"
#include "mac/tensor.hpp"

namespace mac {

/// A trainable tensor with a stable name. `pad_row` marks embedding tables
/// whose row 0 is the fixed PAD vector.
struct NamedParam {
  std::string name;
  Tensor tensor;
  bool pad_row = false;
};

using ParamList = std::vector<NamedParam>;

struct EmbeddingTable {
  Tensor table;
  bool trainable = true;
  // Row 0 is PAD: kept at zero and never updated.
  bool pad_row = false;

  std::size_t vocab_size() const { return table.rows(); }
  std::size_t dim() const { return table.cols(); }

  /// Every row uniform in [lo, hi]; row 0 zeroed when `pad_row`.
  static EmbeddingTable uniform(std::size_t vocab_size, std::size_t dim, double lo, double hi, Rng& rng,
                                bool pad_row, bool trainable = true);
};

/// len x dim matrix of looked-up rows.
Tensor embed_sequence(Tape& tape, const EmbeddingTable& table, std::span<const std::int32_t> ids);

struct LstmGate {
  Tensor input_weight;      // input_dim x H
  Tensor recurrent_weight;  // H x H
  Tensor bias;              // 1 x H
};

struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  LstmGate input_gate;
  LstmGate forget_gate;
  LstmGate cell_gate;
  LstmGate output_gate;

  /// Weights uniform in [-1/sqrt(H), 1/sqrt(H)]; forget bias 1.0.
  static LstmParams init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LstmState {
  Tensor h;
  Tensor c;
};

LstmState lstm_cell(Tape& tape, const LstmParams& p, const Tensor& x, const LstmState& prev);

struct BiLstm {
  LstmParams forward;
  LstmParams backward;

  static BiLstm init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
  std::size_t output_dim() const { return 2 * forward.hidden_dim; }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Row t is [backward state ; forward state] at position t. Masked positions
/// leave the recurrent state untouched and produce zero rows.
Tensor bilstm_encode(Tape& tape, const BiLstm& encoder, const Tensor& x, Mask mask = {});

/// x * w (+ b broadcast over rows).
Tensor linear(Tape& tape, const Tensor& w, const std::optional<Tensor>& b, const Tensor& x);

/// Uniform in [-1/sqrt(rows), 1/sqrt(rows)].
Tensor fan_in_uniform(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace mac
