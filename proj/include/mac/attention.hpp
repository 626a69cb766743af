#pragma once

// Multi-head additive attention shared by the word level and the document
// level. For r items of width w and a context row of width u:
//
//   C        = context repeated r times                    (r x u)
//   weights  = softmax_columns(tanh([items ; C] * proj) * heads, mask)
//   attended = flatten_row_major(weights^T * items)        (1 x h*w)
//
// Column i of `weights` is head i's distribution over items, and block
// [i*w, (i+1)*w) of `attended` is that head's weighted sum of item rows.

#include <optional>
#include <string>
#include <vector>

#include "mac/layers.hpp"
#include "mac/tensor.hpp"

namespace mac {

struct MultiHeadAttentionParams {
  Tensor projection;  // (w + u) x a, no bias
  Tensor heads;       // a x h, no bias

  static MultiHeadAttentionParams init(std::size_t input_dim, std::size_t attention_dim, std::size_t head_count,
                                       Rng& rng);
  std::size_t input_dim() const { return projection.rows(); }
  std::size_t attention_dim() const { return projection.cols(); }
  std::size_t head_count() const { return heads.cols(); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct AttentionOutput {
  Tensor attended;  // 1 x (h * w)
  Tensor weights;   // r x h
};

AttentionOutput multi_head_attend(Tape& tape, const Tensor& items, const Tensor& context,
                                  const MultiHeadAttentionParams& params, Mask mask = {});

/// Word level: items are the document's BiLSTM states (m x 2H), the context
/// is the text-only claim vector c (1 x 2H).
AttentionOutput word_attention(Tape& tape, const Tensor& doc_states, const Tensor& claim_vec,
                               const MultiHeadAttentionParams& params, Mask word_mask);

/// [c ; s] when a speaker embedding is supplied, c otherwise.
Tensor extend_claim(Tape& tape, const Tensor& claim_vec, const std::optional<Tensor>& speaker_emb);

/// [d_i ; p_i] when a publisher embedding is supplied, d_i otherwise.
Tensor extend_document(Tape& tape, const Tensor& doc_vec, const std::optional<Tensor>& publisher_emb);

/// Document level: items are the stacked extended documents (k x y), the
/// context is the extended claim (1 x x).
AttentionOutput document_attention(Tape& tape, const Tensor& doc_matrix, const Tensor& claim_ext,
                                   const MultiHeadAttentionParams& params, Mask doc_mask);

/// Attention weights captured from one forward pass, for explanation export.
struct AttentionTrace {
  // One m x h1 matrix per document slot; empty tensors for padded slots or
  // when word attention is replaced by mean pooling (then uniform weights).
  std::vector<Tensor> word_weights;
  Tensor doc_weights;  // k x h2 (k x 1 uniform when mean pooled)
  std::vector<std::uint8_t> doc_mask;
  // Filled by the explanation exporter.
  std::vector<std::vector<std::string>> token_strings;
  std::vector<std::string> document_ids;
};

}  // namespace mac
