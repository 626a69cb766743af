#include "mac/attention.hpp"

#include "mac/errors.hpp"

namespace mac {

MultiHeadAttentionParams MultiHeadAttentionParams::init(std::size_t input_dim, std::size_t attention_dim,
                                                        std::size_t head_count, Rng& rng) {
  if (attention_dim == 0 || head_count == 0) throw ConfigError("attention needs positive size and head count");
  return {fan_in_uniform(input_dim, attention_dim, rng), fan_in_uniform(attention_dim, head_count, rng)};
}

void MultiHeadAttentionParams::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".proj", projection});
  out.push_back({prefix + ".heads", heads});
}

AttentionOutput multi_head_attend(Tape& tape, const Tensor& items, const Tensor& context,
                                  const MultiHeadAttentionParams& params, Mask mask) {
  if (context.rows() != 1) throw ShapeError("multi_head_attend: context must be a row, got " + context.shape_string());
  if (items.cols() + context.cols() != params.input_dim()) {
    throw ShapeError("multi_head_attend: items " + items.shape_string() + " and context " + context.shape_string() +
                     " do not match projection " + params.projection.shape_string());
  }
  if (params.heads.rows() != params.attention_dim()) {
    throw ShapeError("multi_head_attend: heads " + params.heads.shape_string() + " after projection " +
                     params.projection.shape_string());
  }
  Tensor joined = concat_cols(tape, items, repeat_rows(tape, context, items.rows()));
  Tensor scores = matmul(tape, tanh(tape, matmul(tape, joined, params.projection)), params.heads);
  Tensor weights = softmax_columns(tape, scores, mask);
  Tensor attended = flatten_row_major(tape, matmul(tape, transpose(tape, weights), items));
  return {attended, weights};
}

AttentionOutput word_attention(Tape& tape, const Tensor& doc_states, const Tensor& claim_vec,
                               const MultiHeadAttentionParams& params, Mask word_mask) {
  if (doc_states.cols() != claim_vec.cols()) {
    throw ShapeError("word_attention: document states " + doc_states.shape_string() + " vs claim " +
                     claim_vec.shape_string());
  }
  return multi_head_attend(tape, doc_states, claim_vec, params, word_mask);
}

Tensor extend_claim(Tape& tape, const Tensor& claim_vec, const std::optional<Tensor>& speaker_emb) {
  return speaker_emb ? concat_cols(tape, claim_vec, *speaker_emb) : claim_vec;
}

Tensor extend_document(Tape& tape, const Tensor& doc_vec, const std::optional<Tensor>& publisher_emb) {
  return publisher_emb ? concat_cols(tape, doc_vec, *publisher_emb) : doc_vec;
}

AttentionOutput document_attention(Tape& tape, const Tensor& doc_matrix, const Tensor& claim_ext,
                                   const MultiHeadAttentionParams& params, Mask doc_mask) {
  return multi_head_attend(tape, doc_matrix, claim_ext, params, doc_mask);
}

}  // namespace mac
