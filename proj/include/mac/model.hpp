#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mac/attention.hpp"
#include "mac/instance.hpp"
#include "mac/layers.hpp"

namespace mac {

enum class PoolingMode { multi_head, mean_pool };
enum class MlpActivation { tanh, identity };

std::string to_string(PoolingMode mode);
std::string to_string(MlpActivation activation);
PoolingMode parse_pooling_mode(const std::string& text);
MlpActivation parse_mlp_activation(const std::string& text);

/// Model hyperparameters. Attention sizes a1 and a2 are always 2H.
struct MacConfig {
  std::size_t hidden = 300;         // H
  std::size_t word_dim = 300;       // D
  std::size_t speaker_dim = 128;    // D1
  std::size_t publisher_dim = 128;  // D2
  std::size_t word_heads = 5;       // h1
  std::size_t doc_heads = 2;        // h2
  std::size_t claim_len = 30;       // n
  std::size_t doc_len = 100;        // m
  std::size_t max_docs = 30;        // k
  bool use_speakers = false;
  bool use_publishers = true;
  PoolingMode word_attention_mode = PoolingMode::multi_head;
  PoolingMode doc_attention_mode = PoolingMode::multi_head;
  std::optional<std::size_t> mlp_hidden;  // defaults to 2H
  MlpActivation mlp_activation = MlpActivation::tanh;
  // Table sizes, filled from the vocabulary and entity maps.
  std::size_t vocab_size = 2;
  std::size_t speaker_count = 1;
  std::size_t publisher_count = 1;

  static MacConfig snopes();
  static MacConfig politifact();
  /// Small configuration used by gradient checks and synthetic benchmarks.
  static MacConfig tiny();

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;

  std::size_t word_attention_dim() const { return 2 * hidden; }  // a1
  std::size_t doc_attention_dim() const { return 2 * hidden; }   // a2
  std::size_t mlp_hidden_dim() const { return mlp_hidden.value_or(2 * hidden); }
  /// Width of one document vector before publisher extension.
  std::size_t doc_vector_width() const;
  /// x: extended claim width.
  std::size_t claim_width() const;
  /// y: extended document width.
  std::size_t doc_width() const;
  /// Width of the attended evidence summary d_rich.
  std::size_t evidence_width() const;
  std::size_t mlp_input_width() const { return claim_width() + evidence_width(); }

  /// Applies one `key = value` setting; unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);
  static bool has_key(const std::string& key);
};

nlohmann::json to_json(const MacConfig& cfg);
MacConfig mac_config_from_json(const nlohmann::json& j);

/// Pretrained word vectors aligned to vocabulary ids.
struct PretrainedEmbeddings {
  std::size_t dim = 0;
  std::vector<std::optional<std::vector<double>>> rows;
};

struct MacParams {
  EmbeddingTable word_table;
  std::optional<EmbeddingTable> speaker_table;
  std::optional<EmbeddingTable> publisher_table;
  BiLstm claim_encoder;
  BiLstm doc_encoder;
  std::optional<MultiHeadAttentionParams> word_attention;
  std::optional<MultiHeadAttentionParams> doc_attention;
  Tensor mlp_w5;
  Tensor mlp_b5;
  Tensor mlp_w6;
  Tensor mlp_b6;

  /// Fixed ordering used by the optimizer and the checkpoint blob.
  ParamList parameters() const;
};

/// Number of scalar parameters implied by a configuration.
std::size_t parameter_count(const MacConfig& cfg);

/// Deterministic given the seed. Speaker and publisher tables are uniform in
/// [-0.2, 0.2]; word rows come from `pretrained` when present, otherwise
/// uniform in [-0.1, 0.1]; the PAD row is zero.
MacParams init_params(const MacConfig& cfg, std::uint64_t seed, const PretrainedEmbeddings* pretrained = nullptr);

/// Flat copy of every parameter value in parameters() order.
std::vector<double> snapshot_values(const MacParams& params);
void restore_values(MacParams& params, std::span<const double> values);

struct ForwardResult {
  Tensor logit;        // 1 x 1
  Tensor probability;  // 1 x 1
  std::optional<AttentionTrace> trace;
};

/// Builds the full claim-verification graph on `tape`.
ForwardResult forward_graph(Tape& tape, const MacParams& params, const MacConfig& cfg, const ClaimInstance& inst,
                            bool want_trace = false);

struct Prediction {
  double y_hat = 0.5;  // probability of true news, strictly inside (0, 1)
  std::optional<AttentionTrace> trace;
};

Prediction forward(const MacParams& params, const MacConfig& cfg, const ClaimInstance& inst, bool want_trace = false);

std::vector<Prediction> predict_batch(const MacParams& params, const MacConfig& cfg,
                                      std::span<const ClaimInstance> instances);

/// Cross-entropy of one prediction; probability clamped to [1e-12, 1 - 1e-12].
Tensor cross_entropy_loss(Tape& tape, const Tensor& probability, int label);

/// Mean of per-instance losses.
Tensor batch_loss(Tape& tape, std::span<const Tensor> losses);

}  // namespace mac
