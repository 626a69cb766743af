#include "mac/model.hpp"

#include <algorithm>
#include <array>
#include <charconv>

#include "mac/errors.hpp"

namespace mac {

namespace {

constexpr double kEntityInitBound = 0.2;
constexpr double kWordInitBound = 0.1;
constexpr double kProbabilityFloor = 1e-12;

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "' expects a count, got '" + value + "'");
  return out;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + value + "'");
}

constexpr std::array kConfigKeys = {"hidden",         "word_dim",       "speaker_dim",    "publisher_dim",
                                    "word_heads",     "doc_heads",      "claim_len",      "doc_len",
                                    "max_docs",       "use_speakers",   "use_publishers", "word_attention",
                                    "doc_attention",  "mlp_hidden",     "mlp_activation"};

void require_shape(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
  if (t.rows() != rows || t.cols() != cols) {
    throw ContractError(std::string("parameters do not match config: ") + what + " is " + t.shape_string() +
                        ", expected [" + std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
}

void check_compatible(const MacParams& p, const MacConfig& cfg) {
  require_shape(p.word_table.table, cfg.vocab_size, cfg.word_dim, "word table");
  require_shape(p.mlp_w5, cfg.mlp_input_width(), cfg.mlp_hidden_dim(), "W5");
  require_shape(p.mlp_w6, cfg.mlp_hidden_dim(), 1, "W6");
  if (cfg.use_speakers != p.speaker_table.has_value() || cfg.use_publishers != p.publisher_table.has_value()) {
    throw ContractError("parameters do not match config: metadata tables");
  }
  if ((cfg.word_attention_mode == PoolingMode::multi_head) != p.word_attention.has_value() ||
      (cfg.doc_attention_mode == PoolingMode::multi_head) != p.doc_attention.has_value()) {
    throw ContractError("parameters do not match config: attention layers");
  }
}

void check_instance(const ClaimInstance& inst, const MacConfig& cfg) {
  auto fail = [&](const std::string& what) {
    throw ContractError("instance '" + inst.claim_key + "' does not match config: " + what);
  };
  if (inst.claim_ids.size() != cfg.claim_len || inst.claim_mask.size() != cfg.claim_len) fail("claim length");
  if (inst.docs.size() != cfg.max_docs || inst.doc_mask.size() != cfg.max_docs) fail("document count");
  for (const auto& d : inst.docs)
    if (d.ids.size() != cfg.doc_len || d.mask.size() != cfg.doc_len) fail("document length");
}

Tensor uniform_weights(std::span<const std::uint8_t> mask) {
  const std::size_t valid = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
  std::vector<double> w(mask.size(), 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) w[i] = 1.0 / static_cast<double>(valid);
  return Tensor::from(mask.size(), 1, std::move(w));
}

}  // namespace

std::string to_string(PoolingMode mode) { return mode == PoolingMode::multi_head ? "multi_head" : "mean_pool"; }

std::string to_string(MlpActivation activation) {
  return activation == MlpActivation::tanh ? "tanh" : "identity";
}

PoolingMode parse_pooling_mode(const std::string& text) {
  if (text == "multi_head") return PoolingMode::multi_head;
  if (text == "mean_pool") return PoolingMode::mean_pool;
  throw ConfigError("unknown attention mode '" + text + "' (expected multi_head or mean_pool)");
}

MlpActivation parse_mlp_activation(const std::string& text) {
  if (text == "tanh") return MlpActivation::tanh;
  if (text == "identity") return MlpActivation::identity;
  throw ConfigError("unknown MLP activation '" + text + "' (expected tanh or identity)");
}

// ---- MacConfig ------------------------------------------------------------

MacConfig MacConfig::snopes() {
  MacConfig cfg;
  cfg.word_heads = 5;
  cfg.doc_heads = 2;
  cfg.use_speakers = false;
  cfg.use_publishers = true;
  return cfg;
}

MacConfig MacConfig::politifact() {
  MacConfig cfg;
  cfg.word_heads = 3;
  cfg.doc_heads = 1;
  cfg.use_speakers = true;
  cfg.use_publishers = true;
  return cfg;
}

MacConfig MacConfig::tiny() {
  MacConfig cfg;
  cfg.hidden = 4;
  cfg.word_dim = 6;
  cfg.speaker_dim = 2;
  cfg.publisher_dim = 2;
  cfg.word_heads = 2;
  cfg.doc_heads = 2;
  cfg.claim_len = 3;
  cfg.doc_len = 4;
  cfg.max_docs = 2;
  cfg.use_speakers = true;
  cfg.use_publishers = true;
  cfg.vocab_size = 20;
  cfg.speaker_count = 4;
  cfg.publisher_count = 4;
  return cfg;
}

void MacConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(hidden, "hidden");
  positive(word_dim, "word_dim");
  positive(word_heads, "word_heads");
  positive(doc_heads, "doc_heads");
  positive(claim_len, "claim_len");
  positive(doc_len, "doc_len");
  positive(max_docs, "max_docs");
  positive(mlp_hidden_dim(), "mlp_hidden");
  if (use_speakers) positive(speaker_dim, "speaker_dim");
  if (use_publishers) positive(publisher_dim, "publisher_dim");
  if (vocab_size < 2) throw ConfigError("vocab_size must include PAD and UNK");
  if (speaker_count == 0 || publisher_count == 0) throw ConfigError("entity tables need the unknown row");
}

std::size_t MacConfig::doc_vector_width() const {
  return word_attention_mode == PoolingMode::multi_head ? 2 * word_heads * hidden : 2 * hidden;
}

std::size_t MacConfig::claim_width() const { return 2 * hidden + (use_speakers ? speaker_dim : 0); }

std::size_t MacConfig::doc_width() const { return doc_vector_width() + (use_publishers ? publisher_dim : 0); }

std::size_t MacConfig::evidence_width() const {
  return doc_attention_mode == PoolingMode::multi_head ? doc_heads * doc_width() : doc_width();
}

bool MacConfig::has_key(const std::string& key) {
  return std::find(kConfigKeys.begin(), kConfigKeys.end(), key) != kConfigKeys.end();
}

void MacConfig::set(const std::string& key, const std::string& value) {
  if (key == "hidden") hidden = parse_count(key, value);
  else if (key == "word_dim") word_dim = parse_count(key, value);
  else if (key == "speaker_dim") speaker_dim = parse_count(key, value);
  else if (key == "publisher_dim") publisher_dim = parse_count(key, value);
  else if (key == "word_heads") word_heads = parse_count(key, value);
  else if (key == "doc_heads") doc_heads = parse_count(key, value);
  else if (key == "claim_len") claim_len = parse_count(key, value);
  else if (key == "doc_len") doc_len = parse_count(key, value);
  else if (key == "max_docs") max_docs = parse_count(key, value);
  else if (key == "use_speakers") use_speakers = parse_flag(key, value);
  else if (key == "use_publishers") use_publishers = parse_flag(key, value);
  else if (key == "word_attention") word_attention_mode = parse_pooling_mode(value);
  else if (key == "doc_attention") doc_attention_mode = parse_pooling_mode(value);
  else if (key == "mlp_hidden") mlp_hidden = parse_count(key, value);
  else if (key == "mlp_activation") mlp_activation = parse_mlp_activation(value);
  else throw ConfigError("unknown model config key '" + key + "'");
}

nlohmann::json to_json(const MacConfig& cfg) {
  return {
      {"hidden", cfg.hidden},
      {"word_dim", cfg.word_dim},
      {"speaker_dim", cfg.speaker_dim},
      {"publisher_dim", cfg.publisher_dim},
      {"word_heads", cfg.word_heads},
      {"doc_heads", cfg.doc_heads},
      {"claim_len", cfg.claim_len},
      {"doc_len", cfg.doc_len},
      {"max_docs", cfg.max_docs},
      {"use_speakers", cfg.use_speakers},
      {"use_publishers", cfg.use_publishers},
      {"word_attention", to_string(cfg.word_attention_mode)},
      {"doc_attention", to_string(cfg.doc_attention_mode)},
      {"mlp_hidden", cfg.mlp_hidden_dim()},
      {"mlp_activation", to_string(cfg.mlp_activation)},
      {"vocab_size", cfg.vocab_size},
      {"speaker_count", cfg.speaker_count},
      {"publisher_count", cfg.publisher_count},
  };
}

MacConfig mac_config_from_json(const nlohmann::json& j) {
  try {
    MacConfig cfg;
    cfg.hidden = j.at("hidden").get<std::size_t>();
    cfg.word_dim = j.at("word_dim").get<std::size_t>();
    cfg.speaker_dim = j.at("speaker_dim").get<std::size_t>();
    cfg.publisher_dim = j.at("publisher_dim").get<std::size_t>();
    cfg.word_heads = j.at("word_heads").get<std::size_t>();
    cfg.doc_heads = j.at("doc_heads").get<std::size_t>();
    cfg.claim_len = j.at("claim_len").get<std::size_t>();
    cfg.doc_len = j.at("doc_len").get<std::size_t>();
    cfg.max_docs = j.at("max_docs").get<std::size_t>();
    cfg.use_speakers = j.at("use_speakers").get<bool>();
    cfg.use_publishers = j.at("use_publishers").get<bool>();
    cfg.word_attention_mode = parse_pooling_mode(j.at("word_attention").get<std::string>());
    cfg.doc_attention_mode = parse_pooling_mode(j.at("doc_attention").get<std::string>());
    cfg.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
    cfg.mlp_activation = parse_mlp_activation(j.at("mlp_activation").get<std::string>());
    cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
    cfg.speaker_count = j.at("speaker_count").get<std::size_t>();
    cfg.publisher_count = j.at("publisher_count").get<std::size_t>();
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

// ---- parameters -----------------------------------------------------------

ParamList MacParams::parameters() const {
  ParamList out;
  out.push_back({"word_table", word_table.table, word_table.pad_row});
  if (speaker_table) out.push_back({"speaker_table", speaker_table->table, false});
  if (publisher_table) out.push_back({"publisher_table", publisher_table->table, false});
  claim_encoder.collect("claim_encoder", out);
  doc_encoder.collect("doc_encoder", out);
  if (word_attention) word_attention->collect("word_attention", out);
  if (doc_attention) doc_attention->collect("doc_attention", out);
  out.push_back({"mlp.W5", mlp_w5});
  out.push_back({"mlp.b5", mlp_b5});
  out.push_back({"mlp.W6", mlp_w6});
  out.push_back({"mlp.b6", mlp_b6});
  return out;
}

std::size_t parameter_count(const MacConfig& cfg) {
  const std::size_t H = cfg.hidden;
  auto lstm = [H](std::size_t in) { return 4 * (in * H + H * H + H); };
  std::size_t total = cfg.vocab_size * cfg.word_dim;
  if (cfg.use_speakers) total += cfg.speaker_count * cfg.speaker_dim;
  if (cfg.use_publishers) total += cfg.publisher_count * cfg.publisher_dim;
  total += 2 * lstm(cfg.word_dim) + 2 * lstm(cfg.word_dim);
  if (cfg.word_attention_mode == PoolingMode::multi_head) {
    total += 4 * H * cfg.word_attention_dim() + cfg.word_attention_dim() * cfg.word_heads;
  }
  if (cfg.doc_attention_mode == PoolingMode::multi_head) {
    total += (cfg.claim_width() + cfg.doc_width()) * cfg.doc_attention_dim() + cfg.doc_attention_dim() * cfg.doc_heads;
  }
  const std::size_t hidden = cfg.mlp_hidden_dim();
  total += cfg.mlp_input_width() * hidden + hidden + hidden + 1;
  return total;
}

MacParams init_params(const MacConfig& cfg, std::uint64_t seed, const PretrainedEmbeddings* pretrained) {
  cfg.validate();
  Rng rng(seed);
  MacParams p;

  p.word_table = EmbeddingTable::uniform(cfg.vocab_size, cfg.word_dim, -kWordInitBound, kWordInitBound, rng, true);
  if (pretrained) {
    if (pretrained->dim != cfg.word_dim) {
      throw ConfigError("pretrained vectors have dimension " + std::to_string(pretrained->dim) + ", config expects " +
                        std::to_string(cfg.word_dim));
    }
    auto table = p.word_table.table.values();
    for (std::size_t id = 2; id < std::min(pretrained->rows.size(), cfg.vocab_size); ++id) {
      const auto& row = pretrained->rows[id];
      if (!row) continue;
      std::copy(row->begin(), row->end(), table.begin() + static_cast<std::ptrdiff_t>(id * cfg.word_dim));
    }
  }
  if (cfg.use_speakers) {
    p.speaker_table =
        EmbeddingTable::uniform(cfg.speaker_count, cfg.speaker_dim, -kEntityInitBound, kEntityInitBound, rng, false);
  }
  if (cfg.use_publishers) {
    p.publisher_table = EmbeddingTable::uniform(cfg.publisher_count, cfg.publisher_dim, -kEntityInitBound,
                                                kEntityInitBound, rng, false);
  }
  p.claim_encoder = BiLstm::init(cfg.word_dim, cfg.hidden, rng);
  p.doc_encoder = BiLstm::init(cfg.word_dim, cfg.hidden, rng);
  if (cfg.word_attention_mode == PoolingMode::multi_head) {
    p.word_attention = MultiHeadAttentionParams::init(4 * cfg.hidden, cfg.word_attention_dim(), cfg.word_heads, rng);
  }
  if (cfg.doc_attention_mode == PoolingMode::multi_head) {
    p.doc_attention = MultiHeadAttentionParams::init(cfg.doc_width() + cfg.claim_width(), cfg.doc_attention_dim(),
                                                     cfg.doc_heads, rng);
  }
  const std::size_t hidden = cfg.mlp_hidden_dim();
  p.mlp_w5 = fan_in_uniform(cfg.mlp_input_width(), hidden, rng);
  p.mlp_b5 = Tensor::zeros(1, hidden, true);
  p.mlp_w6 = fan_in_uniform(hidden, 1, rng);
  p.mlp_b6 = Tensor::zeros(1, 1, true);
  return p;
}

std::vector<double> snapshot_values(const MacParams& params) {
  std::vector<double> out;
  for (const auto& p : params.parameters()) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

void restore_values(MacParams& params, std::span<const double> values) {
  std::size_t offset = 0;
  for (auto& p : params.parameters()) {
    auto dst = p.tensor.values();
    if (offset + dst.size() > values.size()) throw ContractError("restore_values: snapshot too short");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  }
  if (offset != values.size()) throw ContractError("restore_values: snapshot size mismatch");
}

// ---- forward --------------------------------------------------------------

ForwardResult forward_graph(Tape& tape, const MacParams& params, const MacConfig& cfg, const ClaimInstance& inst,
                            bool want_trace) {
  check_compatible(params, cfg);
  check_instance(inst, cfg);

  // Claim: embeddings -> BiLSTM -> masked average pooling.
  Tensor claim_states =
      bilstm_encode(tape, params.claim_encoder, embed_sequence(tape, params.word_table, inst.claim_ids), inst.claim_mask);
  Tensor claim_vec = mean_rows(tape, claim_states, inst.claim_mask);

  std::optional<Tensor> speaker_emb;
  if (cfg.use_speakers) {
    const std::int32_t id = inst.speaker_id.value_or(kUnknownEntityId);
    speaker_emb = embed_sequence(tape, *params.speaker_table, std::span(&id, 1));
  }
  Tensor claim_ext = extend_claim(tape, claim_vec, speaker_emb);

  std::optional<AttentionTrace> trace;
  if (want_trace) {
    trace.emplace();
    trace->word_weights.resize(cfg.max_docs);
    trace->doc_mask = inst.doc_mask;
  }

  // Evidence: per-document word attention, then publisher extension.
  std::vector<Tensor> doc_rows;
  doc_rows.reserve(cfg.max_docs);
  for (std::size_t i = 0; i < cfg.max_docs; ++i) {
    if (!inst.doc_mask[i]) {
      doc_rows.push_back(Tensor::zeros(1, cfg.doc_width()));
      continue;
    }
    const DocumentSlot& doc = inst.docs[i];
    Tensor states = bilstm_encode(tape, params.doc_encoder, embed_sequence(tape, params.word_table, doc.ids), doc.mask);
    Tensor doc_vec;
    if (cfg.word_attention_mode == PoolingMode::multi_head) {
      auto attn = word_attention(tape, states, claim_vec, *params.word_attention, doc.mask);
      doc_vec = attn.attended;
      if (trace) trace->word_weights[i] = attn.weights.clone();
    } else {
      doc_vec = mean_rows(tape, states, doc.mask);
      if (trace) trace->word_weights[i] = uniform_weights(doc.mask);
    }
    std::optional<Tensor> publisher_emb;
    if (cfg.use_publishers) {
      publisher_emb = embed_sequence(tape, *params.publisher_table, std::span(&doc.publisher_id, 1));
    }
    doc_rows.push_back(extend_document(tape, doc_vec, publisher_emb));
  }
  Tensor doc_matrix = stack_rows(tape, doc_rows);

  Tensor evidence;
  if (cfg.doc_attention_mode == PoolingMode::multi_head) {
    auto attn = document_attention(tape, doc_matrix, claim_ext, *params.doc_attention, inst.doc_mask);
    evidence = attn.attended;
    if (trace) trace->doc_weights = attn.weights.clone();
  } else {
    evidence = mean_rows(tape, doc_matrix, inst.doc_mask);
    if (trace) trace->doc_weights = uniform_weights(inst.doc_mask);
  }

  // Output layer.
  Tensor joined = concat_cols(tape, claim_ext, evidence);
  Tensor hidden = linear(tape, params.mlp_w5, params.mlp_b5, joined);
  if (cfg.mlp_activation == MlpActivation::tanh) hidden = tanh(tape, hidden);
  Tensor logit = linear(tape, params.mlp_w6, params.mlp_b6, hidden);
  Tensor probability = sigmoid(tape, logit);
  return {logit, probability, std::move(trace)};
}

Prediction forward(const MacParams& params, const MacConfig& cfg, const ClaimInstance& inst, bool want_trace) {
  Tape tape(false);
  auto result = forward_graph(tape, params, cfg, inst, want_trace);
  return {std::clamp(result.probability.item(), kProbabilityFloor, 1.0 - kProbabilityFloor), std::move(result.trace)};
}

std::vector<Prediction> predict_batch(const MacParams& params, const MacConfig& cfg,
                                      std::span<const ClaimInstance> instances) {
  std::vector<Prediction> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(forward(params, cfg, inst));
  return out;
}

Tensor cross_entropy_loss(Tape& tape, const Tensor& probability, int label) {
  return binary_cross_entropy(tape, probability, label);
}

Tensor batch_loss(Tape& tape, std::span<const Tensor> losses) {
  if (losses.empty()) throw ContractError("batch_loss: empty batch");
  Tensor total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = add(tape, total, losses[i]);
  return scale(tape, total, 1.0 / static_cast<double>(losses.size()));
}

}  // namespace mac
