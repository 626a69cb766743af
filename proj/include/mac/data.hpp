#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mac/instance.hpp"
#include "mac/model.hpp"

namespace mac {

enum class Schema { snopes, politifact };

Schema parse_schema(const std::string& text);
std::string to_string(Schema schema);

struct EvidenceRecord {
  std::string text;
  std::string publisher;
};

/// One raw corpus line after whitespace normalization and label merging.
struct ClaimRecord {
  std::string claim_id;
  std::string claim_text;
  std::optional<std::string> speaker;
  std::string raw_label;
  int label = 0;  // 1 = true news
  std::vector<EvidenceRecord> evidence;
};

struct CorpusStats {
  std::size_t true_claims = 0;
  std::size_t false_claims = 0;
  std::size_t speakers = 0;
  std::size_t documents = 0;
  std::size_t publishers = 0;
  std::size_t dropped_claims = 0;     // no usable evidence
  std::size_t dropped_documents = 0;  // empty evidence text

  bool operator==(const CorpusStats&) const = default;
};

nlohmann::json to_json(const CorpusStats& stats);

struct Corpus {
  Schema schema = Schema::snopes;
  std::vector<ClaimRecord> records;
  CorpusStats stats;
};

/// Line-delimited JSON, one claim per line:
/// {"claim_id", "claim_text", "speaker" (nullable), "label", "evidence": [{"text", "publisher"}]}
Corpus load_corpus(const std::filesystem::path& path, Schema schema);
Corpus parse_corpus(std::istream& in, Schema schema);
CorpusStats compute_stats(std::span<const ClaimRecord> records, Schema schema);

/// Canonical JSONL line for a record (keys in fixed order).
std::string to_jsonl(const ClaimRecord& record, Schema schema);

/// PolitiFact: {true, mostly true, half true} -> 1, {false, mostly false,
/// pants on fire} -> 0. Snopes: true -> 1, false -> 0. Case-insensitive;
/// '_' and '-' read as spaces.
int merge_labels(std::string_view raw_label, Schema schema);

std::string normalize_whitespace(std::string_view text);
/// Lowercase + whitespace split.
std::vector<std::string> tokenize(std::string_view text);

/// Token ids: 0 = PAD, 1 = UNK, then tokens by descending frequency with
/// lexicographic tie-break.
class Vocabulary {
 public:
  static constexpr const char* kPad = "<pad>";
  static constexpr const char* kUnk = "<unk>";

  Vocabulary();
  static Vocabulary build(std::span<const ClaimRecord> records, std::size_t min_frequency);
  /// Restores a vocabulary from its id-ordered token list (including PAD/UNK).
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::int32_t id(const std::string& token) const;
  const std::string& token(std::int32_t id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  /// FNV-1a over the id-ordered token list.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Speaker or publisher names; id 0 is the shared unknown entry.
class EntityMap {
 public:
  static constexpr const char* kUnknown = "<unknown>";

  EntityMap();
  static EntityMap build(std::vector<std::string> names);
  static EntityMap from_names(std::vector<std::string> names);

  std::int32_t id(const std::string& name) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::uint64_t hash() const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Everything needed to turn raw records into model inputs.
struct Encoder {
  Vocabulary vocab;
  EntityMap speakers;
  EntityMap publishers;

  /// Built from the given training records only.
  static Encoder build(std::span<const ClaimRecord> records, std::size_t min_frequency);
  /// Copies table sizes into a model configuration.
  void configure(MacConfig& cfg) const;
};

nlohmann::json to_json(const Encoder& encoder);
Encoder encoder_from_json(const nlohmann::json& j);

/// Truncates and pads to cfg.claim_len / doc_len / max_docs.
ClaimInstance encode_instance(const ClaimRecord& record, const Encoder& encoder, const MacConfig& cfg);
std::vector<ClaimInstance> encode_all(std::span<const ClaimRecord> records, const Encoder& encoder,
                                      const MacConfig& cfg);

struct GloveTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::size_t malformed_lines = 0;
  std::size_t duplicate_tokens = 0;
};

/// "token v1 ... vD" per line. First occurrence of a token wins.
GloveTable load_glove(const std::filesystem::path& path, std::size_t dim);
GloveTable parse_glove(std::istream& in, std::size_t dim);
PretrainedEmbeddings align_pretrained(const GloveTable& glove, const Vocabulary& vocab);

struct ValidationSplit {
  std::vector<std::size_t> rest;
  std::vector<std::size_t> validation;
};

/// Samples round(fraction * class size) indices of each class.
ValidationSplit split_validation(std::span<const int> labels, double fraction, std::uint64_t seed);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class: shuffle, then deal positions round-robin into `folds` parts.
std::vector<Fold> stratified_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed);

/// Shuffled index groups for one epoch; the last group may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                              std::size_t epoch);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace mac
