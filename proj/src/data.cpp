#include "mac/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mac/errors.hpp"
#include "mac/random.hpp"

namespace mac {

namespace {

std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

const std::string kUnknownPublisher = "unknown";

std::string json_string(const nlohmann::json& record, const char* key, std::size_t line) {
  auto it = record.find(key);
  if (it == record.end()) throw ParseError(std::string("missing field '") + key + "'", line);
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw ParseError(std::string("field '") + key + "' must be a string", line);
}

ClaimRecord parse_record(const nlohmann::json& j, Schema schema, std::size_t line) {
  if (!j.is_object()) throw ParseError("record is not a JSON object", line);
  ClaimRecord r;
  r.claim_id = json_string(j, "claim_id", line);
  r.claim_text = normalize_whitespace(json_string(j, "claim_text", line));
  r.raw_label = normalize_whitespace(lowercase(json_string(j, "label", line)));
  try {
    r.label = merge_labels(r.raw_label, schema);
  } catch (const LabelError& e) {
    throw LabelError("line " + std::to_string(line) + ": " + e.what());
  }
  if (auto it = j.find("speaker"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError("field 'speaker' must be a string or null", line);
    std::string speaker = normalize_whitespace(it->get<std::string>());
    if (schema == Schema::politifact && !speaker.empty()) r.speaker = std::move(speaker);
  }
  auto ev = j.find("evidence");
  if (ev == j.end() || !ev->is_array()) throw ParseError("field 'evidence' must be an array", line);
  for (const auto& item : *ev) {
    if (!item.is_object()) throw ParseError("evidence entries must be objects", line);
    EvidenceRecord e;
    e.text = normalize_whitespace(json_string(item, "text", line));
    auto pub = item.find("publisher");
    if (pub != item.end() && pub->is_string()) e.publisher = normalize_whitespace(pub->get<std::string>());
    if (e.publisher.empty()) e.publisher = kUnknownPublisher;
    r.evidence.push_back(std::move(e));
  }
  return r;
}

std::vector<std::int32_t> to_ids(const std::vector<std::string>& tokens, const Vocabulary& vocab, std::size_t len,
                                 std::vector<std::uint8_t>& mask) {
  std::vector<std::int32_t> ids(len, kPadId);
  mask.assign(len, 0);
  const std::size_t keep = std::min(len, tokens.size());
  for (std::size_t i = 0; i < keep; ++i) {
    ids[i] = vocab.id(tokens[i]);
    mask[i] = 1;
  }
  return ids;
}

std::map<int, std::vector<std::size_t>> group_by_label(std::span<const int> labels) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  return groups;
}

}  // namespace

Schema parse_schema(const std::string& text) {
  const std::string s = lowercase(text);
  if (s == "snopes") return Schema::snopes;
  if (s == "politifact") return Schema::politifact;
  throw ConfigError("unknown schema '" + text + "' (expected snopes or politifact)");
}

std::string to_string(Schema schema) { return schema == Schema::snopes ? "snopes" : "politifact"; }

nlohmann::json to_json(const CorpusStats& s) {
  return {{"true_claims", s.true_claims},         {"false_claims", s.false_claims},
          {"speakers", s.speakers},               {"documents", s.documents},
          {"publishers", s.publishers},           {"dropped_claims", s.dropped_claims},
          {"dropped_documents", s.dropped_documents}};
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream in(lowercase(text));
  std::string token;
  while (in >> token) tokens.push_back(token);
  return tokens;
}

int merge_labels(std::string_view raw_label, Schema schema) {
  std::string s = lowercase(raw_label);
  std::replace(s.begin(), s.end(), '_', ' ');
  std::replace(s.begin(), s.end(), '-', ' ');
  s = normalize_whitespace(s);
  if (s == "true") return 1;
  if (s == "false") return 0;
  if (schema == Schema::politifact) {
    if (s == "mostly true" || s == "half true") return 1;
    if (s == "mostly false" || s == "pants on fire") return 0;
  }
  throw LabelError("unrecognized " + to_string(schema) + " label '" + std::string(raw_label) + "'");
}

Corpus parse_corpus(std::istream& in, Schema schema) {
  Corpus corpus;
  corpus.schema = schema;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    ClaimRecord record = parse_record(j, schema, line_no);

    const std::size_t before = record.evidence.size();
    std::erase_if(record.evidence, [](const EvidenceRecord& e) { return e.text.empty(); });
    corpus.stats.dropped_documents += before - record.evidence.size();
    if (record.evidence.empty()) {
      ++corpus.stats.dropped_claims;
      continue;
    }
    corpus.records.push_back(std::move(record));
  }
  const auto dropped_claims = corpus.stats.dropped_claims;
  const auto dropped_documents = corpus.stats.dropped_documents;
  corpus.stats = compute_stats(corpus.records, schema);
  corpus.stats.dropped_claims = dropped_claims;
  corpus.stats.dropped_documents = dropped_documents;
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, Schema schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus '" + path.string() + "'");
  return parse_corpus(in, schema);
}

CorpusStats compute_stats(std::span<const ClaimRecord> records, Schema schema) {
  CorpusStats stats;
  std::set<std::string> speakers, publishers;
  for (const auto& r : records) {
    (r.label == 1 ? stats.true_claims : stats.false_claims)++;
    if (schema == Schema::politifact && r.speaker) speakers.insert(*r.speaker);
    stats.documents += r.evidence.size();
    for (const auto& e : r.evidence) publishers.insert(e.publisher);
  }
  stats.speakers = speakers.size();
  stats.publishers = publishers.size();
  return stats;
}

std::string to_jsonl(const ClaimRecord& record, Schema schema) {
  nlohmann::ordered_json j;
  j["claim_id"] = record.claim_id;
  j["claim_text"] = record.claim_text;
  if (schema == Schema::politifact && record.speaker)
    j["speaker"] = *record.speaker;
  else
    j["speaker"] = nullptr;
  j["label"] = record.raw_label;
  auto& evidence = j["evidence"] = nlohmann::ordered_json::array();
  for (const auto& e : record.evidence) {
    nlohmann::ordered_json item;
    item["text"] = e.text;
    item["publisher"] = e.publisher;
    evidence.push_back(std::move(item));
  }
  return j.dump();
}

// ---- Vocabulary -----------------------------------------------------------

Vocabulary::Vocabulary() : tokens_{kPad, kUnk}, index_{{kPad, kPadId}, {kUnk, kUnkId}} {}

Vocabulary Vocabulary::build(std::span<const ClaimRecord> records, std::size_t min_frequency) {
  std::unordered_map<std::string, std::size_t> counts;
  auto count = [&](const std::string& text) {
    for (auto& t : tokenize(text))
      if (t != kPad && t != kUnk) ++counts[t];
  };
  for (const auto& r : records) {
    count(r.claim_text);
    for (const auto& e : r.evidence) count(e.text);
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [token, n] : counts)
    if (n >= min_frequency) kept.emplace_back(token, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens{kPad, kUnk};
  for (auto& [token, n] : kept) tokens.push_back(token);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[0] != kPad || tokens[1] != kUnk) {
    throw FormatError("vocabulary must start with <pad>, <unk>");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<std::int32_t>(i)).second) {
      throw FormatError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

std::int32_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw IndexError("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = fnv1a("");
  for (const auto& t : tokens_) h = fnv1a(t + '\n', h);
  return h;
}

// ---- EntityMap ------------------------------------------------------------

EntityMap::EntityMap() : names_{kUnknown}, index_{{kUnknown, kUnknownEntityId}} {}

EntityMap EntityMap::build(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  std::erase(names, std::string(kUnknown));
  names.insert(names.begin(), kUnknown);
  return from_names(std::move(names));
}

EntityMap EntityMap::from_names(std::vector<std::string> names) {
  if (names.empty() || names[0] != kUnknown) throw FormatError("entity map must start with <unknown>");
  EntityMap m;
  m.names_ = std::move(names);
  m.index_.clear();
  for (std::size_t i = 0; i < m.names_.size(); ++i) {
    if (!m.index_.emplace(m.names_[i], static_cast<std::int32_t>(i)).second) {
      throw FormatError("duplicate entity '" + m.names_[i] + "'");
    }
  }
  return m;
}

std::int32_t EntityMap::id(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? kUnknownEntityId : it->second;
}

std::uint64_t EntityMap::hash() const {
  std::uint64_t h = fnv1a("");
  for (const auto& n : names_) h = fnv1a(n + '\n', h);
  return h;
}

// ---- Encoder --------------------------------------------------------------

Encoder Encoder::build(std::span<const ClaimRecord> records, std::size_t min_frequency) {
  std::vector<std::string> speakers, publishers;
  for (const auto& r : records) {
    if (r.speaker) speakers.push_back(*r.speaker);
    for (const auto& e : r.evidence) publishers.push_back(e.publisher);
  }
  return {Vocabulary::build(records, min_frequency), EntityMap::build(std::move(speakers)),
          EntityMap::build(std::move(publishers))};
}

void Encoder::configure(MacConfig& cfg) const {
  cfg.vocab_size = vocab.size();
  cfg.speaker_count = speakers.size();
  cfg.publisher_count = publishers.size();
}

nlohmann::json to_json(const Encoder& e) {
  return {{"vocab", {{"tokens", e.vocab.tokens()}, {"hash", hex64(e.vocab.hash())}}},
          {"speakers", {{"names", e.speakers.names()}, {"hash", hex64(e.speakers.hash())}}},
          {"publishers", {{"names", e.publishers.names()}, {"hash", hex64(e.publishers.hash())}}}};
}

Encoder encoder_from_json(const nlohmann::json& j) {
  try {
    Encoder e{Vocabulary::from_tokens(j.at("vocab").at("tokens").get<std::vector<std::string>>()),
              EntityMap::from_names(j.at("speakers").at("names").get<std::vector<std::string>>()),
              EntityMap::from_names(j.at("publishers").at("names").get<std::vector<std::string>>())};
    if (hex64(e.vocab.hash()) != j.at("vocab").at("hash").get<std::string>() ||
        hex64(e.speakers.hash()) != j.at("speakers").at("hash").get<std::string>() ||
        hex64(e.publishers.hash()) != j.at("publishers").at("hash").get<std::string>()) {
      throw CheckpointError("vocabulary hash mismatch");
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw CheckpointError(std::string("malformed encoder record: ") + ex.what());
  } catch (const FormatError& ex) {
    throw CheckpointError(std::string("malformed encoder record: ") + ex.what());
  }
}

ClaimInstance encode_instance(const ClaimRecord& record, const Encoder& encoder, const MacConfig& cfg) {
  ClaimInstance inst;
  inst.claim_key = record.claim_id;
  inst.label = record.label;

  auto claim_tokens = tokenize(record.claim_text);
  if (claim_tokens.empty()) throw DegenerateInputError("claim '" + record.claim_id + "' has no tokens");
  inst.claim_ids = to_ids(claim_tokens, encoder.vocab, cfg.claim_len, inst.claim_mask);

  if (record.speaker) inst.speaker_id = encoder.speakers.id(*record.speaker);

  inst.docs.resize(cfg.max_docs);
  inst.doc_mask.assign(cfg.max_docs, 0);
  std::size_t slot = 0;
  for (const auto& e : record.evidence) {
    if (slot == cfg.max_docs) break;
    auto tokens = tokenize(e.text);
    if (tokens.empty()) continue;
    DocumentSlot& doc = inst.docs[slot];
    doc.ids = to_ids(tokens, encoder.vocab, cfg.doc_len, doc.mask);
    doc.publisher_id = encoder.publishers.id(e.publisher);
    inst.doc_mask[slot] = 1;
    ++slot;
  }
  if (slot == 0) throw DegenerateInputError("claim '" + record.claim_id + "' has no usable evidence");
  for (std::size_t i = slot; i < cfg.max_docs; ++i) {
    inst.docs[i].ids.assign(cfg.doc_len, kPadId);
    inst.docs[i].mask.assign(cfg.doc_len, 0);
  }
  return inst;
}

std::vector<ClaimInstance> encode_all(std::span<const ClaimRecord> records, const Encoder& encoder,
                                      const MacConfig& cfg) {
  std::vector<ClaimInstance> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(encode_instance(r, encoder, cfg));
  return out;
}

// ---- GloVe ----------------------------------------------------------------

GloveTable parse_glove(std::istream& in, std::size_t dim) {
  GloveTable table;
  table.dim = dim;
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    ++lines;
    std::vector<double> vec;
    vec.reserve(dim);
    std::string field;
    bool ok = true;
    while (fields >> field) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
        ok = false;
        break;
      }
      vec.push_back(v);
    }
    if (!ok || vec.size() != dim) {
      ++table.malformed_lines;
      continue;
    }
    if (!table.vectors.emplace(token, std::move(vec)).second) ++table.duplicate_tokens;
  }
  if (table.malformed_lines * 100 > lines) {
    throw FormatError("GloVe file: " + std::to_string(table.malformed_lines) + " of " + std::to_string(lines) +
                      " lines do not have " + std::to_string(dim) + " values");
  }
  return table;
}

GloveTable load_glove(const std::filesystem::path& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open GloVe file '" + path.string() + "'");
  return parse_glove(in, dim);
}

PretrainedEmbeddings align_pretrained(const GloveTable& glove, const Vocabulary& vocab) {
  PretrainedEmbeddings out;
  out.dim = glove.dim;
  out.rows.resize(vocab.size());
  for (std::size_t id = 2; id < vocab.size(); ++id) {
    auto it = glove.vectors.find(vocab.tokens()[id]);
    if (it != glove.vectors.end()) out.rows[id] = it->second;
  }
  return out;
}

// ---- splits ---------------------------------------------------------------

ValidationSplit split_validation(std::span<const int> labels, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw SplitError("validation fraction must lie in (0, 1)");
  Rng rng(seed);
  ValidationSplit split;
  for (auto& [label, members] : group_by_label(labels)) {
    if (members.size() < 10) {
      throw SplitError("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                       " instances; validation split needs at least 10");
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    split.validation.insert(split.validation.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    split.rest.insert(split.rest.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(split.rest.begin(), split.rest.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

std::vector<Fold> stratified_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw SplitError("need at least 2 folds");
  Rng rng(seed);
  std::vector<std::size_t> part(labels.size());
  std::size_t offset = 0;
  for (auto& [label, members] : group_by_label(labels)) {
    if (members.size() < folds) {
      throw SplitError("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                       " instances, fewer than " + std::to_string(folds) + " folds");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t j = 0; j < members.size(); ++j) part[members[j]] = (offset + j) % folds;
    offset = (offset + members.size()) % folds;
  }
  std::vector<Fold> out(folds);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t f = 0; f < folds; ++f) (part[i] == f ? out[f].test : out[f].train).push_back(i);
  }
  return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                              std::size_t epoch) {
  if (batch_size == 0) throw ContractError("batch size must be positive");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(derive_seed(seed, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xf];
    value >>= 4;
  }
  return out;
}

}  // namespace mac
