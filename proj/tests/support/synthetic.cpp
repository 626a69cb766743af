#include "synthetic.hpp"

#include <algorithm>
#include <random>

#include "mac/random.hpp"

namespace mac::testing {

std::vector<PlantedClaim> make_planted_corpus(const SyntheticSpec& spec) {
  Rng rng(spec.seed);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto filler = [&] { return "w" + std::to_string(pick(spec.filler_words)); };

  const auto true_count = static_cast<std::size_t>(static_cast<double>(spec.claims) * spec.true_fraction + 0.5);
  std::vector<int> labels(spec.claims, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(true_count), 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<PlantedClaim> out;
  for (std::size_t c = 0; c < spec.claims; ++c) {
    PlantedClaim pc;
    ClaimRecord& r = pc.record;
    r.claim_id = "c" + std::to_string(c);
    r.label = labels[c];
    r.raw_label = r.label ? "true" : "false";
    for (std::size_t t = 0; t < spec.claim_tokens; ++t) r.claim_text += (t ? " " : "") + filler();
    if (spec.with_speakers) r.speaker = "speaker" + std::to_string(pick(spec.speakers));

    const std::size_t docs = spec.min_docs + pick(spec.max_docs - spec.min_docs + 1);
    const std::size_t signal_doc = pick(docs);
    for (std::size_t d = 0; d < docs; ++d) {
      std::vector<std::string> tokens;
      for (std::size_t t = 0; t < spec.doc_tokens; ++t) tokens.push_back(filler());
      if (r.label == 1 && d == signal_doc) {
        const std::size_t pos = pick(spec.doc_tokens);
        tokens[pos] = spec.keyword;
        pc.planted.emplace_back(d, pos);
      }
      std::string text;
      for (std::size_t t = 0; t < tokens.size(); ++t) text += (t ? " " : "") + tokens[t];
      r.evidence.push_back({text, "pub" + std::to_string(pick(spec.publishers))});
    }
    out.push_back(std::move(pc));
  }
  return out;
}

std::vector<ClaimRecord> records_of(const std::vector<PlantedClaim>& claims) {
  std::vector<ClaimRecord> out;
  for (const auto& c : claims) out.push_back(c.record);
  return out;
}

std::string to_jsonl_text(const std::vector<ClaimRecord>& records, Schema schema) {
  std::string text;
  for (const auto& r : records) text += to_jsonl(r, schema) + "\n";
  return text;
}

ClaimInstance random_instance(const MacConfig& cfg, std::uint64_t seed, bool allow_padding) {
  Rng rng(seed);
  auto between = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  auto token = [&] { return static_cast<std::int32_t>(between(1, cfg.vocab_size - 1)); };

  auto sequence = [&](std::size_t len, std::vector<std::int32_t>& ids, std::vector<std::uint8_t>& mask) {
    const std::size_t real = allow_padding ? between(1, len) : len;
    ids.assign(len, kPadId);
    mask.assign(len, 0);
    for (std::size_t t = 0; t < real; ++t) {
      ids[t] = token();
      mask[t] = 1;
    }
  };

  ClaimInstance inst;
  inst.claim_key = "random" + std::to_string(seed);
  inst.label = static_cast<int>(between(0, 1));
  sequence(cfg.claim_len, inst.claim_ids, inst.claim_mask);
  inst.speaker_id = static_cast<std::int32_t>(between(0, cfg.speaker_count - 1));
  const std::size_t docs = allow_padding ? between(1, cfg.max_docs) : cfg.max_docs;
  inst.docs.resize(cfg.max_docs);
  inst.doc_mask.assign(cfg.max_docs, 0);
  for (std::size_t d = 0; d < cfg.max_docs; ++d) {
    if (d < docs) {
      sequence(cfg.doc_len, inst.docs[d].ids, inst.docs[d].mask);
      inst.docs[d].publisher_id = static_cast<std::int32_t>(between(0, cfg.publisher_count - 1));
      inst.doc_mask[d] = 1;
    } else {
      inst.docs[d].ids.assign(cfg.doc_len, kPadId);
      inst.docs[d].mask.assign(cfg.doc_len, 0);
    }
  }
  return inst;
}

}  // namespace mac::testing
