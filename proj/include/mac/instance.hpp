#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mac {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;
// Speaker and publisher tables have no PAD row; id 0 is the shared unknown entry.
inline constexpr std::int32_t kUnknownEntityId = 0;

struct DocumentSlot {
  std::vector<std::int32_t> ids;   // length m
  std::vector<std::uint8_t> mask;  // length m
  std::int32_t publisher_id = kUnknownEntityId;
};

/// One encoded claim with its evidence, padded to the configured n, m and k.
struct ClaimInstance {
  std::string claim_key;
  std::vector<std::int32_t> claim_ids;   // length n
  std::vector<std::uint8_t> claim_mask;  // length n
  std::optional<std::int32_t> speaker_id;
  std::vector<DocumentSlot> docs;        // length k; padded slots are all PAD
  std::vector<std::uint8_t> doc_mask;    // length k
  int label = 0;                         // 1 = true news

  std::size_t real_document_count() const {
    std::size_t n = 0;
    for (auto m : doc_mask) n += m != 0;
    return n;
  }
};

}  // namespace mac
