#pragma once

// Byte-level BPE compatible with the published GPT-2 vocabulary files
// (JSON token->id map plus newline-separated merge pairs with a header
// line), and fixed-length batch encoding with truncation, right padding and
// attention masks.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "seltune/batch.hpp"

namespace seltune {

class BpeVocab {
 public:
  // Loads and validates: ids dense in [0, vocab_size), every merge output
  // present in the vocabulary, <|endoftext|> present (it doubles as the pad
  // id). Immutable afterwards and safely shareable across threads.
  static BpeVocab load(const std::string& vocab_path,
                       const std::string& merges_path);

  int64_t size() const { return static_cast<int64_t>(id_to_token_.size()); }
  int32_t end_of_text_id() const { return eot_id_; }
  int32_t pad_id() const { return eot_id_; }

  const std::string& token(int32_t id) const;
  int32_t id(const std::string& token) const;  // -1 if absent
  // Merge priority of the adjacent pair (a, b); -1 if not a merge rule.
  int32_t merge_rank(const std::string& a, const std::string& b) const;

  const std::string& byte_to_unicode(uint8_t b) const {
    return byte_encoder_[b];
  }
  // -1 when the unicode unit does not map back to a byte.
  int byte_from_unicode(const std::string& unit) const;

 private:
  BpeVocab() = default;
  std::unordered_map<std::string, int32_t> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int32_t> merge_ranks_;  // key "a b"
  std::vector<std::string> byte_encoder_ = make_byte_encoder();
  std::unordered_map<std::string, int> byte_decoder_;
  int32_t eot_id_ = -1;

  static std::vector<std::string> make_byte_encoder();
};

// Byte-level BPE over GPT-2's pre-tokenization fragments, merges applied
// greedily in merge-priority order. Deterministic; round-trips through
// decode for arbitrary byte strings.
std::vector<int32_t> encode(const std::string& text, const BpeVocab& vocab);

std::string decode(const std::vector<int32_t>& ids, const BpeVocab& vocab);

// The pre-tokenization fragment boundaries (exposed for tests).
std::vector<std::string> pretokenize(const std::string& text);

// Each text truncated to its first max_len tokens, shorter rows right-padded
// with the pad id, all rows padded to exactly max_len. A text that encodes
// to zero tokens becomes a single pad token with mask 1 and a warning entry.
EncodedBatch encode_batch(const std::vector<std::string>& texts,
                          const std::vector<int32_t>& labels, int64_t max_len,
                          const BpeVocab& vocab);

}  // namespace seltune
