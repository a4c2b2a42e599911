#include "seltune/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace seltune {

namespace {

const char kEndOfText[] = "<|endoftext|>";

std::string utf8_encode(uint32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

struct Cp {
  uint32_t cp;
  size_t len;
};

// Tolerant decode: an invalid lead/truncated sequence counts as one byte, so
// fragment boundaries are well defined for arbitrary input.
Cp decode_cp(const std::string& s, size_t i) {
  const unsigned char c = static_cast<unsigned char>(s[i]);
  if ((c & 0x80) == 0) return {c, 1};
  if ((c & 0xE0) == 0xC0 && i + 1 < s.size())
    return {static_cast<uint32_t>(((c & 0x1F) << 6) |
                                  (static_cast<unsigned char>(s[i + 1]) & 0x3F)),
            2};
  if ((c & 0xF0) == 0xE0 && i + 2 < s.size())
    return {static_cast<uint32_t>(
                ((c & 0x0F) << 12) |
                ((static_cast<unsigned char>(s[i + 1]) & 0x3F) << 6) |
                (static_cast<unsigned char>(s[i + 2]) & 0x3F)),
            3};
  if ((c & 0xF8) == 0xF0 && i + 3 < s.size())
    return {static_cast<uint32_t>(
                ((c & 0x07) << 18) |
                ((static_cast<unsigned char>(s[i + 1]) & 0x3F) << 12) |
                ((static_cast<unsigned char>(s[i + 2]) & 0x3F) << 6) |
                (static_cast<unsigned char>(s[i + 3]) & 0x3F)),
            4};
  return {c, 1};
}

bool is_space_cp(uint32_t cp) {
  switch (cp) {
    case ' ': case '\t': case '\n': case '\r': case '\f': case '\v':
    case 0x1C: case 0x1D: case 0x1E: case 0x1F: case 0x85: case 0xA0:
    case 0x1680: case 0x2028: case 0x2029: case 0x202F: case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_digit_cp(uint32_t cp) {
  if (cp < 128) return cp >= '0' && cp <= '9';
  if (cp >= 0x0660 && cp <= 0x0669) return true;  // Arabic-Indic
  if (cp >= 0x0966 && cp <= 0x096F) return true;  // Devanagari
  if (cp >= 0xFF10 && cp <= 0xFF19) return true;  // fullwidth
  return false;
}

bool is_letter_cp(uint32_t cp) {
  if (cp < 128)
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  if ((cp >= 0x00C0 && cp <= 0x02AF && cp != 0x00D7 && cp != 0x00F7) ||
      (cp >= 0x0370 && cp <= 0x03FF) ||  // Greek
      (cp >= 0x0400 && cp <= 0x052F) ||  // Cyrillic
      (cp >= 0x0530 && cp <= 0x058F) ||  // Armenian
      (cp >= 0x05D0 && cp <= 0x05EA) ||  // Hebrew letters
      (cp >= 0x0620 && cp <= 0x064A) ||  // Arabic letters
      (cp >= 0x0900 && cp <= 0x0963) ||  // Devanagari
      (cp >= 0x0E01 && cp <= 0x0E2E) ||  // Thai
      (cp >= 0x3041 && cp <= 0x30FF) ||  // kana
      (cp >= 0x3400 && cp <= 0x4DBF) || (cp >= 0x4E00 && cp <= 0x9FFF) ||
      (cp >= 0xAC00 && cp <= 0xD7AF) || (cp >= 0xF900 && cp <= 0xFAFF) ||
      (cp == 0x00AA) || (cp == 0x00B5) || (cp == 0x00BA))
    return true;
  return false;
}

enum class CpClass { Letter, Digit, Space, Other };

CpClass classify(uint32_t cp) {
  if (is_space_cp(cp)) return CpClass::Space;
  if (is_letter_cp(cp)) return CpClass::Letter;
  if (is_digit_cp(cp)) return CpClass::Digit;
  return CpClass::Other;
}

}  // namespace

// GPT-2's split pattern ('s|'t|'re|'ve|'m|'ll|'d| ?L+| ?N+| ?P+|\s+(?!\S)|\s+)
// realized as a hand-rolled scanner over code points of the raw text.
std::vector<std::string> pretokenize(const std::string& text) {
  static const char* kContractions[] = {"'s", "'t", "'re", "'ve",
                                        "'m", "'ll", "'d"};
  std::vector<std::string> out;
  const size_t n = text.size();
  size_t i = 0;
  while (i < n) {
    if (text[i] == '\'') {
      bool matched = false;
      for (const char* suffix : kContractions) {
        const size_t len = std::char_traits<char>::length(suffix);
        if (text.compare(i, len, suffix) == 0) {
          out.emplace_back(text, i, len);
          i += len;
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    const bool leading_space = text[i] == ' ';
    const size_t body = i + (leading_space ? 1 : 0);
    if (body < n) {
      const Cp first = decode_cp(text, body);
      const CpClass cls = classify(first.cp);
      if (cls != CpClass::Space) {
        size_t end = body;
        if (cls == CpClass::Other) {
          // run of non-space, non-letter, non-digit
          while (end < n) {
            const Cp c = decode_cp(text, end);
            if (classify(c.cp) != CpClass::Other) break;
            end += c.len;
          }
        } else {
          while (end < n) {
            const Cp c = decode_cp(text, end);
            if (classify(c.cp) != cls) break;
            end += c.len;
          }
        }
        out.emplace_back(text, i, end - i);
        i = end;
        continue;
      }
    }
    // Whitespace run. With a non-space character following, the run gives up
    // its final whitespace char, which then glues onto the next fragment
    // (the \s+(?!\S) backtracking behavior).
    size_t end = i, last_start = i, count = 0;
    while (end < n) {
      const Cp c = decode_cp(text, end);
      if (!is_space_cp(c.cp)) break;
      last_start = end;
      end += c.len;
      ++count;
    }
    if (end < n && count >= 2) {
      out.emplace_back(text, i, last_start - i);
      i = last_start;
    } else {
      out.emplace_back(text, i, end - i);
      i = end;
    }
  }
  return out;
}

std::vector<std::string> BpeVocab::make_byte_encoder() {
  // The published byte-to-unicode remapping: printable latin-1 ranges map to
  // themselves, everything else to 256+n in byte order.
  std::vector<int> direct;
  for (int b = '!'; b <= '~'; ++b) direct.push_back(b);
  for (int b = 0xA1; b <= 0xAC; ++b) direct.push_back(b);
  for (int b = 0xAE; b <= 0xFF; ++b) direct.push_back(b);
  std::vector<bool> is_direct(256, false);
  for (int b : direct) is_direct[static_cast<size_t>(b)] = true;

  std::vector<std::string> table(256);
  int next = 0;
  for (int b = 0; b < 256; ++b) {
    const uint32_t cp =
        is_direct[static_cast<size_t>(b)] ? static_cast<uint32_t>(b)
                                          : static_cast<uint32_t>(256 + next++);
    table[static_cast<size_t>(b)] = utf8_encode(cp);
  }
  return table;
}

int BpeVocab::byte_from_unicode(const std::string& unit) const {
  auto it = byte_decoder_.find(unit);
  return it == byte_decoder_.end() ? -1 : it->second;
}

BpeVocab BpeVocab::load(const std::string& vocab_path,
                        const std::string& merges_path) {
  BpeVocab v;
  for (int b = 0; b < 256; ++b) v.byte_decoder_[v.byte_encoder_[b]] = b;

  std::ifstream vf(vocab_path);
  if (!vf)
    throw std::runtime_error("bpe: cannot open vocabulary file `" +
                             vocab_path + "`");
  nlohmann::json j;
  try {
    vf >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bpe: invalid vocabulary JSON in `" + vocab_path +
                             "`: " + e.what());
  }
  if (!j.is_object())
    throw std::runtime_error("bpe: vocabulary file must be a JSON object");

  const int64_t n = static_cast<int64_t>(j.size());
  v.id_to_token_.assign(static_cast<size_t>(n), std::string());
  std::vector<bool> seen(static_cast<size_t>(n), false);
  for (auto it = j.begin(); it != j.end(); ++it) {
    const int64_t id = it.value().get<int64_t>();
    if (id < 0 || id >= n)
      throw std::runtime_error("bpe: token id " + std::to_string(id) +
                               " outside dense range [0," + std::to_string(n) +
                               ")");
    if (seen[static_cast<size_t>(id)])
      throw std::runtime_error("bpe: duplicate token id " + std::to_string(id));
    seen[static_cast<size_t>(id)] = true;
    v.id_to_token_[static_cast<size_t>(id)] = it.key();
    v.token_to_id_.emplace(it.key(), static_cast<int32_t>(id));
  }

  auto eot = v.token_to_id_.find(kEndOfText);
  if (eot == v.token_to_id_.end())
    throw std::runtime_error("bpe: vocabulary lacks " + std::string(kEndOfText) +
                             ", required as the pad token");
  v.eot_id_ = eot->second;

  std::ifstream mf(merges_path);
  if (!mf)
    throw std::runtime_error("bpe: cannot open merges file `" + merges_path +
                             "`");
  std::string line;
  if (!std::getline(mf, line))
    throw std::runtime_error("bpe: merges file is empty (header expected)");
  int32_t rank = 0;
  size_t line_no = 1;
  while (std::getline(mf, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b;
    if (!(ls >> a >> b))
      throw std::runtime_error("bpe: malformed merge at line " +
                               std::to_string(line_no));
    if (v.token_to_id_.find(a + b) == v.token_to_id_.end())
      throw std::runtime_error("bpe: merge output `" + a + b +
                               "` (line " + std::to_string(line_no) +
                               ") not in the vocabulary");
    v.merge_ranks_.emplace(a + " " + b, rank++);
  }
  return v;
}

const std::string& BpeVocab::token(int32_t id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("bpe: token id " + std::to_string(id) +
                            " outside vocabulary of " + std::to_string(size()));
  return id_to_token_[static_cast<size_t>(id)];
}

int32_t BpeVocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? -1 : it->second;
}

int32_t BpeVocab::merge_rank(const std::string& a, const std::string& b) const {
  auto it = merge_ranks_.find(a + " " + b);
  return it == merge_ranks_.end() ? -1 : it->second;
}

namespace {

// Greedy merge application in priority order: repeatedly merge every
// occurrence of the lowest-ranked adjacent pair.
void bpe_fragment(const std::string& fragment, const BpeVocab& vocab,
                  std::vector<int32_t>& out) {
  std::string remapped;
  remapped.reserve(fragment.size() * 2);
  for (unsigned char byte : fragment)
    remapped += vocab.byte_to_unicode(byte);

  std::vector<std::string> word;
  for (size_t i = 0; i < remapped.size();) {
    const Cp c = decode_cp(remapped, i);
    word.emplace_back(remapped, i, c.len);
    i += c.len;
  }

  while (word.size() >= 2) {
    int32_t best_rank = std::numeric_limits<int32_t>::max();
    size_t best = word.size();
    for (size_t i = 0; i + 1 < word.size(); ++i) {
      const int32_t r = vocab.merge_rank(word[i], word[i + 1]);
      if (r >= 0 && r < best_rank) {
        best_rank = r;
        best = i;
      }
    }
    if (best == word.size()) break;
    const std::string first = word[best];
    const std::string second = word[best + 1];
    std::vector<std::string> merged;
    merged.reserve(word.size());
    for (size_t i = 0; i < word.size();) {
      if (i + 1 < word.size() && word[i] == first && word[i + 1] == second) {
        merged.push_back(first + second);
        i += 2;
      } else {
        merged.push_back(std::move(word[i]));
        i += 1;
      }
    }
    word = std::move(merged);
  }

  for (const std::string& sym : word) {
    const int32_t id = vocab.id(sym);
    if (id < 0)
      throw std::runtime_error("bpe: symbol `" + sym +
                               "` missing from the vocabulary (incomplete "
                               "byte alphabet?)");
    out.push_back(id);
  }
}

}  // namespace

std::vector<int32_t> encode(const std::string& text, const BpeVocab& vocab) {
  std::vector<int32_t> out;
  for (const std::string& fragment : pretokenize(text))
    bpe_fragment(fragment, vocab, out);
  return out;
}

std::string decode(const std::vector<int32_t>& ids, const BpeVocab& vocab) {
  std::string unicode;
  for (int32_t id : ids) unicode += vocab.token(id);
  std::string bytes;
  bytes.reserve(unicode.size());
  for (size_t i = 0; i < unicode.size();) {
    const Cp c = decode_cp(unicode, i);
    const int b = vocab.byte_from_unicode(unicode.substr(i, c.len));
    if (b >= 0) bytes += static_cast<char>(b);
    i += c.len;
  }
  return bytes;
}

EncodedBatch encode_batch(const std::vector<std::string>& texts,
                          const std::vector<int32_t>& labels, int64_t max_len,
                          const BpeVocab& vocab) {
  if (texts.empty())
    throw std::invalid_argument("encode_batch: empty text list");
  if (max_len < 1)
    throw std::invalid_argument("encode_batch: max_len must be >= 1");
  if (!labels.empty() && labels.size() != texts.size())
    throw std::invalid_argument("encode_batch: labels/texts size mismatch");

  EncodedBatch batch;
  batch.batch_size = static_cast<int64_t>(texts.size());
  batch.seq_len = max_len;
  batch.token_ids.assign(batch.batch_size * max_len, vocab.pad_id());
  batch.attention_mask.assign(batch.batch_size * max_len, 0);
  batch.labels = labels.empty()
                     ? std::vector<int32_t>(texts.size(), 0)
                     : labels;
  batch.last_index.assign(batch.batch_size, 0);

  for (size_t i = 0; i < texts.size(); ++i) {
    std::vector<int32_t> ids = encode(texts[i], vocab);
    if (ids.empty()) {
      // Degenerate row: a single pad token stands in as the one real token.
      ids.push_back(vocab.pad_id());
      batch.warnings.push_back("document " + std::to_string(i) +
                               " encoded to zero tokens; padded to one");
    }
    if (static_cast<int64_t>(ids.size()) > max_len) ids.resize(max_len);
    const int64_t len = static_cast<int64_t>(ids.size());
    for (int64_t t = 0; t < len; ++t) {
      batch.token_ids[static_cast<int64_t>(i) * max_len + t] = ids[t];
      batch.attention_mask[static_cast<int64_t>(i) * max_len + t] = 1;
    }
    batch.last_index[i] = static_cast<int32_t>(len - 1);
  }
  return batch;
}

}  // namespace seltune
