#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace seltune {

// Fixed-length token batch: right-padded ids, {0,1} attention mask, labels,
// and the position of the last real token per row.
struct EncodedBatch {
  int64_t batch_size = 0;
  int64_t seq_len = 0;
  std::vector<int32_t> token_ids;       // batch_size x seq_len, row-major
  std::vector<uint8_t> attention_mask;  // same layout; prefix of 1s per row
  std::vector<int32_t> labels;          // batch_size
  std::vector<int32_t> last_index;      // batch_size
  std::vector<std::string> warnings;    // e.g. texts that encoded to nothing
};

}  // namespace seltune
