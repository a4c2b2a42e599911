#pragma once

// Corpus ingestion and emission. Two input formats, chosen by extension:
//   .csv / .tsv  — delimiter-separated with a header row naming doc_id,
//                  text and optionally label; no newlines inside fields.
//   .jsonl       — one JSON object per line with the same fields plus an
//                  optional condition_labels object; text may contain
//                  newlines. Labeled corpora are always written as JSONL.

#include <string>
#include <vector>

#include "seltune/labeler.hpp"

namespace seltune {

std::vector<LabeledDocument> read_corpus(const std::string& path);

// Writes doc_id, text, label and per-condition labels (named by the rule
// set's condition order) as JSONL. Deterministic byte output.
void write_labeled_corpus(const std::string& path,
                          const std::vector<LabeledDocument>& docs,
                          const std::vector<std::string>& condition_names);

}  // namespace seltune
