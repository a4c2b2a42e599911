#pragma once

// Rule-based extraction over report text: per-condition mention detection
// with negation and uncertainty scope handling, aggregation by precedence
// positive > uncertain > negative, and the binary training target.

#include <cstdint>
#include <string>
#include <vector>

namespace seltune {

enum class ConditionLabel { Positive, Negative, Uncertain, Missing };

std::string to_string(ConditionLabel label);
ConditionLabel parse_condition_label(const std::string& s);

using Phrase = std::vector<std::string>;  // lowercase token sequence

struct RuleSet {
  struct Condition {
    std::string name;
    std::vector<Phrase> phrases;
  };
  std::vector<Condition> conditions;
  std::vector<Phrase> negation_cues;
  std::vector<Phrase> uncertainty_cues;
  int64_t negation_window = 6;
  int64_t uncertainty_window = 6;

  // Enforces the shipped-rule-set invariants: exactly 14 conditions,
  // nonempty phrase lists, windows >= 1.
  void validate() const;
};

// Parses the sectioned rules format:
//   [condition "<name>"]   with `phrase = <text>` lines
//   [negation] / [uncertainty]  with `cue = <text>` and `window = <n>` lines
// `#` starts a comment line.
RuleSet parse_rules_text(const std::string& text);
RuleSet load_rules(const std::string& path);

struct LabeledDocument {
  std::string doc_id;
  std::string text;
  std::vector<ConditionLabel> condition_labels;  // aligned with RuleSet order
  int32_t binary_target = -1;                    // -1 while unlabeled
};

// Lowercases, tokenizes on non-alphanumerics, and classifies every phrase
// match: a negation cue within the preceding scope window wins, else an
// uncertainty cue, else the mention is positive. Scope ends at sentence
// boundaries (. ! ?) and at "but". Per-condition aggregation by precedence
// positive > uncertain > negative; no mention -> missing.
std::vector<ConditionLabel> label_report(const std::string& text,
                                         const RuleSet& rules);

// 1 iff any condition is positive or uncertain.
int32_t binarize(const std::vector<ConditionLabel>& labels);

struct CorpusStats {
  int64_t count_pos_or_unc = 0;
  int64_t count_neg = 0;
  double fraction_pos_or_unc = 0.0;
  double fraction_neg = 0.0;
};

// Exact counts over binary targets; errors on an empty corpus.
CorpusStats corpus_stats(const std::vector<LabeledDocument>& docs);

// The labeler's tokenization, exposed for phrase preparation and tests:
// lowercased [a-z0-9]+ runs.
std::vector<std::string> labeler_tokenize(const std::string& text);

}  // namespace seltune
