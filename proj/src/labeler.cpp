#include "seltune/labeler.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace seltune {

std::string to_string(ConditionLabel label) {
  switch (label) {
    case ConditionLabel::Positive: return "positive";
    case ConditionLabel::Negative: return "negative";
    case ConditionLabel::Uncertain: return "uncertain";
    case ConditionLabel::Missing: return "missing";
  }
  throw std::logic_error("unreachable condition label");
}

ConditionLabel parse_condition_label(const std::string& s) {
  if (s == "positive") return ConditionLabel::Positive;
  if (s == "negative") return ConditionLabel::Negative;
  if (s == "uncertain") return ConditionLabel::Uncertain;
  if (s == "missing") return ConditionLabel::Missing;
  throw std::invalid_argument("unknown condition label `" + s + "`");
}

std::vector<std::string> labeler_tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

struct TokenizedText {
  std::vector<std::string> tokens;
  // boundary_before[i]: a sentence terminator (. ! ?) occurs between token
  // i-1 and token i.
  std::vector<bool> boundary_before;
};

TokenizedText tokenize_with_boundaries(const std::string& text) {
  TokenizedText out;
  std::string cur;
  bool pending_boundary = false;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      if (cur.empty()) {
        out.boundary_before.push_back(pending_boundary);
        pending_boundary = false;
      }
      cur += static_cast<char>(std::tolower(c));
    } else {
      if (!cur.empty()) {
        out.tokens.push_back(std::move(cur));
        cur.clear();
      }
      if (ch == '.' || ch == '!' || ch == '?') pending_boundary = true;
    }
  }
  if (!cur.empty()) out.tokens.push_back(std::move(cur));
  return out;
}

bool match_at(const std::vector<std::string>& tokens, size_t pos,
              const Phrase& phrase) {
  if (pos + phrase.size() > tokens.size()) return false;
  for (size_t i = 0; i < phrase.size(); ++i)
    if (tokens[pos + i] != phrase[i]) return false;
  return true;
}

// A cue ending at `cue_end` (exclusive) scopes a mention starting at `start`
// when the mention begins within `window` tokens and no sentence boundary or
// "but" intervenes.
bool cue_in_scope(const TokenizedText& text, size_t cue_end, size_t start,
                  int64_t window) {
  if (start < cue_end) return false;
  if (static_cast<int64_t>(start - cue_end) >= window) return false;
  for (size_t j = cue_end; j < start; ++j)
    if (text.tokens[j] == "but") return false;
  for (size_t j = cue_end; j <= start; ++j)
    if (text.boundary_before[j]) return false;
  return true;
}

bool scoped_by_any(const TokenizedText& text, const std::vector<Phrase>& cues,
                   size_t mention_start, int64_t window) {
  for (const Phrase& cue : cues) {
    if (cue.empty()) continue;
    const size_t limit = mention_start;  // cue must end at or before the start
    for (size_t pos = 0; pos + cue.size() <= text.tokens.size(); ++pos) {
      const size_t cue_end = pos + cue.size();
      if (cue_end > limit) break;
      if (!match_at(text.tokens, pos, cue)) continue;
      if (cue_in_scope(text, cue_end, mention_start, window)) return true;
    }
  }
  return false;
}

}  // namespace

std::vector<ConditionLabel> label_report(const std::string& text,
                                         const RuleSet& rules) {
  const TokenizedText tokenized = tokenize_with_boundaries(text);
  std::vector<ConditionLabel> out(rules.conditions.size(),
                                  ConditionLabel::Missing);
  for (size_t c = 0; c < rules.conditions.size(); ++c) {
    bool any_positive = false, any_uncertain = false, any_negative = false;
    for (const Phrase& phrase : rules.conditions[c].phrases) {
      if (phrase.empty()) continue;
      for (size_t pos = 0; pos + phrase.size() <= tokenized.tokens.size();
           ++pos) {
        if (!match_at(tokenized.tokens, pos, phrase)) continue;
        if (scoped_by_any(tokenized, rules.negation_cues, pos,
                          rules.negation_window)) {
          any_negative = true;
        } else if (scoped_by_any(tokenized, rules.uncertainty_cues, pos,
                                 rules.uncertainty_window)) {
          any_uncertain = true;
        } else {
          any_positive = true;
        }
      }
    }
    if (any_positive)
      out[c] = ConditionLabel::Positive;
    else if (any_uncertain)
      out[c] = ConditionLabel::Uncertain;
    else if (any_negative)
      out[c] = ConditionLabel::Negative;
  }
  return out;
}

int32_t binarize(const std::vector<ConditionLabel>& labels) {
  for (ConditionLabel l : labels)
    if (l == ConditionLabel::Positive || l == ConditionLabel::Uncertain)
      return 1;
  return 0;
}

CorpusStats corpus_stats(const std::vector<LabeledDocument>& docs) {
  if (docs.empty())
    throw std::invalid_argument("corpus_stats: empty corpus");
  CorpusStats s;
  for (const auto& d : docs) {
    if (d.binary_target != 0 && d.binary_target != 1)
      throw std::invalid_argument("corpus_stats: document `" + d.doc_id +
                                  "` has no binary target");
    if (d.binary_target == 1)
      ++s.count_pos_or_unc;
    else
      ++s.count_neg;
  }
  const double n = static_cast<double>(docs.size());
  s.fraction_pos_or_unc = static_cast<double>(s.count_pos_or_unc) / n;
  s.fraction_neg = static_cast<double>(s.count_neg) / n;
  return s;
}

void RuleSet::validate() const {
  if (conditions.size() != 14)
    throw std::invalid_argument("rules: expected exactly 14 conditions, got " +
                                std::to_string(conditions.size()));
  for (const auto& c : conditions) {
    if (c.phrases.empty())
      throw std::invalid_argument("rules: condition \"" + c.name +
                                  "\" has an empty phrase list");
    for (const auto& p : c.phrases)
      if (p.empty())
        throw std::invalid_argument("rules: condition \"" + c.name +
                                    "\" has a phrase with no tokens");
  }
  if (negation_window < 1 || uncertainty_window < 1)
    throw std::invalid_argument("rules: scope windows must be >= 1");
  if (negation_cues.empty() || uncertainty_cues.empty())
    throw std::invalid_argument("rules: negation and uncertainty cue lists "
                                "must be nonempty");
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

RuleSet parse_rules_text(const std::string& text) {
  RuleSet rules;
  enum class Section { None, Condition, Negation, Uncertainty };
  Section section = Section::None;

  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = " at line " + std::to_string(line_no);

    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::invalid_argument("rules: unterminated section header" + where);
      const std::string header = trim(t.substr(1, t.size() - 2));
      if (header == "negation") {
        section = Section::Negation;
      } else if (header == "uncertainty") {
        section = Section::Uncertainty;
      } else if (header.rfind("condition", 0) == 0) {
        const size_t q1 = header.find('"');
        const size_t q2 = header.rfind('"');
        if (q1 == std::string::npos || q2 <= q1)
          throw std::invalid_argument(
              "rules: condition header needs a quoted name" + where);
        rules.conditions.push_back({header.substr(q1 + 1, q2 - q1 - 1), {}});
        section = Section::Condition;
      } else {
        throw std::invalid_argument("rules: unknown section [" + header + "]" +
                                    where);
      }
      continue;
    }

    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("rules: expected `key = value`" + where);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));

    if (section == Section::Condition && key == "phrase") {
      Phrase p = labeler_tokenize(value);
      if (p.empty())
        throw std::invalid_argument("rules: phrase has no tokens" + where);
      rules.conditions.back().phrases.push_back(std::move(p));
    } else if ((section == Section::Negation ||
                section == Section::Uncertainty) &&
               key == "cue") {
      Phrase p = labeler_tokenize(value);
      if (p.empty())
        throw std::invalid_argument("rules: cue has no tokens" + where);
      (section == Section::Negation ? rules.negation_cues
                                    : rules.uncertainty_cues)
          .push_back(std::move(p));
    } else if ((section == Section::Negation ||
                section == Section::Uncertainty) &&
               key == "window") {
      int64_t w = 0;
      try {
        w = std::stoll(value);
      } catch (...) {
        throw std::invalid_argument("rules: window must be an integer" + where);
      }
      (section == Section::Negation ? rules.negation_window
                                    : rules.uncertainty_window) = w;
    } else {
      throw std::invalid_argument("rules: unexpected key `" + key + "`" + where);
    }
  }
  return rules;
}

RuleSet load_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("rules: cannot open `" + path + "`");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_rules_text(ss.str());
}

}  // namespace seltune
