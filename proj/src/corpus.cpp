#include "seltune/corpus.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace seltune {

namespace {

using nlohmann::json;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// One record line split on the delimiter, honoring double-quote escaping.
// Newlines inside quoted fields are rejected (use JSONL for multi-line text).
std::vector<std::string> split_dsv_line(const std::string& line, char delim,
                                        size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted)
    throw std::runtime_error(
        "corpus: unterminated quote at line " + std::to_string(line_no) +
        " (newlines inside fields need the JSONL format)");
  fields.push_back(std::move(cur));
  return fields;
}

std::vector<LabeledDocument> read_dsv(const std::string& path, char delim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("corpus: cannot open `" + path + "`");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("corpus: `" + path + "` is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_dsv_line(line, delim, 1);
  int id_col = -1, text_col = -1, label_col = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "doc_id") id_col = static_cast<int>(i);
    else if (header[i] == "text") text_col = static_cast<int>(i);
    else if (header[i] == "label") label_col = static_cast<int>(i);
  }
  if (id_col < 0 || text_col < 0)
    throw std::runtime_error("corpus: `" + path +
                             "` header must name doc_id and text columns");
  std::vector<LabeledDocument> docs;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_dsv_line(line, delim, line_no);
    if (fields.size() != header.size())
      throw std::runtime_error("corpus: line " + std::to_string(line_no) +
                               " has " + std::to_string(fields.size()) +
                               " fields, header has " +
                               std::to_string(header.size()));
    LabeledDocument d;
    d.doc_id = fields[static_cast<size_t>(id_col)];
    d.text = fields[static_cast<size_t>(text_col)];
    if (label_col >= 0 && !fields[static_cast<size_t>(label_col)].empty()) {
      try {
        d.binary_target = std::stoi(fields[static_cast<size_t>(label_col)]);
      } catch (...) {
        throw std::runtime_error("corpus: bad label at line " +
                                 std::to_string(line_no));
      }
    }
    docs.push_back(std::move(d));
  }
  if (docs.empty())
    throw std::runtime_error("corpus: `" + path + "` contains no documents");
  return docs;
}

std::vector<LabeledDocument> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("corpus: cannot open `" + path + "`");
  std::vector<LabeledDocument> docs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("corpus: invalid JSON at line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    LabeledDocument d;
    const auto& id = j.at("doc_id");
    d.doc_id = id.is_string() ? id.get<std::string>() : id.dump();
    d.text = j.at("text").get<std::string>();
    if (j.contains("label") && !j["label"].is_null())
      d.binary_target = j["label"].get<int32_t>();
    if (j.contains("condition_labels")) {
      // an ordered array of {condition, label} pairs, rule-set order
      for (const auto& entry : j["condition_labels"])
        d.condition_labels.push_back(
            parse_condition_label(entry.at("label").get<std::string>()));
    }
    docs.push_back(std::move(d));
  }
  if (docs.empty())
    throw std::runtime_error("corpus: `" + path + "` contains no documents");
  return docs;
}

}  // namespace

std::vector<LabeledDocument> read_corpus(const std::string& path) {
  if (ends_with(path, ".csv")) return read_dsv(path, ',');
  if (ends_with(path, ".tsv")) return read_dsv(path, '\t');
  if (ends_with(path, ".jsonl") || ends_with(path, ".ndjson"))
    return read_jsonl(path);
  throw std::runtime_error("corpus: `" + path +
                           "` has an unsupported extension (expected .csv, "
                           ".tsv or .jsonl)");
}

void write_labeled_corpus(const std::string& path,
                          const std::vector<LabeledDocument>& docs,
                          const std::vector<std::string>& condition_names) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("corpus: cannot open `" + path +
                             "` for writing");
  for (const auto& d : docs) {
    json j;
    j["doc_id"] = d.doc_id;
    j["text"] = d.text;
    j["label"] = d.binary_target;
    if (!d.condition_labels.empty()) {
      json cl = json::array();
      for (size_t i = 0;
           i < d.condition_labels.size() && i < condition_names.size(); ++i)
        cl.push_back(json{{"condition", condition_names[i]},
                          {"label", to_string(d.condition_labels[i])}});
      j["condition_labels"] = cl;
    }
    out << j.dump() << "\n";
  }
  if (!out)
    throw std::runtime_error("corpus: write to `" + path + "` failed");
}

}  // namespace seltune
