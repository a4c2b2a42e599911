#include "seltune/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "seltune/bpe.hpp"
#include "seltune/checkpoint.hpp"
#include "seltune/corpus.hpp"
#include "seltune/metrics.hpp"
#include "seltune/trainer.hpp"

namespace seltune {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Shared option bag: every key in the flat config file mirrors one of these
// fields; command-line flags override file values.
// ---------------------------------------------------------------------------

struct Options {
  std::string config_path;
  std::string input;
  std::string output;
  std::string output_dir = "out";
  std::string rules;
  std::string data, train_data, val_data, test_data;
  std::string checkpoint, vocab, merges;
  std::string preset;
  std::string strategy = "selective";
  std::string run_name;
  uint64_t seed = 0;
  int64_t epochs = 10;
  int64_t batch_size = 16;
  int64_t max_len = 512;
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  bool shuffle = true;
  int64_t n_classes = 2;
  double dropout_rate = 0.0;
  int64_t vocab_size = -1;      // architecture override for init/train
  int64_t max_positions = -1;   // architecture override for init
  std::string text;             // tokenize
  std::string decode_ids;       // tokenize
  std::vector<std::string> reports;  // plot-data
};

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file `" + path + "`");
  std::map<std::string, std::string> kv;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error("config `" + path + "` line " +
                         std::to_string(line_no) + ": expected key = value");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out;
  is >> out;
  if (is.fail() || !is.eof())
    throw config_error("config key `" + key + "`: cannot parse `" + value +
                       "`");
  return out;
}

void apply_config(const std::map<std::string, std::string>& kv, Options& o) {
  for (const auto& [key, value] : kv) {
    if (key == "input") o.input = value;
    else if (key == "output") o.output = value;
    else if (key == "output_dir") o.output_dir = value;
    else if (key == "rules") o.rules = value;
    else if (key == "data") o.data = value;
    else if (key == "train_data") o.train_data = value;
    else if (key == "val_data") o.val_data = value;
    else if (key == "test_data") o.test_data = value;
    else if (key == "checkpoint") o.checkpoint = value;
    else if (key == "vocab") o.vocab = value;
    else if (key == "merges") o.merges = value;
    else if (key == "preset") o.preset = value;
    else if (key == "strategy") o.strategy = value;
    else if (key == "run_name") o.run_name = value;
    else if (key == "seed") o.seed = parse_number<uint64_t>(key, value);
    else if (key == "epochs") o.epochs = parse_number<int64_t>(key, value);
    else if (key == "batch_size")
      o.batch_size = parse_number<int64_t>(key, value);
    else if (key == "max_len") o.max_len = parse_number<int64_t>(key, value);
    else if (key == "lr") o.lr = parse_number<double>(key, value);
    else if (key == "beta1") o.beta1 = parse_number<double>(key, value);
    else if (key == "beta2") o.beta2 = parse_number<double>(key, value);
    else if (key == "eps") o.eps = parse_number<double>(key, value);
    else if (key == "weight_decay")
      o.weight_decay = parse_number<double>(key, value);
    else if (key == "shuffle")
      o.shuffle = value == "true" || value == "1" || value == "yes";
    else if (key == "n_classes")
      o.n_classes = parse_number<int64_t>(key, value);
    else if (key == "dropout_rate")
      o.dropout_rate = parse_number<double>(key, value);
    else if (key == "vocab_size")
      o.vocab_size = parse_number<int64_t>(key, value);
    else if (key == "max_positions")
      o.max_positions = parse_number<int64_t>(key, value);
    else
      throw config_error("config: unknown key `" + key + "`");
  }
}

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

void require_fields(
    const std::vector<std::pair<std::string, std::string>>& problems) {
  if (problems.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& [field, why] : problems) msg += " [" + field + ": " + why + "]";
  throw config_error(msg);
}

void check_path(std::vector<std::pair<std::string, std::string>>& problems,
                const std::string& field, const std::string& value) {
  if (value.empty())
    problems.emplace_back(field, "required");
  else if (!fs::exists(value))
    problems.emplace_back(field, "path `" + value + "` does not exist");
}

ModelConfig preset_config(const std::string& preset, const Options& o) {
  ModelConfig cfg;
  if (preset == "gpt2-small")
    cfg = ModelConfig::gpt2_small(o.n_classes);
  else if (preset == "toy")
    cfg = ModelConfig::toy(o.n_classes);
  else
    throw config_error("unknown preset `" + preset +
                       "` (expected gpt2-small or toy)");
  if (o.vocab_size > 0) cfg.vocab_size = o.vocab_size;
  if (o.max_positions > 0) cfg.max_positions = o.max_positions;
  cfg.dropout_rate = o.dropout_rate;
  return cfg;
}

// Exclusive ownership of a run directory for the duration of a command.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / "lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw io_error("run directory `" + dir.string() +
                     "` is locked by another command (remove `lock` if stale)");
  }
  ~RunLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  localtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

BpeVocab load_vocab_checked(const Options& o) {
  try {
    return BpeVocab::load(o.vocab, o.merges);
  } catch (const std::exception& e) {
    throw data_error(e.what());
  }
}

std::vector<LabeledDocument> read_corpus_checked(const std::string& path) {
  try {
    return read_corpus(path);
  } catch (const std::exception& e) {
    throw data_error(e.what());
  }
}

Dataset encode_documents(const std::vector<LabeledDocument>& docs,
                         const BpeVocab& vocab, const std::string& which) {
  Dataset out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    if (d.binary_target != 0 && d.binary_target != 1)
      throw data_error("document `" + d.doc_id + "` in " + which +
                       " has no binary label; run `label` first");
    Example ex;
    ex.ids = encode(d.text, vocab);
    ex.label = d.binary_target;
    out.push_back(std::move(ex));
  }
  return out;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write `" + path.string() + "`");
  out << content;
  if (!out) throw io_error("write to `" + path.string() + "` failed");
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_label(const Options& o, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> problems;
  check_path(problems, "input", o.input);
  check_path(problems, "rules", o.rules);
  require_fields(problems);

  RuleSet rules;
  try {
    rules = load_rules(o.rules);
    rules.validate();
  } catch (const std::exception& e) {
    throw data_error(e.what());
  }
  auto docs = read_corpus_checked(o.input);

  std::vector<std::string> names;
  for (const auto& c : rules.conditions) names.push_back(c.name);
  for (auto& d : docs) {
    d.condition_labels = label_report(d.text, rules);
    d.binary_target = binarize(d.condition_labels);
  }

  fs::path output = o.output;
  if (output.empty()) {
    output = fs::path(o.output_dir) / "labels" /
             (fs::path(o.input).stem().string() + ".labeled.jsonl");
  }
  fs::create_directories(output.parent_path().empty() ? "."
                                                      : output.parent_path());
  write_labeled_corpus(output.string(), docs, names);

  const CorpusStats stats = corpus_stats(docs);
  out << "labeled " << docs.size() << " documents -> " << output.string()
      << "\n";
  out << "positive_or_uncertain: " << stats.count_pos_or_unc << " ("
      << std::fixed << std::setprecision(1) << 100.0 * stats.fraction_pos_or_unc
      << "%)\n";
  out << "negative: " << stats.count_neg << " (" << std::fixed
      << std::setprecision(1) << 100.0 * stats.fraction_neg << "%)\n";
  return 0;
}

int cmd_split(const Options& o, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> problems;
  check_path(problems, "input", o.input);
  require_fields(problems);

  const auto docs = read_corpus_checked(o.input);
  std::vector<LabeledDocument> train, val, test;
  try {
    split_70_15_15(docs, o.seed, &train, &val, &test);
  } catch (const std::exception& e) {
    throw data_error(e.what());
  }

  const fs::path dir = fs::path(o.output_dir) / "splits";
  fs::create_directories(dir);
  write_labeled_corpus((dir / "train.jsonl").string(), train, {});
  write_labeled_corpus((dir / "val.jsonl").string(), val, {});
  write_labeled_corpus((dir / "test.jsonl").string(), test, {});
  out << "split " << docs.size() << " documents: train " << train.size()
      << ", val " << val.size() << ", test " << test.size() << " -> "
      << dir.string() << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> problems;
  check_path(problems, "checkpoint", o.checkpoint);
  check_path(problems, "vocab", o.vocab);
  check_path(problems, "merges", o.merges);
  const bool single = !o.data.empty();
  if (single) {
    check_path(problems, "data", o.data);
  } else if (o.train_data.empty() && o.val_data.empty() &&
             o.test_data.empty()) {
    problems.emplace_back("data", "give data or train_data/val_data/test_data");
  } else {
    check_path(problems, "train_data", o.train_data);
    check_path(problems, "val_data", o.val_data);
    check_path(problems, "test_data", o.test_data);
  }
  Strategy strategy = Strategy::Selective;
  try {
    strategy = parse_strategy(o.strategy);
  } catch (const std::exception& e) {
    problems.emplace_back("strategy", e.what());
  }
  if (o.epochs < 1) problems.emplace_back("epochs", "must be >= 1");
  if (o.batch_size < 1) problems.emplace_back("batch_size", "must be >= 1");
  if (o.max_len < 1) problems.emplace_back("max_len", "must be >= 1");
  if (!(o.lr >= 0.0) || !std::isfinite(o.lr))
    problems.emplace_back("lr", "must be finite and >= 0");
  require_fields(problems);

  // All validation happens before any compute or output.
  ModelConfig cfg;
  ParameterStore params;
  try {
    cfg = read_checkpoint_config(o.checkpoint);
    cfg.dropout_rate = o.dropout_rate;
    if (!o.preset.empty()) {
      const ModelConfig expect = preset_config(o.preset, o);
      if (expect.d_model != cfg.d_model || expect.n_layers != cfg.n_layers ||
          expect.vocab_size != cfg.vocab_size)
        throw checkpoint_error("checkpoint `" + o.checkpoint +
                               "` does not match preset `" + o.preset + "`");
    }
    params = load_checkpoint(o.checkpoint, cfg);
  } catch (const CliError&) {
    throw;
  } catch (const std::exception& e) {
    throw checkpoint_error(e.what());
  }

  const BpeVocab vocab = load_vocab_checked(o);
  if (vocab.size() > cfg.vocab_size)
    throw config_error("tokenizer vocabulary (" + std::to_string(vocab.size()) +
                       ") exceeds model vocab_size (" +
                       std::to_string(cfg.vocab_size) + ")");

  Dataset train_set, val_set, test_set;
  if (single) {
    const auto docs = read_corpus_checked(o.data);
    std::vector<LabeledDocument> train_docs, val_docs, test_docs;
    try {
      split_70_15_15(docs, o.seed, &train_docs, &val_docs, &test_docs);
    } catch (const std::exception& e) {
      throw data_error(e.what());
    }
    train_set = encode_documents(train_docs, vocab, "data");
    val_set = encode_documents(val_docs, vocab, "data");
    test_set = encode_documents(test_docs, vocab, "data");
  } else {
    train_set =
        encode_documents(read_corpus_checked(o.train_data), vocab, "train_data");
    val_set =
        encode_documents(read_corpus_checked(o.val_data), vocab, "val_data");
    test_set =
        encode_documents(read_corpus_checked(o.test_data), vocab, "test_data");
  }

  const ParamPartition partition = apply_strategy(params, strategy, cfg);

  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.max_len = o.max_len;
  tc.lr = o.lr;
  tc.beta1 = o.beta1;
  tc.beta2 = o.beta2;
  tc.eps = o.eps;
  tc.weight_decay = o.weight_decay;
  tc.strategy = strategy;
  tc.seed = o.seed;
  tc.shuffle = o.shuffle;
  tc.pad_id = vocab.pad_id();

  const std::string run_name =
      (o.run_name.empty() ? timestamp_now() : o.run_name) + "-" + o.strategy;
  const fs::path run_dir = fs::path(o.output_dir) / "runs" / run_name;
  fs::create_directories(run_dir);
  RunLock lock(run_dir);

  const MetricsReport report =
      train(params, cfg, partition, train_set, val_set, test_set, tc);

  write_text_file(run_dir / "report.json", report.to_json_string());
  write_text_file(run_dir / "epochs.tsv", report.epoch_table());
  save_checkpoint(params, cfg, (run_dir / "model.ckpt").string());

  out << "run " << run_dir.string() << "\n";
  out << "trainable " << report.trainable_count << " / " << report.total_count
      << " (" << std::fixed << std::setprecision(3) << 100.0 * report.fraction
      << "%)\n";
  out << "test_acc " << std::setprecision(4) << report.test_acc << " f1 "
      << report.f1 << " auroc "
      << (report.auroc ? std::to_string(*report.auroc) : std::string("absent"))
      << "\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> problems;
  check_path(problems, "checkpoint", o.checkpoint);
  check_path(problems, "data", o.data);
  check_path(problems, "vocab", o.vocab);
  check_path(problems, "merges", o.merges);
  require_fields(problems);

  ModelConfig cfg;
  ParameterStore params;
  try {
    cfg = read_checkpoint_config(o.checkpoint);
    params = load_checkpoint(o.checkpoint, cfg);
  } catch (const std::exception& e) {
    throw checkpoint_error(e.what());
  }
  const BpeVocab vocab = load_vocab_checked(o);
  const auto docs = read_corpus_checked(o.data);
  const Dataset data = encode_documents(docs, vocab, "data");

  TrainConfig tc;
  tc.batch_size = o.batch_size;
  tc.max_len = o.max_len;
  tc.pad_id = vocab.pad_id();

  const EvalResult res = evaluate(params, cfg, data, tc);
  std::vector<int32_t> labels(data.size());
  for (size_t i = 0; i < data.size(); ++i) labels[i] = data[i].label;

  json j;
  j["n"] = data.size();
  j["test_acc"] = res.acc;
  j["f1"] = f1_score(res.preds, labels, 1);
  const auto a = auroc(res.positive_scores, labels);
  j["auroc"] = a.has_value() ? json(*a) : json(nullptr);
  const std::string text = j.dump(2) + "\n";
  out << text;
  if (!o.output.empty()) {
    fs::path p(o.output);
    if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
    write_text_file(p, text);
  }
  return 0;
}

int cmd_params(const std::string& preset, const std::string& strategy_name,
               const Options& o, std::ostream& out) {
  const ModelConfig cfg = preset_config(preset, o);
  const Strategy strategy = parse_strategy(strategy_name);
  const ParamCounts counts = count_parameters(cfg);

  uint64_t trainable = 0;
  switch (strategy) {
    case Strategy::HeadOnly: trainable = counts.head; break;
    case Strategy::Selective:
      trainable = counts.per_block + counts.final_ln + counts.head;
      break;
    case Strategy::Full: trainable = counts.store_total; break;
  }
  const double fraction =
      static_cast<double>(trainable) / static_cast<double>(counts.backbone_total);

  out << "preset: " << preset << "\n";
  out << "strategy: " << strategy_name << "\n";
  out << "trainable: " << trainable << "\n";
  out << "total: " << counts.backbone_total << "\n";
  out << "fraction: " << std::fixed << std::setprecision(3) << 100.0 * fraction
      << "%\n";
  out << "token_embedding: " << counts.token_embedding << "\n";
  out << "position_embedding: " << counts.position_embedding << "\n";
  out << "per_block: " << counts.per_block << "\n";
  out << "final_ln: " << counts.final_ln << "\n";
  out << "head: " << counts.head << "\n";
  out << "store_total: " << counts.store_total << "\n";
  return 0;
}

int cmd_plotdata(const Options& o, std::ostream& out) {
  if (o.reports.empty()) throw config_error("plot-data: no report files given");
  struct Row {
    MetricsReport r;
  };
  std::vector<MetricsReport> reports;
  for (const auto& path : o.reports) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open report `" + path + "`");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
      reports.push_back(MetricsReport::from_json_string(ss.str()));
    } catch (const std::exception& e) {
      throw data_error("report `" + path + "`: " + e.what());
    }
  }

  std::ostringstream time_tsv, acc_tsv, perf_tsv;
  time_tsv << "strategy\ttotal_train_seconds\tmean_epoch_seconds\n";
  acc_tsv << "strategy\ttrain_acc\tval_acc\ttest_acc\n";
  perf_tsv << "strategy\tf1\tauroc\n";
  for (const auto& r : reports) {
    double total = 0.0;
    for (const auto& e : r.epochs) total += e.epoch_wall_seconds;
    const double mean =
        r.epochs.empty() ? 0.0 : total / static_cast<double>(r.epochs.size());
    time_tsv << r.strategy << '\t' << total << '\t' << mean << '\n';
    const double train_acc = r.epochs.empty() ? 0.0 : r.epochs.back().train_acc;
    const double val_acc = r.epochs.empty() ? 0.0 : r.epochs.back().val_acc;
    acc_tsv << r.strategy << '\t' << train_acc << '\t' << val_acc << '\t'
            << r.test_acc << '\n';
    perf_tsv << r.strategy << '\t' << r.f1 << '\t';
    if (r.auroc.has_value()) perf_tsv << *r.auroc;
    perf_tsv << '\n';
  }

  const fs::path dir = fs::path(o.output_dir) / "plots";
  fs::create_directories(dir);
  write_text_file(dir / "training_time.tsv", time_tsv.str());
  write_text_file(dir / "accuracy.tsv", acc_tsv.str());
  write_text_file(dir / "test_performance.tsv", perf_tsv.str());
  out << time_tsv.str() << "\n" << acc_tsv.str() << "\n" << perf_tsv.str();
  return 0;
}

int cmd_tokenize(const Options& o, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> problems;
  check_path(problems, "vocab", o.vocab);
  check_path(problems, "merges", o.merges);
  if (o.text.empty() && o.decode_ids.empty())
    problems.emplace_back("text", "give --text or --decode");
  require_fields(problems);

  const BpeVocab vocab = load_vocab_checked(o);
  if (!o.text.empty()) {
    const auto ids = encode(o.text, vocab);
    for (size_t i = 0; i < ids.size(); ++i) out << (i ? " " : "") << ids[i];
    out << "\n";
  }
  if (!o.decode_ids.empty()) {
    std::vector<int32_t> ids;
    std::string token;
    std::istringstream is(o.decode_ids);
    while (std::getline(is, token, ',')) {
      std::istringstream ts(trim(token));
      int32_t id;
      ts >> id;
      if (ts.fail())
        throw config_error("tokenize: cannot parse id `" + token + "`");
      ids.push_back(id);
    }
    try {
      out << decode(ids, vocab) << "\n";
    } catch (const std::exception& e) {
      throw data_error(e.what());
    }
  }
  return 0;
}

int cmd_init(const Options& o, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> problems;
  if (o.preset.empty()) problems.emplace_back("preset", "required");
  if (o.output.empty()) problems.emplace_back("output", "required");
  require_fields(problems);

  const ModelConfig cfg = preset_config(o.preset, o);
  const ParameterStore store = init_random_store<float>(cfg, o.seed);
  fs::path p(o.output);
  if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
  save_checkpoint(store, cfg, o.output);
  out << "wrote " << o.output << " (" << count_parameters(cfg).store_total
      << " parameters)\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  try {
    Options o;

    // The config file applies first; explicit flags override it.
    for (size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size())
        o.config_path = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0)
        o.config_path = args[i].substr(9);
    }
    if (o.config_path.empty()) {
      if (const char* env = std::getenv("SELTUNE_CONFIG")) o.config_path = env;
    }
    if (!o.config_path.empty()) apply_config(read_config_file(o.config_path), o);

    CLI::App app{"selective fine-tuning of a GPT-2-style classifier"};
    app.name("seltune");
    app.require_subcommand(1);
    app.add_option("--config", o.config_path,
                   "flat key=value config file (env: SELTUNE_CONFIG)");

    auto add_common = [&](CLI::App* cmd) {
      cmd->add_option("--seed", o.seed, "rng seed");
      cmd->add_option("--output-dir", o.output_dir, "output directory root");
    };
    auto add_tokenizer = [&](CLI::App* cmd) {
      cmd->add_option("--vocab", o.vocab, "vocabulary JSON file");
      cmd->add_option("--merges", o.merges, "merges text file");
    };

    CLI::App* label = app.add_subcommand("label", "rule-label a corpus");
    label->add_option("--input", o.input, "input corpus (.csv/.tsv/.jsonl)");
    label->add_option("--rules", o.rules, "rule set file");
    label->add_option("--output", o.output, "labeled corpus output path");
    add_common(label);

    CLI::App* split = app.add_subcommand("split", "70/15/15 split");
    split->add_option("--input", o.input, "labeled corpus");
    add_common(split);

    CLI::App* trn = app.add_subcommand("train", "fine-tune a checkpoint");
    trn->add_option("--checkpoint", o.checkpoint, "input checkpoint");
    trn->add_option("--preset", o.preset, "gpt2-small or toy (cross-check)");
    trn->add_option("--strategy", o.strategy, "head-only|selective|full");
    trn->add_option("--data", o.data, "single labeled corpus (internal split)");
    trn->add_option("--train", o.train_data, "train split corpus");
    trn->add_option("--val", o.val_data, "validation split corpus");
    trn->add_option("--test", o.test_data, "test split corpus");
    trn->add_option("--epochs", o.epochs, "training epochs");
    trn->add_option("--batch_size", o.batch_size, "mini-batch size");
    trn->add_option("--max_len", o.max_len, "maximum sequence length");
    trn->add_option("--lr", o.lr, "learning rate");
    trn->add_option("--beta1", o.beta1, "AdamW beta1");
    trn->add_option("--beta2", o.beta2, "AdamW beta2");
    trn->add_option("--eps", o.eps, "AdamW epsilon");
    trn->add_option("--weight_decay", o.weight_decay, "decoupled weight decay");
    trn->add_option("--dropout_rate", o.dropout_rate, "dropout rate");
    trn->add_flag("--no-shuffle", [&](int64_t) { o.shuffle = false; },
                  "disable per-epoch shuffling");
    trn->add_option("--run-name", o.run_name,
                    "run directory name (default: timestamp)");
    add_tokenizer(trn);
    add_common(trn);

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--checkpoint", o.checkpoint, "checkpoint to evaluate");
    ev->add_option("--data", o.data, "labeled corpus");
    ev->add_option("--batch_size", o.batch_size, "mini-batch size");
    ev->add_option("--max_len", o.max_len, "maximum sequence length");
    ev->add_option("--output", o.output, "also write metrics JSON here");
    add_tokenizer(ev);
    add_common(ev);

    CLI::App* par = app.add_subcommand("params", "parameter accounting");
    std::string par_preset, par_strategy;
    par->add_option("preset", par_preset, "gpt2-small or toy")->required();
    par->add_option("strategy", par_strategy, "head-only|selective|full")
        ->required();
    par->add_option("--n_classes", o.n_classes, "classification classes");

    CLI::App* plot = app.add_subcommand("plot-data", "tables from reports");
    plot->add_option("reports", o.reports, "report.json files")->required();
    add_common(plot);

    CLI::App* tok = app.add_subcommand("tokenize", "debug encode/decode");
    tok->add_option("--text", o.text, "text to encode");
    tok->add_option("--decode", o.decode_ids, "comma-separated ids to decode");
    add_tokenizer(tok);

    CLI::App* init = app.add_subcommand("init", "write a random checkpoint");
    init->add_option("--preset", o.preset, "gpt2-small or toy");
    init->add_option("--output", o.output, "checkpoint path");
    init->add_option("--n_classes", o.n_classes, "classification classes");
    init->add_option("--vocab_size", o.vocab_size, "override vocabulary size");
    init->add_option("--max_positions", o.max_positions,
                     "override maximum positions");
    init->add_option("--dropout_rate", o.dropout_rate, "dropout rate");
    add_common(init);

    std::vector<std::string> argv_copy(args);
    try {
      std::vector<const char*> argv;
      argv.push_back("seltune");
      for (const auto& a : argv_copy) argv.push_back(a.c_str());
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
      out << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      throw config_error(e.what());
    }

    if (label->parsed()) return cmd_label(o, out);
    if (split->parsed()) return cmd_split(o, out);
    if (trn->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (par->parsed()) return cmd_params(par_preset, par_strategy, o, out);
    if (plot->parsed()) return cmd_plotdata(o, out);
    if (tok->parsed()) return cmd_tokenize(o, out);
    if (init->parsed()) return cmd_init(o, out);
    throw config_error("no subcommand given");
  } catch (const CliError& e) {
    err << "error[" << e.category << "]: " << e.what() << "\n";
    return e.exit_code;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace seltune
