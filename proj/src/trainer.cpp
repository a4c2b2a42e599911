#include "seltune/trainer.hpp"

#include <chrono>
#include <cmath>

#include "json.hpp"
#include "seltune/metrics.hpp"

namespace seltune {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1)
    throw std::invalid_argument("train config: batch_size must be >= 1");
  if (max_len < 1)
    throw std::invalid_argument("train config: max_len must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr))
    throw std::invalid_argument("train config: lr must be finite and >= 0");
}

namespace {

// Rows truncated to max_len and right-padded to the longest row in the
// batch; padding invariance of the model makes this equivalent to padding
// everything to max_len.
EncodedBatch make_batch(const Dataset& data, const std::vector<size_t>& order,
                        size_t begin, size_t end, const TrainConfig& tc) {
  EncodedBatch b;
  b.batch_size = static_cast<int64_t>(end - begin);
  int64_t t = 1;
  for (size_t i = begin; i < end; ++i) {
    const int64_t len = std::min<int64_t>(
        static_cast<int64_t>(data[order[i]].ids.size()), tc.max_len);
    t = std::max(t, len);
  }
  b.seq_len = t;
  b.token_ids.assign(b.batch_size * t, tc.pad_id);
  b.attention_mask.assign(b.batch_size * t, 0);
  b.labels.resize(b.batch_size);
  b.last_index.resize(b.batch_size);
  for (size_t i = begin; i < end; ++i) {
    const Example& ex = data[order[i]];
    const int64_t row = static_cast<int64_t>(i - begin);
    int64_t len = std::min<int64_t>(static_cast<int64_t>(ex.ids.size()),
                                    tc.max_len);
    if (len == 0) len = 1;  // degenerate row: keep one (pad) token real
    for (int64_t j = 0; j < len; ++j) {
      b.token_ids[row * t + j] =
          j < static_cast<int64_t>(ex.ids.size()) ? ex.ids[j] : tc.pad_id;
      b.attention_mask[row * t + j] = 1;
    }
    b.labels[row] = ex.label;
    b.last_index[row] = static_cast<int32_t>(len - 1);
  }
  return b;
}

}  // namespace

EvalResult evaluate(const ParameterStore& params, const ModelConfig& cfg,
                    const Dataset& data, const TrainConfig& tc) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty split");
  NoGradGuard guard;
  EvalResult out;
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  int64_t hits = 0;
  for (size_t begin = 0; begin < data.size();
       begin += static_cast<size_t>(tc.batch_size)) {
    const size_t end =
        std::min(data.size(), begin + static_cast<size_t>(tc.batch_size));
    EncodedBatch batch = make_batch(data, order, begin, end, tc);
    Tensor logits = forward_logits(params, batch, cfg);
    Tensor probs = softmax(logits);
    const auto preds = argmax_rows(logits);
    for (size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == batch.labels[i]) ++hits;
      out.preds.push_back(preds[i]);
      // probability of the positive class (index 1) when binary
      const int64_t c = logits.dim(1);
      out.positive_scores.push_back(
          c > 1 ? static_cast<double>(
                      probs.values()[static_cast<int64_t>(i) * c + 1])
                : 1.0);
    }
  }
  out.acc = static_cast<double>(hits) / static_cast<double>(data.size());
  return out;
}

MetricsReport train(ParameterStore& params, const ModelConfig& cfg,
                    const ParamPartition& partition, const Dataset& train_set,
                    const Dataset& val_set, const Dataset& test_set,
                    const TrainConfig& tc) {
  tc.validate();
  if (train_set.empty() || val_set.empty() || test_set.empty())
    throw std::invalid_argument("train: empty split");

  AdamWConfig oc;
  oc.lr = tc.lr;
  oc.beta1 = tc.beta1;
  oc.beta2 = tc.beta2;
  oc.eps = tc.eps;
  oc.weight_decay = tc.weight_decay;
  AdamW opt(params, oc);

  Rng rng(tc.seed);
  Rng dropout_rng(tc.seed ^ 0xd1b54a32d192ed03ULL);

  MetricsReport report;
  report.strategy = to_string(tc.strategy);
  report.seed = tc.seed;
  report.trainable_count = partition.trainable_count;
  report.total_count = partition.total_count;
  report.fraction = partition.trainable_fraction;

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int64_t epoch = 0; epoch < tc.epochs; ++epoch) {
    if (tc.shuffle) rng.shuffle(order);
    double loss_sum = 0.0;
    int64_t hits = 0;
    int64_t batch_no = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (size_t begin = 0; begin < train_set.size();
         begin += static_cast<size_t>(tc.batch_size), ++batch_no) {
      const size_t end = std::min(train_set.size(),
                                  begin + static_cast<size_t>(tc.batch_size));
      EncodedBatch batch = make_batch(train_set, order, begin, end, tc);
      Tape::current().clear();
      opt.zero_grad();
      Tensor logits = forward_logits(
          params, batch, cfg, cfg.dropout_rate > 0.0 ? &dropout_rng : nullptr);
      Tensor loss = cross_entropy(logits, batch.labels);
      const double loss_val = static_cast<double>(loss.item());
      if (!std::isfinite(loss_val))
        throw std::runtime_error("train: non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " +
                                 std::to_string(batch_no));
      backward(loss);
      opt.step();
      loss_sum += loss_val * static_cast<double>(end - begin);
      const auto preds = argmax_rows(logits);
      for (size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == batch.labels[i]) ++hits;
    }
    const auto t1 = std::chrono::steady_clock::now();

    EpochStats es;
    es.train_loss = loss_sum / static_cast<double>(train_set.size());
    es.train_acc =
        static_cast<double>(hits) / static_cast<double>(train_set.size());
    es.val_acc = evaluate(params, cfg, val_set, tc).acc;
    es.epoch_wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    report.epochs.push_back(es);
  }

  EvalResult test = evaluate(params, cfg, test_set, tc);
  report.test_acc = test.acc;
  std::vector<int32_t> test_labels(test_set.size());
  for (size_t i = 0; i < test_set.size(); ++i) test_labels[i] = test_set[i].label;
  report.f1 = f1_score(test.preds, test_labels, 1);
  report.auroc = auroc(test.positive_scores, test_labels);
  report.total_steps = opt.step_count();
  return report;
}

std::string MetricsReport::to_json_string() const {
  json j;
  j["strategy"] = strategy;
  j["seed"] = seed;
  json eps = json::array();
  for (const auto& e : epochs)
    eps.push_back(json{{"train_loss", e.train_loss},
                       {"train_acc", e.train_acc},
                       {"val_acc", e.val_acc},
                       {"epoch_wall_seconds", e.epoch_wall_seconds}});
  j["epochs"] = eps;
  j["final"] = json{{"test_acc", test_acc}, {"f1", f1}};
  if (auroc.has_value())
    j["final"]["auroc"] = *auroc;
  else
    j["final"]["auroc"] = nullptr;
  j["partition"] = json{{"trainable_count", trainable_count},
                        {"total_count", total_count},
                        {"fraction", fraction}};
  j["total_steps"] = total_steps;
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json_string(const std::string& text) {
  const json j = json::parse(text);
  MetricsReport r;
  r.strategy = j.at("strategy").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  for (const auto& e : j.at("epochs")) {
    EpochStats es;
    es.train_loss = e.at("train_loss").get<double>();
    es.train_acc = e.at("train_acc").get<double>();
    es.val_acc = e.at("val_acc").get<double>();
    es.epoch_wall_seconds = e.at("epoch_wall_seconds").get<double>();
    r.epochs.push_back(es);
  }
  r.test_acc = j.at("final").at("test_acc").get<double>();
  r.f1 = j.at("final").at("f1").get<double>();
  if (!j.at("final").at("auroc").is_null())
    r.auroc = j.at("final").at("auroc").get<double>();
  r.trainable_count = j.at("partition").at("trainable_count").get<uint64_t>();
  r.total_count = j.at("partition").at("total_count").get<uint64_t>();
  r.fraction = j.at("partition").at("fraction").get<double>();
  r.total_steps = j.at("total_steps").get<int64_t>();
  return r;
}

std::string MetricsReport::epoch_table() const {
  std::ostringstream os;
  os << "epoch\ttrain_loss\ttrain_acc\tval_acc\tepoch_wall_seconds\n";
  for (size_t i = 0; i < epochs.size(); ++i) {
    const auto& e = epochs[i];
    os << (i + 1) << '\t' << e.train_loss << '\t' << e.train_acc << '\t'
       << e.val_acc << '\t' << e.epoch_wall_seconds << '\n';
  }
  return os.str();
}

}  // namespace seltune
