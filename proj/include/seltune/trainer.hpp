#pragma once

// Mini-batch training loop over the frozen/trainable partition, dataset
// splitting, and the per-epoch / final metrics report.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seltune/adamw.hpp"
#include "seltune/model.hpp"
#include "seltune/rng.hpp"
#include "seltune/strategy.hpp"

namespace seltune {

struct TrainConfig {
  int64_t epochs = 10;
  int64_t batch_size = 16;
  int64_t max_len = 512;
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  Strategy strategy = Strategy::Selective;
  uint64_t seed = 0;
  bool shuffle = true;
  int32_t pad_id = 0;  // any valid vocabulary id; padded positions are masked

  void validate() const;
};

// A tokenized, labeled example; ids are the full encoding, truncation to
// max_len happens at batch assembly.
struct Example {
  std::vector<int32_t> ids;
  int32_t label = 0;
};
using Dataset = std::vector<Example>;

struct EpochStats {
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double epoch_wall_seconds = 0.0;
};

struct MetricsReport {
  std::string strategy;
  uint64_t seed = 0;
  std::vector<EpochStats> epochs;
  double test_acc = 0.0;
  double f1 = 0.0;
  std::optional<double> auroc;  // absent for a single-class test split
  uint64_t trainable_count = 0;
  uint64_t total_count = 0;
  double fraction = 0.0;
  int64_t total_steps = 0;

  std::string to_json_string() const;
  static MetricsReport from_json_string(const std::string& text);
  // Flat per-epoch table (TSV) suitable for plotting.
  std::string epoch_table() const;
};

// Seeded uniform shuffle, then contiguous 70/15/15 (floor, floor, remainder).
// Requires at least 10 items.
template <typename T>
void split_70_15_15(const std::vector<T>& items, uint64_t seed,
                    std::vector<T>* train, std::vector<T>* val,
                    std::vector<T>* test) {
  const size_t n = items.size();
  if (n < 10)
    throw std::invalid_argument("split: need at least 10 documents, got " +
                                std::to_string(n));
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const size_t n_train = static_cast<size_t>(0.7 * static_cast<double>(n));
  const size_t n_val = static_cast<size_t>(0.15 * static_cast<double>(n));
  train->clear();
  val->clear();
  test->clear();
  for (size_t i = 0; i < n; ++i) {
    const T& item = items[order[i]];
    if (i < n_train)
      train->push_back(item);
    else if (i < n_train + n_val)
      val->push_back(item);
    else
      test->push_back(item);
  }
}

struct EvalResult {
  double acc = 0.0;
  std::vector<int32_t> preds;
  std::vector<double> positive_scores;  // softmax probability of class 1
};

// Forward-only evaluation over a dataset, batched; no gradients recorded.
EvalResult evaluate(const ParameterStore& params, const ModelConfig& cfg,
                    const Dataset& data, const TrainConfig& tc);

// Fig.-1 loop: per epoch, shuffle (if enabled) then per batch
// zero_grad -> forward -> last token -> classify -> cross-entropy ->
// backward -> step. The strategy must already be applied to the store;
// `partition` is echoed into the report.
MetricsReport train(ParameterStore& params, const ModelConfig& cfg,
                    const ParamPartition& partition, const Dataset& train_set,
                    const Dataset& val_set, const Dataset& test_set,
                    const TrainConfig& tc);

}  // namespace seltune
