#pragma once

// The theta = {frozen, trainable} partition for the three fine-tuning
// strategies, exact parameter accounting, and the per-step cost model.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "seltune/model.hpp"

namespace seltune {

enum class Strategy { HeadOnly, Selective, Full };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::HeadOnly: return "head-only";
    case Strategy::Selective: return "selective";
    case Strategy::Full: return "full";
  }
  throw std::logic_error("unreachable strategy value");
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "head-only") return Strategy::HeadOnly;
  if (s == "selective") return Strategy::Selective;
  if (s == "full") return Strategy::Full;
  throw std::invalid_argument("unknown strategy `" + s +
                              "` (expected head-only, selective or full)");
}

struct ParamPartition {
  std::vector<std::string> trainable_names;
  std::vector<std::string> frozen_names;
  uint64_t trainable_count = 0;
  // Pretrained model parameters: embeddings + blocks + final LN. The
  // task-added head is counted in trainable_count but not here, which is the
  // convention behind the reported 124,439,808 total for GPT-2 small.
  uint64_t total_count = 0;
  double trainable_fraction = 0.0;
};

struct ParamCounts {
  uint64_t token_embedding = 0;
  uint64_t position_embedding = 0;
  uint64_t per_block = 0;
  uint64_t final_ln = 0;
  uint64_t head = 0;
  uint64_t backbone_total = 0;  // embeddings + n_layers * per_block + final_ln
  uint64_t store_total = 0;     // backbone_total + head
};

// Closed-form group counts from the architecture hyperparameters.
ParamCounts count_parameters(const ModelConfig& cfg);

struct StepCost {
  double forward_flops = 0;
  double backward_flops = 0;
  double forward_attention_flops = 0;  // the O(T^2 d_model) share
  double forward_mlp_flops = 0;        // the O(T d_model d_ff) share
};

// Symbolic per-sequence flop estimate; backward counts only layers on
// trainable paths (full: all blocks, selective: one, head-only: none).
StepCost step_cost_estimate(int64_t seq_len, const ModelConfig& cfg,
                            Strategy strategy);

namespace detail {
inline bool in_trainable_set(const std::string& name, Strategy strategy,
                             const ModelConfig& cfg) {
  switch (strategy) {
    case Strategy::Full:
      return true;
    case Strategy::HeadOnly:
      return name.rfind("head.", 0) == 0;
    case Strategy::Selective: {
      const std::string last_block =
          "block" + std::to_string(cfg.n_layers - 1) + ".";
      return name.rfind("head.", 0) == 0 || name.rfind("final_ln.", 0) == 0 ||
             name.rfind(last_block, 0) == 0;
    }
  }
  return false;
}
}  // namespace detail

// Sets the per-tensor trainable flags on the store and returns the partition
// summary. Frozen tensors lose any gradient accumulator they had.
template <typename S>
ParamPartition apply_strategy(ParameterStoreT<S>& store, Strategy strategy,
                              const ModelConfig& cfg) {
  ParamPartition part;
  uint64_t store_total = 0;
  uint64_t head_count = 0;
  for (auto& [name, tensor] : store.tensors) {
    const uint64_t n = static_cast<uint64_t>(tensor.numel());
    store_total += n;
    if (name.rfind("head.", 0) == 0) head_count += n;
    const bool trainable = detail::in_trainable_set(name, strategy, cfg);
    tensor.set_requires_grad(trainable);
    if (trainable) {
      part.trainable_names.push_back(name);
      part.trainable_count += n;
    } else {
      part.frozen_names.push_back(name);
    }
  }
  part.total_count = store_total - head_count;
  part.trainable_fraction =
      part.total_count == 0
          ? 0.0
          : static_cast<double>(part.trainable_count) /
                static_cast<double>(part.total_count);
  return part;
}

}  // namespace seltune
