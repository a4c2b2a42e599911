#pragma once

// AdamW with decoupled weight decay, applied exclusively to the trainable
// partition. Frozen tensors are never read or written.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "seltune/model.hpp"

namespace seltune {

struct AdamWConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  // Moment state is created for the tensors that are trainable at
  // construction time; apply the strategy first.
  AdamW(ParameterStore& store, AdamWConfig cfg);

  // theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta).
  // A present-but-zero gradient is a legitimate null update; an absent
  // accumulator on a trainable tensor is an error (broken backward path).
  void step();

  // Zeroes (allocating if needed) the gradient accumulator of every trainable
  // tensor; frozen tensors are untouched.
  void zero_grad();

  int64_t step_count() const { return t_; }

 private:
  ParameterStore* store_;
  AdamWConfig cfg_;
  std::map<std::string, std::vector<float>> m_;
  std::map<std::string, std::vector<float>> v_;
  int64_t t_ = 0;
};

// Free-standing form of the gradient reset, usable without optimizer state.
template <typename S>
void zero_grad(ParameterStoreT<S>& store) {
  for (auto& [name, tensor] : store.tensors)
    if (tensor.requires_grad()) tensor.zero_grad();
}

}  // namespace seltune
