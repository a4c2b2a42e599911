#include "seltune/adamw.hpp"

#include <cmath>
#include <stdexcept>

namespace seltune {

AdamW::AdamW(ParameterStore& store, AdamWConfig cfg)
    : store_(&store), cfg_(cfg) {
  for (const auto& [name, tensor] : store.tensors) {
    if (!tensor.requires_grad()) continue;
    m_.emplace(name, std::vector<float>(tensor.numel(), 0.0f));
    v_.emplace(name, std::vector<float>(tensor.numel(), 0.0f));
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, m] : m_) {
    auto& tensor = store_->at(name);
    if (!tensor.requires_grad())
      throw std::runtime_error("adamw: tensor `" + name +
                               "` was frozen after optimizer construction");
    if (!tensor.has_grad())
      throw std::runtime_error(
          "adamw: trainable tensor `" + name +
          "` has no gradient accumulator; backward path is broken");
    auto& v = v_.at(name);
    const auto& g = tensor.grad();
    auto& theta = tensor.values();
    const size_t n = theta.size();
    for (size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      const double update =
          m_hat / (std::sqrt(v_hat) + cfg_.eps) + cfg_.weight_decay * theta[i];
      theta[i] = static_cast<float>(theta[i] - cfg_.lr * update);
    }
  }
}

void AdamW::zero_grad() { seltune::zero_grad(*store_); }

}  // namespace seltune
