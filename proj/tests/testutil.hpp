#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "seltune/model.hpp"
#include "seltune/tensor.hpp"

namespace testutil {

inline std::string fixture_path(const std::string& name) {
  return std::string(SELTUNE_FIXTURE_DIR) + "/" + name;
}

inline std::string rules_path() { return SELTUNE_RULES_FILE; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("testutil: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Central finite differences of loss_fn wrt every element of param.
// loss_fn must evaluate the loss without recording (wrap in NoGradGuard).
template <typename S, typename F>
std::vector<S> finite_diff(seltune::TensorT<S>& param, F loss_fn, S step) {
  std::vector<S> grad(param.numel());
  for (int64_t i = 0; i < param.numel(); ++i) {
    const S orig = param.values()[i];
    param.values()[i] = orig + step;
    const S up = loss_fn();
    param.values()[i] = orig - step;
    const S down = loss_fn();
    param.values()[i] = orig;
    grad[i] = (up - down) / (S(2) * step);
  }
  return grad;
}

// Worst elementwise relative error with a denominator floor (guards the
// comparison where both sides vanish).
template <typename S>
double max_rel_error(const std::vector<S>& analytic,
                     const std::vector<S>& numeric, double floor) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double a = static_cast<double>(analytic[i]);
    const double n = static_cast<double>(numeric[i]);
    const double denom = std::max({std::fabs(a), std::fabs(n), floor});
    worst = std::max(worst, std::fabs(a - n) / denom);
  }
  return worst;
}

// Mixed-tolerance gradient comparison for f32 checks, where the finite
// difference quotient itself carries single-precision noise.
template <typename S>
bool grads_close(const std::vector<S>& analytic, const std::vector<S>& numeric,
                 double rtol, double atol) {
  if (analytic.size() != numeric.size()) return false;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double a = static_cast<double>(analytic[i]);
    const double n = static_cast<double>(numeric[i]);
    if (std::fabs(a - n) > rtol * std::max(std::fabs(a), std::fabs(n)) + atol)
      return false;
  }
  return true;
}

inline seltune::ParameterStoreT<double> to_double(
    const seltune::ParameterStore& store) {
  seltune::ParameterStoreT<double> out;
  for (const auto& [name, t] : store.tensors) {
    std::vector<double> values(t.values().begin(), t.values().end());
    out.tensors.emplace(name,
                        seltune::TensorT<double>::from_values(
                            t.shape(), std::move(values), t.requires_grad()));
  }
  return out;
}

// A valid random batch over a config's vocabulary: every row gets a real
// length in [1, seq_len] with right padding.
inline seltune::EncodedBatch random_batch(const seltune::ModelConfig& cfg,
                                          int64_t batch, int64_t seq_len,
                                          seltune::Rng& rng) {
  seltune::EncodedBatch b;
  b.batch_size = batch;
  b.seq_len = seq_len;
  b.token_ids.assign(batch * seq_len, 0);
  b.attention_mask.assign(batch * seq_len, 0);
  b.labels.resize(batch);
  b.last_index.resize(batch);
  for (int64_t i = 0; i < batch; ++i) {
    const int64_t len = 1 + rng.uniform_int(seq_len);
    for (int64_t t = 0; t < seq_len; ++t) {
      b.token_ids[i * seq_len + t] =
          static_cast<int32_t>(rng.uniform_int(cfg.vocab_size));
      b.attention_mask[i * seq_len + t] = t < len ? 1 : 0;
    }
    b.last_index[i] = static_cast<int32_t>(len - 1);
    b.labels[i] = static_cast<int32_t>(rng.uniform_int(cfg.n_classes));
  }
  return b;
}

}  // namespace testutil
