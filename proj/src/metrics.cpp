#include "seltune/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace seltune {

std::vector<int32_t> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2)
    throw std::invalid_argument("argmax_rows: logits must be [NxC]");
  const int64_t n = logits.dim(0), c = logits.dim(1);
  std::vector<int32_t> out(n);
  for (int64_t i = 0; i < n; ++i) {
    const float* row = logits.values().data() + i * c;
    int32_t best = 0;
    for (int64_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = static_cast<int32_t>(j);
    out[i] = best;
  }
  return out;
}

double accuracy(const Tensor& logits, const std::vector<int32_t>& labels) {
  const auto preds = argmax_rows(logits);
  if (preds.size() != labels.size())
    throw std::invalid_argument("accuracy: batch size mismatch");
  if (preds.empty()) throw std::invalid_argument("accuracy: empty batch");
  int64_t hits = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double f1_score(const std::vector<int32_t>& preds,
                const std::vector<int32_t>& labels, int32_t positive_class) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("f1_score: size mismatch");
  int64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == positive_class;
    const bool t = labels[i] == positive_class;
    if (p && t) ++tp;
    else if (p && !t) ++fp;
    else if (!p && t) ++fn;
  }
  const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
  const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::optional<double> auroc(const std::vector<double>& scores,
                            const std::vector<int32_t>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auroc: size mismatch");
  const int64_t n = static_cast<int64_t>(scores.size());
  int64_t n_pos = 0;
  for (int32_t y : labels) n_pos += y != 0 ? 1 : 0;
  const int64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  // Doubled midranks keep everything in integers; U2 = 2*wins + ties exactly.
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return scores[a] < scores[b];
  });
  std::vector<int64_t> rank2(n);
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // 1-based ranks i+1..j+1 share midrank (i+j+2)/2; store twice that.
    for (int64_t k = i; k <= j; ++k) rank2[order[k]] = i + j + 2;
    i = j + 1;
  }
  int64_t u2 = 0;
  for (int64_t k = 0; k < n; ++k)
    if (labels[k] != 0) u2 += rank2[k];
  u2 -= n_pos * (n_pos + 1);
  return static_cast<double>(u2) /
         (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace seltune
