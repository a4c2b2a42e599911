#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "seltune/tensor.hpp"

namespace seltune {

// Row-wise argmax; ties break to the lowest class index.
std::vector<int32_t> argmax_rows(const Tensor& logits);

// Mean of indicator(argmax(logits) == label).
double accuracy(const Tensor& logits, const std::vector<int32_t>& labels);

// Positive-class F1 = 2PR/(P+R); 0 by convention when P+R = 0.
double f1_score(const std::vector<int32_t>& preds,
                const std::vector<int32_t>& labels, int32_t positive_class);

// Mann-Whitney AUROC: (wins + 0.5*ties) / (n_pos * n_neg). Labels are 0/1;
// a single-class input has no defined value and returns nullopt.
std::optional<double> auroc(const std::vector<double>& scores,
                            const std::vector<int32_t>& labels);

}  // namespace seltune
