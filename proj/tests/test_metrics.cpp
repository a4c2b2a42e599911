#include "doctest.h"
#include "seltune/metrics.hpp"
#include "seltune/rng.hpp"

using namespace seltune;

namespace {

// O(n_pos * n_neg) pair count, the oracle auroc() is checked against.
std::optional<double> auroc_brute(const std::vector<double>& scores,
                                  const std::vector<int32_t>& labels) {
  int64_t wins2 = 0, n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0) ++n_pos;
    else ++n_neg;
  }
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) wins2 += 2;
      else if (scores[i] == scores[j]) wins2 += 1;
    }
  }
  return static_cast<double>(wins2) /
         (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace

TEST_CASE("accuracy: all correct, all wrong, tie-break to lowest index") {
  auto logits = Tensor::from_values({3, 2}, {2, 1, 0, 3, 1, 1});
  CHECK(accuracy(logits, {0, 1, 1}) == doctest::Approx(2.0 / 3.0));
  CHECK(accuracy(logits, {0, 1, 0}) == doctest::Approx(1.0));
  CHECK(accuracy(logits, {1, 0, 1}) == doctest::Approx(0.0));
}

TEST_CASE("accuracy: invariant under positive rescaling of logits") {
  Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    auto z = Tensor::randn({6, 3}, rng, 2.0f);
    std::vector<int32_t> labels;
    for (int i = 0; i < 6; ++i)
      labels.push_back(static_cast<int32_t>(rng.uniform_int(3)));
    auto scaled = Tensor::zeros({6, 3});
    const float k = 0.5f + static_cast<float>(rng.uniform()) * 4.0f;
    for (int64_t i = 0; i < z.numel(); ++i)
      scaled.values()[i] = z.values()[i] * k;
    CHECK(accuracy(z, labels) == accuracy(scaled, labels));
  }
}

TEST_CASE("f1: perfect, analytic, and degenerate cases") {
  CHECK(f1_score({1, 0, 1, 0}, {1, 0, 1, 0}, 1) == doctest::Approx(1.0));
  // TP=2, FP=1, FN=1 -> P=R=2/3 -> F1=2/3
  CHECK(f1_score({1, 1, 1, 0, 0}, {1, 1, 0, 1, 0}, 1) ==
        doctest::Approx(2.0 / 3.0));
  // no predicted positives and no true positives
  CHECK(f1_score({0, 0}, {0, 0}, 1) == doctest::Approx(0.0));
}

TEST_CASE("auroc: separated, all-ties, and the worked four-pair case") {
  CHECK(*auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
  CHECK(*auroc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == doctest::Approx(0.5));
  CHECK(*auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
}

TEST_CASE("auroc: single-class input reports absent") {
  CHECK_FALSE(auroc({0.1, 0.9}, {1, 1}).has_value());
  CHECK_FALSE(auroc({0.1, 0.9}, {0, 0}).has_value());
}

TEST_CASE("auroc: equals brute-force pair counting exactly") {
  Rng rng(62);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t n = 2 + rng.uniform_int(199);
    std::vector<double> scores(n);
    std::vector<int32_t> labels(n);
    for (int64_t i = 0; i < n; ++i) {
      // quantized scores force plenty of ties
      scores[i] = static_cast<double>(rng.uniform_int(12)) / 11.0;
      labels[i] = static_cast<int32_t>(rng.uniform_int(2));
    }
    const auto fast = auroc(scores, labels);
    const auto brute = auroc_brute(scores, labels);
    CHECK(fast.has_value() == brute.has_value());
    if (fast && brute) CHECK(*fast == *brute);  // exact equality
  }
}
