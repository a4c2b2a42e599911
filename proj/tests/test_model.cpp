#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "seltune/metrics.hpp"
#include "seltune/model.hpp"
#include "testutil.hpp"

using namespace seltune;

namespace {

ModelConfig small_wide() {
  ModelConfig cfg = ModelConfig::toy();
  cfg.d_model = 64;
  cfg.n_heads = 4;
  cfg.d_ff = 128;
  cfg.n_layers = 1;
  return cfg;
}

}  // namespace

TEST_CASE("model: output shape contract") {
  const ModelConfig cfg = small_wide();
  ParameterStore params = init_random_store<float>(cfg, 1);
  Rng rng(2);
  EncodedBatch batch = testutil::random_batch(cfg, 2, 7, rng);
  NoGradGuard guard;
  Tensor h = forward_hidden_states(params, batch, cfg);
  CHECK(h.shape() == Shape{2, 7, 64});
}

TEST_CASE("model: causal masking blocks information flow backwards") {
  const ModelConfig cfg = ModelConfig::toy();
  ParameterStore params = init_random_store<float>(cfg, 3);
  Rng rng(4);
  NoGradGuard guard;
  for (int trial = 0; trial < 10; ++trial) {
    EncodedBatch batch = testutil::random_batch(cfg, 2, 9, rng);
    Tensor h1 = forward_hidden_states(params, batch, cfg);
    const int64_t t = 1 + rng.uniform_int(8);
    EncodedBatch perturbed = batch;
    for (int64_t i = 0; i < perturbed.batch_size; ++i)
      perturbed.token_ids[i * perturbed.seq_len + t] = static_cast<int32_t>(
          (perturbed.token_ids[i * perturbed.seq_len + t] + 1) %
          cfg.vocab_size);
    Tensor h2 = forward_hidden_states(params, perturbed, cfg);
    const int64_t d = cfg.d_model;
    for (int64_t i = 0; i < batch.batch_size; ++i)
      for (int64_t p = 0; p < t; ++p)
        for (int64_t j = 0; j < d; ++j)
          CHECK(h1.values()[(i * 9 + p) * d + j] ==
                h2.values()[(i * 9 + p) * d + j]);
  }
}

TEST_CASE(
    "model: extra right padding leaves the selected representation "
    "bit-identical") {
  const ModelConfig cfg = ModelConfig::toy();
  ParameterStore params = init_random_store<float>(cfg, 5);
  Rng rng(6);
  NoGradGuard guard;
  for (int trial = 0; trial < 10; ++trial) {
    EncodedBatch batch = testutil::random_batch(cfg, 3, 8, rng);
    EncodedBatch padded = batch;
    const int64_t extra = 3;
    padded.seq_len = batch.seq_len + extra;
    padded.token_ids.assign(padded.batch_size * padded.seq_len, 0);
    padded.attention_mask.assign(padded.batch_size * padded.seq_len, 0);
    for (int64_t i = 0; i < batch.batch_size; ++i)
      for (int64_t t = 0; t < batch.seq_len; ++t) {
        padded.token_ids[i * padded.seq_len + t] =
            batch.token_ids[i * batch.seq_len + t];
        padded.attention_mask[i * padded.seq_len + t] =
            batch.attention_mask[i * batch.seq_len + t];
      }

    Tensor r1 = last_token_representation(
        forward_hidden_states(params, batch, cfg), batch);
    Tensor r2 = last_token_representation(
        forward_hidden_states(params, padded, cfg), padded);
    CHECK(r1.values() == r2.values());

    Tensor z1 = classify(r1, params);
    Tensor z2 = classify(r2, params);
    CHECK(z1.values() == z2.values());
  }
}

TEST_CASE("model: last_token_representation selection rules") {
  // H with H[i,t,:] = 10*i + t makes the selected source obvious
  const int64_t b = 2, t = 4, d = 3;
  auto h = Tensor::zeros({b, t, d});
  for (int64_t i = 0; i < b; ++i)
    for (int64_t p = 0; p < t; ++p)
      for (int64_t j = 0; j < d; ++j)
        h.values()[(i * t + p) * d + j] = static_cast<float>(10 * i + p);

  EncodedBatch all_real;
  all_real.batch_size = b;
  all_real.seq_len = t;
  all_real.last_index = {3, 3};
  auto r = last_token_representation(h, all_real);
  CHECK(r.values()[0] == 3.0f);
  CHECK(r.values()[d] == 13.0f);

  EncodedBatch two_real;
  two_real.batch_size = b;
  two_real.seq_len = t;
  two_real.last_index = {1, 1};  // mask [1,1,0,0]
  auto r2 = last_token_representation(h, two_real);
  CHECK(r2.values()[0] == 1.0f);
  CHECK(r2.values()[d] == 11.0f);
}

TEST_CASE("model: classify is the affine head map") {
  ParameterStoreT<float> params;
  params.tensors.emplace("head.w", Tensor::zeros({3, 2}));
  params.tensors.emplace("head.b", Tensor::from_values({2}, {0.3f, -0.3f}));
  auto h = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  auto z = classify(h, params);
  for (int64_t i = 0; i < 2; ++i) {
    CHECK(z.values()[i * 2 + 0] == doctest::Approx(0.3f));
    CHECK(z.values()[i * 2 + 1] == doctest::Approx(-0.3f));
  }

  ParameterStoreT<float> ident;
  ident.tensors.emplace("head.w", Tensor::from_values({2, 2}, {1, 0, 0, 1}));
  ident.tensors.emplace("head.b", Tensor::zeros({2}));
  auto h2 = Tensor::from_values({1, 2}, {1, 2});
  CHECK(classify(h2, ident).values() == std::vector<float>{1, 2});
}

TEST_CASE("model: head gradients match finite differences on a toy batch") {
  const ModelConfig cfg = ModelConfig::toy();
  auto params = testutil::to_double(init_random_store<float>(cfg, 7));
  for (auto& [name, t] : params.tensors)
    t.set_requires_grad(name.rfind("head.", 0) == 0);
  Rng rng(8);
  EncodedBatch batch = testutil::random_batch(cfg, 3, 6, rng);

  auto loss_value = [&]() {
    NoGradGuardT<double> guard;
    auto z = forward_logits(params, batch, cfg);
    return cross_entropy(z, batch.labels).item();
  };
  auto z = forward_logits(params, batch, cfg);
  backward(cross_entropy(z, batch.labels));

  for (const char* name : {"head.w", "head.b"}) {
    auto& p = params.at(name);
    auto numeric = testutil::finite_diff(p, loss_value, 1e-5);
    CHECK(testutil::max_rel_error(p.grad(), numeric, 1e-9) < 1e-3);
  }
}

TEST_CASE("model: rejects sequences beyond max_positions") {
  const ModelConfig cfg = ModelConfig::toy();  // max_positions 64
  ParameterStore params = init_random_store<float>(cfg, 9);
  Rng rng(10);
  EncodedBatch batch = testutil::random_batch(cfg, 1, 65, rng);
  NoGradGuard guard;
  CHECK_THROWS_AS(forward_hidden_states(params, batch, cfg),
                  std::invalid_argument);
}

TEST_CASE("model: init_head is seeded, zero-bias, zero-mean") {
  const ModelConfig cfg = ModelConfig::gpt2_small();
  auto [w1, b1] = init_head<float>(cfg, 42);
  auto [w2, b2] = init_head<float>(cfg, 42);
  CHECK(w1.values() == w2.values());
  for (float v : b1.values()) CHECK(v == 0.0f);

  auto [w3, b3] = init_head<float>(cfg, 43);
  CHECK(w1.values() != w3.values());

  double mean = 0.0;
  for (float v : w1.values()) mean += v;
  mean /= static_cast<double>(w1.numel());
  const double bound = 3.0 * 0.02 / std::sqrt(static_cast<double>(w1.numel()));
  CHECK(std::fabs(mean) < bound);
}

TEST_CASE("model: forward deterministic with dropout 0") {
  const ModelConfig cfg = ModelConfig::toy();
  ParameterStore params = init_random_store<float>(cfg, 11);
  Rng rng(12);
  EncodedBatch batch = testutil::random_batch(cfg, 2, 10, rng);
  NoGradGuard guard;
  Tensor a = forward_hidden_states(params, batch, cfg);
  Tensor b = forward_hidden_states(params, batch, cfg);
  CHECK(a.values() == b.values());
}

TEST_CASE("model: dropout needs an rng and perturbs activations") {
  ModelConfig cfg = ModelConfig::toy();
  cfg.dropout_rate = 0.5;
  ParameterStore params = init_random_store<float>(cfg, 13);
  Rng rng(14);
  EncodedBatch batch = testutil::random_batch(cfg, 2, 6, rng);
  NoGradGuard guard;
  CHECK_THROWS_AS(forward_hidden_states(params, batch, cfg),
                  std::invalid_argument);
  Rng dropout_rng(15);
  Tensor dropped = forward_hidden_states(params, batch, cfg, &dropout_rng);
  cfg.dropout_rate = 0.0;
  Tensor clean = forward_hidden_states(params, batch, cfg);
  CHECK(dropped.values() != clean.values());
}

// Self-generated golden: regenerate with SELTUNE_REGEN_GOLDEN=1 after the
// gradient checks pass.
TEST_CASE("model: toy forward matches the stored golden activations") {
  const ModelConfig cfg = ModelConfig::toy();
  ParameterStore params = init_random_store<float>(cfg, 1234);
  EncodedBatch batch;
  batch.batch_size = 2;
  batch.seq_len = 5;
  batch.token_ids = {11, 250, 3, 77, 191, 8, 0, 255, 100, 100};
  batch.attention_mask = {1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
  batch.labels = {0, 1};
  batch.last_index = {4, 2};
  NoGradGuard guard;
  Tensor h = forward_hidden_states(params, batch, cfg);

  const std::string path = testutil::fixture_path("toy_forward_golden.txt");
  if (std::getenv("SELTUNE_REGEN_GOLDEN")) {
    std::ofstream out(path);
    out.precision(10);
    for (float v : h.values()) out << v << "\n";
    MESSAGE("regenerated ", path);
    return;
  }
  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), "golden missing; run with SELTUNE_REGEN_GOLDEN=1");
  for (float v : h.values()) {
    double expected;
    in >> expected;
    CHECK(v == doctest::Approx(expected).epsilon(1e-5));
  }
}
