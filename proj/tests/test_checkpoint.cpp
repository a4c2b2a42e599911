#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "seltune/checkpoint.hpp"
#include "testutil.hpp"

using namespace seltune;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("seltune_ckpt_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

}  // namespace

TEST_CASE("checkpoint: save then load round-trips bit-identically") {
  TempDir tmp;
  const ModelConfig cfg = ModelConfig::toy();
  ParameterStore store = init_random_store<float>(cfg, 21);
  const std::string path = tmp.file("toy.ckpt");
  save_checkpoint(store, cfg, path);

  ParameterStore loaded = load_checkpoint(path, cfg);
  CHECK(loaded.tensors.size() == store.tensors.size());
  for (const auto& [name, tensor] : store.tensors) {
    REQUIRE(loaded.has(name));
    CHECK(loaded.at(name).shape() == tensor.shape());
    CHECK(loaded.at(name).values() == tensor.values());
    CHECK(loaded.at(name).requires_grad());  // all trainable until a strategy
  }
}

TEST_CASE("checkpoint: wrong d_model is reported against token_embedding") {
  TempDir tmp;
  const ModelConfig cfg = ModelConfig::toy();  // d_model 16
  ParameterStore store = init_random_store<float>(cfg, 22);
  const std::string path = tmp.file("toy.ckpt");
  save_checkpoint(store, cfg, path);

  ModelConfig wide = cfg;
  wide.d_model = 64;
  wide.n_heads = 4;
  bool threw = false;
  try {
    load_checkpoint(path, wide);
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("token_embedding") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("checkpoint: missing tensor is named") {
  TempDir tmp;
  ModelConfig one = ModelConfig::toy();
  one.n_layers = 1;
  ParameterStore store = init_random_store<float>(one, 23);
  const std::string path = tmp.file("one.ckpt");
  save_checkpoint(store, one, path);

  ModelConfig two = ModelConfig::toy();  // expects block1.*
  bool threw = false;
  try {
    load_checkpoint(path, two);
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("block1.") != std::string::npos);
    CHECK(std::string(e.what()).find("missing") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("checkpoint: empty path is rejected") {
  const ModelConfig cfg = ModelConfig::toy();
  ParameterStore store = init_random_store<float>(cfg, 24);
  CHECK_THROWS_AS(save_checkpoint(store, cfg, ""), std::invalid_argument);
}

TEST_CASE("checkpoint: deterministic bytes, overwrite, idempotent re-serialization") {
  TempDir tmp;
  const ModelConfig cfg = ModelConfig::toy();
  ParameterStore store = init_random_store<float>(cfg, 25);
  const std::string a = tmp.file("a.ckpt");
  const std::string b = tmp.file("b.ckpt");
  save_checkpoint(store, cfg, a);
  save_checkpoint(store, cfg, b);
  CHECK(testutil::read_file(a) == testutil::read_file(b));

  // overwrite in place: byte-identical for identical state
  save_checkpoint(store, cfg, a);
  CHECK(testutil::read_file(a) == testutil::read_file(b));

  // load then save again: byte-identical to the original file
  ParameterStore loaded = load_checkpoint(a, cfg);
  const std::string c = tmp.file("c.ckpt");
  save_checkpoint(loaded, cfg, c);
  CHECK(testutil::read_file(a) == testutil::read_file(c));
}

TEST_CASE("checkpoint: corrupted magic and version are rejected") {
  TempDir tmp;
  const ModelConfig cfg = ModelConfig::toy();
  ParameterStore store = init_random_store<float>(cfg, 26);
  const std::string path = tmp.file("toy.ckpt");
  save_checkpoint(store, cfg, path);
  std::string bytes = testutil::read_file(path);

  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream out(tmp.file("bad_magic.ckpt"), std::ios::binary);
    out << bad;
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(tmp.file("bad_magic.ckpt"), cfg),
                       doctest::Contains("magic"), std::runtime_error);

  {
    std::string bad = bytes;
    bad[8] = 9;  // version field
    std::ofstream out(tmp.file("bad_version.ckpt"), std::ios::binary);
    out << bad;
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(tmp.file("bad_version.ckpt"), cfg),
                       doctest::Contains("version"), std::runtime_error);

  {
    std::string bad = bytes.substr(0, bytes.size() - 16);  // truncated data
    std::ofstream out(tmp.file("truncated.ckpt"), std::ios::binary);
    out << bad;
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.file("truncated.ckpt"), cfg),
                  std::runtime_error);
}

TEST_CASE("checkpoint: embedded config reads back") {
  TempDir tmp;
  ModelConfig cfg = ModelConfig::toy(3);
  cfg.layer_norm_eps = 2e-5;
  ParameterStore store = init_random_store<float>(cfg, 27);
  const std::string path = tmp.file("toy.ckpt");
  save_checkpoint(store, cfg, path);
  const ModelConfig back = read_checkpoint_config(path);
  CHECK(back.vocab_size == cfg.vocab_size);
  CHECK(back.n_layers == cfg.n_layers);
  CHECK(back.d_model == cfg.d_model);
  CHECK(back.n_classes == 3);
  CHECK(back.layer_norm_eps == doctest::Approx(2e-5));
}
