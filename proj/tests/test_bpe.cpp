#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "seltune/bpe.hpp"
#include "seltune/rng.hpp"
#include "testutil.hpp"

using namespace seltune;
using nlohmann::json;

namespace {

BpeVocab mini_vocab() {
  return BpeVocab::load(testutil::fixture_path("mini_vocab.json"),
                        testutil::fixture_path("mini_merges.txt"));
}

json golden() {
  return json::parse(
      testutil::read_file(testutil::fixture_path("bpe_golden.json")));
}

// Random UTF-8 out of a few scripts plus whitespace/punctuation.
std::string random_utf8(Rng& rng) {
  static const std::vector<std::string> pool = {
      "a", "b", "Z", "0", "9", " ", "  ", "\n", "\t", ".", ",", "'s", "'ll",
      "é", "ü", "中", "文", "😀", "|", "<", ">", "-", "x"};
  std::string s;
  const int64_t n = rng.uniform_int(20);
  for (int64_t i = 0; i < n; ++i)
    s += pool[static_cast<size_t>(
        rng.uniform_int(static_cast<int64_t>(pool.size())))];
  return s;
}

}  // namespace

TEST_CASE("bpe: mini vocabulary loads and validates") {
  const BpeVocab v = mini_vocab();
  CHECK(v.size() == 420);
  CHECK(v.end_of_text_id() == v.size() - 1);
  CHECK(v.pad_id() == v.end_of_text_id());
}

TEST_CASE("bpe: empty input encodes to nothing") {
  const BpeVocab v = mini_vocab();
  CHECK(encode("", v).empty());
}

TEST_CASE("bpe: golden encodings from the reference implementation") {
  const BpeVocab v = mini_vocab();
  for (const auto& entry : golden()["goldens"]) {
    const std::string text = entry["text"].get<std::string>();
    const auto expected = entry["ids"].get<std::vector<int32_t>>();
    CHECK_MESSAGE(encode(text, v) == expected, "text: ", text);
    CHECK(decode(expected, v) == text);
  }
}

TEST_CASE("bpe: round-trip identity on random strings") {
  const BpeVocab v = mini_vocab();
  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    const std::string s = random_utf8(rng);
    CHECK(decode(encode(s, v), v) == s);
  }
  // raw bytes, including invalid UTF-8, must round-trip too
  for (int trial = 0; trial < 30; ++trial) {
    std::string s;
    const int64_t n = rng.uniform_int(24);
    for (int64_t i = 0; i < n; ++i)
      s += static_cast<char>(rng.uniform_int(256));
    CHECK(decode(encode(s, v), v) == s);
  }
}

TEST_CASE("bpe: encode is deterministic and independent of batch composition") {
  const BpeVocab v = mini_vocab();
  const std::string text = "pleural effusion with edema";
  const auto alone = encode(text, v);
  CHECK(encode(text, v) == alone);
  const auto batch =
      encode_batch({"other report", text, "third one"}, {0, 1, 0}, 16, v);
  std::vector<int32_t> row(
      batch.token_ids.begin() + 16,
      batch.token_ids.begin() + 16 + batch.last_index[1] + 1);
  std::vector<int32_t> expect = alone;
  expect.resize(std::min<size_t>(expect.size(), 16));
  CHECK(row == expect);
}

TEST_CASE("bpe: batch shapes, masks and last_index per the contract") {
  const BpeVocab v = mini_vocab();
  // single-token keyword makes lengths exact: 3 and 5 tokens
  const std::string three = "pneumonia pneumonia pneumonia";
  const std::string five = "pneumonia pneumonia pneumonia pneumonia pneumonia";
  REQUIRE(encode(three, v).size() == 3);
  REQUIRE(encode(five, v).size() == 5);

  const auto b = encode_batch({three, five}, {0, 1}, 4, v);
  CHECK(b.batch_size == 2);
  CHECK(b.seq_len == 4);
  CHECK(std::vector<uint8_t>(b.attention_mask.begin(),
                             b.attention_mask.begin() + 4) ==
        std::vector<uint8_t>{1, 1, 1, 0});
  CHECK(std::vector<uint8_t>(b.attention_mask.begin() + 4,
                             b.attention_mask.end()) ==
        std::vector<uint8_t>{1, 1, 1, 1});
  CHECK(b.last_index == std::vector<int32_t>{2, 3});
  CHECK(b.token_ids[3] == v.pad_id());
}

TEST_CASE("bpe: truncation keeps the head") {
  const BpeVocab v = mini_vocab();
  const std::string text = "the chest report shows pneumonia and effusion";
  const auto full = encode(text, v);
  REQUIRE(full.size() > 5);
  const auto b = encode_batch({text}, {1}, 5, v);
  CHECK(b.last_index[0] == 4);
  for (int64_t t = 0; t < 5; ++t) {
    CHECK(b.attention_mask[t] == 1);
    CHECK(b.token_ids[t] == full[static_cast<size_t>(t)]);
  }
}

TEST_CASE("bpe: golden batch over five fixed sentences") {
  const BpeVocab v = mini_vocab();
  const json g = golden()["batch"];
  const auto texts = g["texts"].get<std::vector<std::string>>();
  const int64_t max_len = g["max_len"].get<int64_t>();
  const auto b =
      encode_batch(texts, std::vector<int32_t>(texts.size(), 0), max_len, v);
  for (size_t i = 0; i < texts.size(); ++i) {
    const auto& row = g["rows"][i];
    const auto ids = row["ids"].get<std::vector<int32_t>>();
    const auto mask = row["mask"].get<std::vector<int32_t>>();
    for (int64_t t = 0; t < max_len; ++t) {
      CHECK(b.token_ids[static_cast<int64_t>(i) * max_len + t] == ids[t]);
      CHECK(b.attention_mask[static_cast<int64_t>(i) * max_len + t] == mask[t]);
    }
    CHECK(b.last_index[i] == row["last_index"].get<int32_t>());
  }
}

TEST_CASE("bpe: batch error paths and the zero-token warning") {
  const BpeVocab v = mini_vocab();
  CHECK_THROWS_AS(encode_batch({}, {}, 8, v), std::invalid_argument);
  CHECK_THROWS_AS(encode_batch({"x"}, {0}, 0, v), std::invalid_argument);

  const auto b = encode_batch({""}, {0}, 4, v);
  CHECK(b.warnings.size() == 1);
  CHECK(b.last_index[0] == 0);
  CHECK(b.token_ids[0] == v.pad_id());
  CHECK(b.attention_mask[0] == 1);
  CHECK(b.attention_mask[1] == 0);
}

TEST_CASE("bpe: right padding is a prefix of ones") {
  const BpeVocab v = mini_vocab();
  Rng rng(77);
  std::vector<std::string> texts;
  for (int i = 0; i < 8; ++i) texts.push_back(random_utf8(rng));
  const auto b = encode_batch(texts, std::vector<int32_t>(8, 0), 12, v);
  for (int64_t r = 0; r < b.batch_size; ++r) {
    bool seen_zero = false;
    int64_t ones = 0;
    for (int64_t t = 0; t < b.seq_len; ++t) {
      const bool on = b.attention_mask[r * b.seq_len + t] != 0;
      if (!on) seen_zero = true;
      if (on) {
        CHECK_FALSE(seen_zero);
        ++ones;
      }
    }
    CHECK(ones >= 1);
    CHECK(b.last_index[r] == ones - 1);
  }
}

TEST_CASE("bpe: unmasked ids stable as max_len grows") {
  const BpeVocab v = mini_vocab();
  const std::string text = "normal chest report with clear lungs";
  const auto b1 = encode_batch({text}, {0}, 4, v);
  const auto b2 = encode_batch({text}, {0}, 9, v);
  for (int64_t t = 0; t <= b1.last_index[0]; ++t)
    CHECK(b1.token_ids[t] == b2.token_ids[t]);
}

TEST_CASE("bpe: validation rejects broken files") {
  const auto dir = std::string(SELTUNE_FIXTURE_DIR);
  {
    std::ofstream bad(dir + "/tmp_bad_vocab.json");
    bad << R"({"a": 0, "b": 5})";
  }
  CHECK_THROWS_AS(
      BpeVocab::load(dir + "/tmp_bad_vocab.json", dir + "/mini_merges.txt"),
      std::runtime_error);
  {
    std::ofstream bad(dir + "/tmp_bad_merges.txt");
    bad << "#version: 0.2\nq zz\n";
  }
  CHECK_THROWS_AS(
      BpeVocab::load(dir + "/mini_vocab.json", dir + "/tmp_bad_merges.txt"),
      std::runtime_error);
  std::remove((dir + "/tmp_bad_vocab.json").c_str());
  std::remove((dir + "/tmp_bad_merges.txt").c_str());
}

// Runs only when the published GPT-2 files are supplied (GPT2_VOCAB_JSON and
// GPT2_MERGES_TXT); asserts the well-known reference encoding of
// "Hello world".
TEST_CASE("bpe: real GPT-2 vocabulary golden") {
  const char* vocab_path = std::getenv("GPT2_VOCAB_JSON");
  const char* merges_path = std::getenv("GPT2_MERGES_TXT");
  if (!vocab_path || !merges_path) {
    MESSAGE("skipped: set GPT2_VOCAB_JSON and GPT2_MERGES_TXT to enable");
    return;
  }
  const BpeVocab v = BpeVocab::load(vocab_path, merges_path);
  CHECK(v.size() == 50257);
  CHECK(v.end_of_text_id() == 50256);
  CHECK(encode("Hello world", v) == std::vector<int32_t>{15496, 995});
  CHECK(decode({15496, 995}, v) == "Hello world");
}
