#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "manigan/dataset.hpp"
#include "manigan/text_encoder.hpp"

using namespace manigan;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tokenize splits on whitespace and lowers") {
  auto words = tokenize("A Red  Square\ton a WHITE background");
  CHECK(words == std::vector<std::string>{"a", "red", "square", "on", "a",
                                          "white", "background"});
  CHECK(tokenize("").empty());
}

TEST_CASE("vocabulary build counts distinct tokens plus specials") {
  Vocabulary v = Vocabulary::build({{"red", "square"}});
  CHECK(v.size() == 4);
  CHECK(v.pad_index == 0);
  CHECK(v.unk_index == 1);
  CHECK(v.pad_index != v.unk_index);
  CHECK(v.tokens[0] == "<pad>");
  CHECK(v.tokens[1] == "<unk>");

  Vocabulary dup = Vocabulary::build({{"red", "red"}, {"red"}});
  CHECK(dup.size() == 3);

  CHECK_THROWS_AS(Vocabulary::build({}), ConfigError);
}

TEST_CASE("vocabulary over the full caption grammar") {
  // Every terminal: 6 colors + 4 shapes + 4 backgrounds + the 5 template
  // words (a, with, stripe, on, background) + pad + unk.
  std::vector<std::vector<std::string>> corpus;
  for (const auto& shape : shape_names())
    for (const auto& color : color_names())
      for (const auto& bg : background_names()) {
        Attributes a{shape, color, bg, ""};
        corpus.push_back(build_caption(a));
        for (const auto& c2 : color_names())
          if (c2 != color)
            corpus.push_back(build_caption({shape, color, bg, c2}));
      }
  Vocabulary v = Vocabulary::build(corpus);
  CHECK(v.size() == 6 + 4 + 4 + 5 + 2);
}

TEST_CASE("vocabulary lookup and encode") {
  Vocabulary v = Vocabulary::build({{"red", "square", "on"}});
  CHECK(v.lookup("red") != v.unk_index);
  CHECK(v.lookup("teal") == v.unk_index);
  CHECK(v.encode({"red", "teal"}) ==
        std::vector<int>{v.lookup("red"), v.unk_index});
  CHECK_THROWS_AS(v.encode({}), EncodingError);

  std::vector<std::string> longcap(kMaxCaptionTokens + 5, "red");
  CHECK(static_cast<int>(v.encode(longcap).size()) == kMaxCaptionTokens);
  CHECK(v.encode(longcap, 3).size() == 3);

  // Round-trippable over non-special tokens.
  std::set<int> seen;
  for (const auto& t : v.tokens) {
    int id = v.lookup(t);
    CHECK(v.tokens[id] == t);
    CHECK(seen.insert(id).second);
  }
}

TEST_CASE("vocabulary save and load round-trip") {
  Vocabulary v = Vocabulary::build({{"a", "red", "square"}});
  std::string path = temp_path("vocab_roundtrip.txt");
  v.save(path);
  Vocabulary r = Vocabulary::load(path);
  CHECK(r.tokens == v.tokens);
  std::remove(path.c_str());

  CHECK_THROWS_AS(Vocabulary::load(temp_path("missing_vocab.txt")), IoError);

  std::string bad = temp_path("bad_vocab.txt");
  {
    std::ofstream out(bad);
    out << "nospecials\n";
  }
  CHECK_THROWS_AS(Vocabulary::load(bad), IoError);
  std::remove(bad.c_str());
}

TEST_CASE("text encoder shapes and the sentence mean") {
  Rng rng(7);
  TextEncoder enc = TextEncoder::create(12, 8, rng);
  TextFeatures f = enc.encode({2, 5, 3});
  CHECK(f.word_features.shape() == Shape{3, 8});
  CHECK(f.sentence_feature.shape() == Shape{8});
  CHECK(f.length == 3);
  CHECK(f.word_features.all_finite());

  // Sentence feature is exactly the column mean of the word rows.
  for (int j = 0; j < 8; ++j) {
    double m = 0.0;
    for (int t = 0; t < 3; ++t) m += f.word_features.at(t * 8 + j);
    CHECK(f.sentence_feature.at(j) ==
          doctest::Approx(m / 3.0).epsilon(1e-6));
  }
}

TEST_CASE("single token sentence equals its word row") {
  Rng rng(11);
  TextEncoder enc = TextEncoder::create(9, 6, rng);
  TextFeatures f = enc.encode({4});
  REQUIRE(f.length == 1);
  for (int j = 0; j < 6; ++j)
    CHECK(f.sentence_feature.at(j) == f.word_features.at(j));
}

TEST_CASE("text encoding is deterministic") {
  Rng rng(13);
  TextEncoder enc = TextEncoder::create(15, 8, rng);
  TextFeatures a = enc.encode({1, 7, 7, 2});
  TextFeatures b = enc.encode({1, 7, 7, 2});
  REQUIRE(a.word_features.size() == b.word_features.size());
  for (int64_t i = 0; i < a.word_features.size(); ++i)
    CHECK(a.word_features.at(i) == b.word_features.at(i));
  for (int j = 0; j < 8; ++j)
    CHECK(a.sentence_feature.at(j) == b.sentence_feature.at(j));
}

TEST_CASE("word order changes the features") {
  Rng rng(17);
  TextEncoder enc = TextEncoder::create(15, 8, rng);
  TextFeatures ab = enc.encode({3, 5, 9, 2});
  TextFeatures ba = enc.encode({3, 9, 5, 2});
  float worst = 0.0f;
  for (int64_t i = 0; i < ab.word_features.size(); ++i)
    worst = std::max(worst, std::fabs(ab.word_features.at(i) -
                                      ba.word_features.at(i)));
  CHECK(worst > 1e-6f);
}

TEST_CASE("word features depend on both directions") {
  Rng rng(19);
  TextEncoder enc = TextEncoder::create(15, 8, rng);
  // Changing the last token must reach the first word row (backward pass),
  // and changing the first must reach the last (forward pass).
  TextFeatures base = enc.encode({2, 3, 4});
  TextFeatures tail = enc.encode({2, 3, 5});
  TextFeatures head = enc.encode({6, 3, 4});
  auto row_delta = [](const TextFeatures& a, const TextFeatures& b, int t) {
    float d = 0.0f;
    for (int j = 0; j < 8; ++j)
      d = std::max(d, std::fabs(a.word_features.at(t * 8 + j) -
                                b.word_features.at(t * 8 + j)));
    return d;
  };
  CHECK(row_delta(base, tail, 0) > 1e-7f);
  CHECK(row_delta(base, head, 2) > 1e-7f);
}

TEST_CASE("text encoder rejects bad inputs") {
  Rng rng(23);
  TextEncoder enc = TextEncoder::create(10, 6, rng);
  CHECK_THROWS_AS(enc.encode({}), EncodingError);
  CHECK_THROWS_AS(enc.encode({10}), EncodingError);
  CHECK_THROWS_AS(enc.encode({-1}), EncodingError);
  std::vector<int> toolong(kMaxCaptionTokens + 1, 2);
  CHECK_THROWS_AS(enc.encode(toolong), EncodingError);
  CHECK_THROWS_AS(TextEncoder().encode({1}), StateError);
  CHECK_THROWS_AS(TextEncoder::create(1, 6, rng), ConfigError);
  CHECK_THROWS_AS(TextEncoder::create(10, 7, rng), ConfigError);
}

TEST_CASE("text encoder parameters and names line up") {
  Rng rng(29);
  TextEncoder enc = TextEncoder::create(10, 6, rng);
  auto params = enc.parameters();
  auto names = TextEncoder::parameter_names();
  REQUIRE(params.size() == names.size());
  CHECK(params.size() == 9);
  for (const auto& p : params) CHECK(p.defined());

  enc.set_trainable(true);
  for (const auto& p : params) CHECK(p.requires_grad());
  enc.set_trainable(false);
  for (const auto& p : params) CHECK(!p.requires_grad());
}
