#include <set>
#include <sstream>

#include "doctest.h"
#include "mmb/textdata/batch.hpp"
#include "mmb/textdata/context.hpp"
#include "mmb/textdata/episode.hpp"
#include "mmb/textdata/sampler.hpp"
#include "mmb/textdata/vocab.hpp"
#include "test_support.hpp"

using namespace mmb;
using namespace mmb::text;

namespace {

std::string random_utf8(num::SplitMix64& rng, std::size_t max_cp) {
  std::string s;
  const std::size_t n = rng.below(max_cp + 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t cp;
    switch (rng.below(4)) {
      case 0: cp = 0x20 + static_cast<std::uint32_t>(rng.below(0x5F)); break;
      case 1: cp = 0xA0 + static_cast<std::uint32_t>(rng.below(0x700)); break;
      case 2: cp = 0x3040 + static_cast<std::uint32_t>(rng.below(0x6000)); break;
      default: cp = 0x1F300 + static_cast<std::uint32_t>(rng.below(0x300)); break;
    }
    if (cp < 0x80) {
      s += static_cast<char>(cp);
    } else if (cp < 0x800) {
      s += static_cast<char>(0xC0 | (cp >> 6));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      s += static_cast<char>(0xE0 | (cp >> 12));
      s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      s += static_cast<char>(0xF0 | (cp >> 18));
      s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }
  return s;
}

std::vector<std::string> toy_corpus() {
  return {"hello there, how are you today?", "i like dogs and my dog likes me",
          "the cat sat on the mat", "your persona: i love hiking in the mountains",
          "[style] Happy what a lovely sunny day", "she told him about the tree"};
}

}  // namespace

TEST_CASE("bpe: single repeated pair merges first") {
  std::vector<std::string> corpus{"aaaa"};
  auto v = Vocab::train(corpus, Vocab::reserved_count() + 256 + 1);
  REQUIRE(v.merges().size() == 1);
  CHECK(v.merges()[0] == std::pair{Vocab::byte_id('a'), Vocab::byte_id('a')});
  CHECK(v.encode("aaaa").size() == 2);
  CHECK_THROWS(Vocab::train(std::vector<std::string>{}, 300));
  CHECK_THROWS(Vocab::train(corpus, 268));
}

TEST_CASE("bpe: frequency ties go to the lexicographically smaller pair") {
  // "abab" has ab×2, ba×1 and "baba" has ba×2, ab×1: both pairs count 3.
  std::vector<std::string> corpus{"abab", "baba"};
  auto v = Vocab::train(corpus, Vocab::reserved_count() + 256 + 1);
  REQUIRE(v.merges().size() == 1);
  CHECK(v.merges()[0] == std::pair{Vocab::byte_id('a'), Vocab::byte_id('b')});
}

TEST_CASE("bpe: training is deterministic and reserved ids never come from merges") {
  auto corpus = toy_corpus();
  auto a = Vocab::train(corpus, 320), b = Vocab::train(corpus, 320);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.hash() == b.hash());
  for (const auto& text : corpus) {
    for (int id : a.encode(text)) {
      if (a.is_reserved(id)) CHECK(id >= 4);  // only control tokens
    }
  }
  auto c = Vocab::from_json(a.to_json());
  CHECK(c.hash() == a.hash());
  for (const auto& text : corpus) CHECK(c.encode(text) == a.encode(text));
}

TEST_CASE("bpe: roundtrip identity on random unicode and raw bytes") {
  auto v = Vocab::train(toy_corpus(), 360);
  num::SplitMix64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    auto s = random_utf8(rng, 24);
    CHECK(v.decode(v.encode(s)) == s);
  }
  for (int i = 0; i < 200; ++i) {
    std::string s(rng.below(40), '\0');
    for (auto& ch : s) ch = static_cast<char>(rng.below(256));
    CHECK(v.decode(v.encode(s)) == s);
  }
}

TEST_CASE("bpe: control tokens are atomic only as whole words") {
  auto v = Vocab::train(toy_corpus(), 320);
  // Separating spaces stay ordinary byte tokens so decoding is exact.
  auto ids = v.encode("hi f0 m1");
  const int space = Vocab::byte_id(' ');
  REQUIRE(ids.size() >= 4);
  CHECK(ids[ids.size() - 1] == v.control_id("m1"));
  CHECK(ids[ids.size() - 2] == space);
  CHECK(ids[ids.size() - 3] == v.control_id("f0"));
  auto embedded = v.encode("xf0 m1y");
  CHECK(std::count(embedded.begin(), embedded.end(), v.control_id("f0")) == 0);
  CHECK(std::count(embedded.begin(), embedded.end(), v.control_id("m1")) == 0);
  auto style = v.encode("[style] positive/neutral");
  CHECK(style == std::vector<int>{v.control_id("[style]"), space, v.control_id("positive/neutral")});
  CHECK(v.decode(style) == "[style] positive/neutral");
  CHECK(v.control_id("__null__") == -1);
}

TEST_CASE("episodes: JSONL schema and validation") {
  Episode ep;
  ep.dataset_role = DatasetRole::ImageChat;
  ep.context_turns = {"what a view"};
  ep.image_ref = "img_001";
  ep.style = "Happy";
  ep.label = "i love the mountains";
  auto line = to_json_line(ep);
  auto back = parse_episode_line(line);
  CHECK(to_json_line(back) == line);

  CHECK_THROWS_AS(parse_episode_line(R"({"dataset_role":"twitter","context_turns":[],"label":"x"})"),
                  EpisodeFormatError);
  CHECK_THROWS_AS(parse_episode_line(R"({"dataset_role":"convai2","context_turns":[],"label":""})"),
                  EpisodeFormatError);
  CHECK_THROWS_AS(parse_episode_line(R"({"dataset_role":"coco","context_turns":[],"label":"a dog"})"),
                  EpisodeFormatError);
  CHECK_THROWS_AS(parse_episode_line(
                      R"({"dataset_role":"convai2","context_turns":[],"label":"x","image_ref":"i"})"),
                  EpisodeFormatError);
  CHECK_THROWS_AS(
      parse_episode_line(R"({"dataset_role":"coco","context_turns":[],"label":"x","image_ref":"i","style":"Happy"})"),
      EpisodeFormatError);

  std::istringstream in(line + "\n\n" + R"({"dataset_role":"bogus","label":"x"})" + "\n");
  try {
    read_episodes(in);
    FAIL("expected EpisodeFormatError");
  } catch (const EpisodeFormatError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("assemble_context layout") {
  Episode ep;
  ep.persona_lines = {"i like dogs"};
  ep.context_turns = {"hi!"};
  ep.label = "hello";
  CHECK(assemble_context(ep, {}) == "your persona: i like dogs\nhi!");

  ControlSettings styled;
  styled.style = "Happy";
  CHECK(assemble_context(ep, styled) == "your persona: i like dogs\nhi!\n[style] Happy");

  styled.gender = "f0 m0";
  CHECK(assemble_context(ep, styled) == "your persona: i like dogs\nhi!\n[style] Happy f0 m0");

  ControlSettings gender_only;
  gender_only.gender = "f0 m0";
  const auto ctx = assemble_context(ep, gender_only);
  CHECK(ctx.substr(ctx.size() - 6) == " f0 m0");

  ep.knowledge = "dogs are mammals";
  CHECK(assemble_context(ep, {}) == "your persona: i like dogs\n[knowledge] dogs are mammals\nhi!");
  ControlSettings no_knowledge;
  no_knowledge.include_knowledge = false;
  CHECK(assemble_context(ep, no_knowledge) == "your persona: i like dogs\nhi!");
}

TEST_CASE("assemble_context is injective over randomized episode pairs") {
  num::SplitMix64 rng(99);
  auto word = [&] {
    std::string w;
    const std::size_t n = 1 + rng.below(3);
    for (std::size_t i = 0; i < n; ++i) w += static_cast<char>('a' + rng.below(3));
    return w;
  };
  auto random_episode = [&] {
    Episode ep;
    for (std::size_t i = rng.below(3); i > 0; --i) ep.persona_lines.push_back(word());
    if (rng.below(2)) ep.knowledge = word();
    for (std::size_t i = rng.below(3); i > 0; --i) ep.context_turns.push_back(word());
    ep.label = "x";
    ControlSettings c;
    if (rng.below(2)) c.style = word();
    return std::pair{ep, c};
  };
  auto key = [](const Episode& ep, const ControlSettings& c) {
    std::string k;
    for (auto& p : ep.persona_lines) k += "P" + p + "|";
    k += "K" + ep.knowledge.value_or("<none>") + "|";
    for (auto& t : ep.context_turns) k += "T" + t + "|";
    k += "S" + c.style.value_or("<none>");
    return k;
  };
  int distinct = 0;
  for (int i = 0; i < 5000; ++i) {
    auto [e1, c1] = random_episode();
    auto [e2, c2] = random_episode();
    if (key(e1, c1) == key(e2, c2)) continue;
    ++distinct;
    CHECK(assemble_context(e1, c1) != assemble_context(e2, c2));
  }
  CHECK(distinct > 4000);
}

TEST_CASE("make_batch: padding, truncation and label limits") {
  auto b = make_batch_from_ids({{5, 6, 7}, {5, 6, 7, 8, 9}}, {{20}, {21, 22}}, {nullptr, nullptr}, {});
  CHECK(b.src_len == 5);
  CHECK(std::count(b.input_mask.begin(), b.input_mask.begin() + 5, 1) == 3);
  CHECK(std::count(b.input_mask.begin() + 5, b.input_mask.end(), 1) == 5);
  for (std::size_t i = 0; i < b.input_ids.size(); ++i) CHECK((b.input_ids[i] != Vocab::kPad) == (b.input_mask[i] != 0));
  CHECK(b.tgt_len == 4);
  CHECK(b.target(0, 0) == Vocab::kBos);
  CHECK(b.target(0, 2) == Vocab::kEos);
  CHECK(b.target(0, 3) == Vocab::kPad);
  CHECK(b.target(1, 3) == Vocab::kEos);

  CHECK_THROWS_AS(make_batch_from_ids({}, {}, {}, {}), std::invalid_argument);

  BatchLimits lim;
  lim.max_context = 8;
  lim.max_label = 3;
  std::vector<int> ten{10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  auto t = make_batch_from_ids({ten}, {{1, 2, 3, 4, 5}}, {nullptr}, lim);
  CHECK(t.src_len == 8);
  for (std::size_t s = 0; s < 8; ++s) CHECK(t.input(0, s) == ten[s + 2]);
  CHECK(t.truncated_labels == 1);
  CHECK(t.tgt_len == 5);

  auto padded = pad_batch(b, 3, 2);
  CHECK(padded.src_len == 8);
  CHECK(padded.tgt_len == 6);
  CHECK(padded.input(1, 4) == 9);
  CHECK(padded.input(1, 7) == Vocab::kPad);
}

TEST_CASE("make_batch: segment ids mark image rows before text") {
  auto feats = std::make_shared<img::ImageFeatures>(img::synth_features("a", img::FeatureKind::Spatial, 1));
  auto b = make_batch_from_ids({{5, 6}, {7}}, {{8}, {9}}, {feats, nullptr}, {});
  CHECK(b.image_rows == 49);
  CHECK(b.segment_ids.size() == 2 * (49 + 2));
  CHECK(b.segment_ids[0] == 1);
  CHECK(b.segment_ids[48] == 1);
  CHECK(b.segment_ids[49] == 0);
  auto region = std::make_shared<img::ImageFeatures>(img::synth_features("b", img::FeatureKind::Region, 1));
  CHECK_THROWS_AS(make_batch_from_ids({{5}, {6}}, {{7}, {8}}, {feats, region}, {}), std::invalid_argument);
}

TEST_CASE("multitask sampler") {
  MultitaskSampler single({{"convai2", 10, 1.0}}, 3);
  for (int i = 0; i < 100; ++i) {
    auto d = single.next();
    CHECK(d.dataset == 0);
    CHECK(d.index < 10);
  }

  MultitaskSampler even({{"a", 5, 1.0}, {"b", 7, 1.0}}, 11);
  std::size_t first = 0;
  for (int i = 0; i < 10000; ++i) first += even.next().dataset == 0;
  CHECK(first >= 4800);
  CHECK(first <= 5200);

  MultitaskSampler s1({{"a", 5, 2.0}, {"b", 7, 1.0}}, 42), s2({{"a", 5, 2.0}, {"b", 7, 1.0}}, 42);
  for (int i = 0; i < 500; ++i) CHECK(s1.next() == s2.next());

  CHECK_THROWS_AS(MultitaskSampler({{"a", 0, 1.0}}, 1), std::invalid_argument);
  CHECK_THROWS_AS(MultitaskSampler({{"a", 3, 0.0}}, 1), std::invalid_argument);

  auto prop = proportional_weights({{"a", 30, 0}, {"b", 10, 0}});
  CHECK(prop[0].weight / (prop[0].weight + prop[1].weight) == doctest::Approx(0.75));
}
