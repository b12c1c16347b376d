#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <set>

#include "dlap/corpus.hpp"
#include "dlap/error.hpp"
#include "synthetic.hpp"

using namespace dlap;
using namespace dlap::corpus;

namespace {

const std::string kFixtures = DLAP_FIXTURE_DIR;

Corpus labelled(std::size_t vulnerable, std::size_t benign) {
  std::vector<FunctionRecord> rs;
  for (std::size_t i = 0; i < vulnerable + benign; ++i) {
    FunctionRecord r;
    r.id = "r" + std::to_string(i);
    r.project = "p";
    r.source = "int f" + std::to_string(i) + "(void) { return 0; }";
    r.label = i < vulnerable ? Label::kVulnerable : Label::kBenign;
    rs.push_back(r);
  }
  return Corpus(rs);
}

std::set<std::string> ids(const Corpus& c) {
  std::set<std::string> out;
  for (const auto& r : c.records()) out.insert(r.id);
  return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

}  // namespace

TEST(LoadCorpus, FourLineFixture) {
  const auto c = load_corpus(kFixtures + "/corpus_small.jsonl");
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c.label_counts(), (LabelCounts{2, 2}));
  EXPECT_EQ(c.records()[0].commit, std::optional<std::string>("a1b2c3"));
  EXPECT_FALSE(c.records()[3].commit.has_value());
  EXPECT_EQ(c.find("f3")->project, "linux");
  EXPECT_EQ(c.find("nope"), nullptr);
  EXPECT_EQ(c.provenance().source_path, kFixtures + "/corpus_small.jsonl");
}

TEST(LoadCorpus, DuplicateIdNamesTheId) {
  try {
    load_corpus(kFixtures + "/corpus_dup.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
    EXPECT_NE(std::string(e.what()).find("\"f1\""), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, EmptyFileIsEmptyCorpus) {
  EXPECT_TRUE(load_corpus(kFixtures + "/corpus_empty.jsonl").empty());
}

TEST(LoadCorpus, MissingFileIsIoError) {
  EXPECT_EQ(code_of([] { load_corpus("/nonexistent/corpus.jsonl"); }), ErrorCode::kIo);
}

TEST(ParseCorpus, MalformedLinesNameTheLine) {
  const std::vector<std::pair<std::string, std::string>> bad = {
      {"{\"id\":\"a\",\"project\":\"p\",\"code\":\"x\",\"label\":1}\n{not json}\n", "t:2:"},
      {"{\"id\":\"a\",\"project\":\"p\",\"code\":\"x\",\"label\":2}\n", "t:1:"},
      {"{\"id\":\"a\",\"project\":\"p\",\"code\":\"\",\"label\":1}\n", "t:1:"},
      {"\n\n{\"id\":\"a\",\"project\":\"p\",\"label\":1}\n", "t:3:"},
      {"{\"id\":\"a\",\"project\":\"p\",\"code\":\"\xff\",\"label\":1}\n", "t:1:"},
      {"[1,2]\n", "t:1:"},
  };
  for (const auto& [text, where] : bad) {
    try {
      parse_corpus(text, "t");
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kFormat);
      EXPECT_EQ(std::string(e.what()).rfind(where, 0), 0u) << e.what();
    }
  }
}

TEST(ParseCorpus, RoundTripsThroughJsonl) {
  const auto c = load_corpus(kFixtures + "/corpus_small.jsonl");
  const auto again = parse_corpus(c.to_jsonl());
  EXPECT_EQ(again.records(), c.records());
  EXPECT_EQ(again.content_hash(), c.content_hash());
}

TEST(Undersample, TenBenignTwoVulnerable) {
  const auto out = undersample(labelled(2, 10), 1.0, 7);
  EXPECT_EQ(out.label_counts(), (LabelCounts{2, 2}));
}

TEST(Undersample, KeepsAllWhenBenignBelowTarget) {
  const auto out = undersample(labelled(5, 3), 1.0, 7);
  EXPECT_EQ(out.size(), 8u);
}

TEST(Undersample, DeterministicPerSeed) {
  const auto c = labelled(4, 40);
  EXPECT_EQ(ids(undersample(c, 1.0, 11)), ids(undersample(c, 1.0, 11)));
  EXPECT_NE(ids(undersample(c, 1.0, 11)), ids(undersample(c, 1.0, 12)));
}

TEST(Undersample, Preconditions) {
  EXPECT_EQ(code_of([] { undersample(labelled(0, 5), 1.0, 1); }), ErrorCode::kPrecondition);
  EXPECT_EQ(code_of([] { undersample(labelled(2, 5), 0.0, 1); }), ErrorCode::kPrecondition);
  EXPECT_EQ(code_of([] { undersample(labelled(2, 5), -1.0, 1); }), ErrorCode::kPrecondition);
}

TEST(Undersample, PropertyAcrossRatiosAndSeeds) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    for (double ratio : {0.5, 1.0, 1.5, 3.0}) {
      const auto c = labelled(1 + seed % 7, seed * 3 % 40);
      const auto before = c.label_counts();
      const auto after = undersample(c, ratio, seed).label_counts();
      EXPECT_EQ(after.vulnerable, before.vulnerable);
      EXPECT_LE(after.benign, static_cast<std::size_t>(std::llround(ratio * before.vulnerable)));
      EXPECT_EQ(after.benign,
                std::min(before.benign, static_cast<std::size_t>(std::llround(ratio * before.vulnerable))));
    }
  }
}

TEST(Split, TenRecordsEightTwo) {
  const auto s = split(labelled(5, 5), 0.8, 3);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.test.size(), 2u);
  EXPECT_EQ(s.train.label_counts(), (LabelCounts{4, 4}));
  EXPECT_EQ(s.seed, 3u);
}

TEST(Split, Preconditions) {
  EXPECT_EQ(code_of([] { split(labelled(5, 5), 1.0, 1); }), ErrorCode::kPrecondition);
  EXPECT_EQ(code_of([] { split(labelled(5, 5), 0.0, 1); }), ErrorCode::kPrecondition);
  EXPECT_EQ(code_of([] { split(labelled(1, 0), 0.5, 1); }), ErrorCode::kPrecondition);
  EXPECT_EQ(code_of([] { split(labelled(1, 1), 0.9, 1); }), ErrorCode::kPrecondition);
}

TEST(Split, PropertyDisjointExhaustiveStratified) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t v = 1 + seed % 13, b = 1 + (seed * 7) % 29;
    const auto c = labelled(v, b);
    const auto want_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(c.size())));
    if (want_train == c.size()) {
      // No record would be left for testing.
      EXPECT_THROW(split(c, 0.8, seed), Error);
      continue;
    }
    const auto s = split(c, 0.8, seed);
    const auto tr = ids(s.train), te = ids(s.test);
    std::vector<std::string> both;
    std::set_intersection(tr.begin(), tr.end(), te.begin(), te.end(), std::back_inserter(both));
    EXPECT_TRUE(both.empty());
    EXPECT_EQ(tr.size() + te.size(), c.size());
    const double n = static_cast<double>(c.size());
    EXPECT_EQ(s.train.size(), static_cast<std::size_t>(std::llround(0.8 * n)));
    const auto lc = s.train.label_counts();
    EXPECT_LE(std::abs(static_cast<double>(lc.vulnerable) - 0.8 * v), 1.0);
    EXPECT_LE(std::abs(static_cast<double>(lc.benign) - 0.8 * b), 1.0);
    EXPECT_EQ(s.train.to_jsonl(), split(c, 0.8, seed).train.to_jsonl());
  }
}

TEST(SaveCorpus, RoundTripsThroughFile) {
  const auto c = dlap::testing::synthetic_corpus(12, 5);
  const auto path = std::filesystem::temp_directory_path() / "dlap_corpus_roundtrip.jsonl";
  save_corpus(c, path.string());
  EXPECT_EQ(load_corpus(path.string()).records(), c.records());
  std::filesystem::remove(path);
}
