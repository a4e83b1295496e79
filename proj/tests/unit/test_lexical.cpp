#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aequiv/dataset.hpp"
#include "aequiv/error.hpp"
#include "aequiv/lexical.hpp"
#include "aequiv/rng.hpp"
#include "oracles.hpp"

namespace {

using aequiv::lexical::NormalizationProfile;
using aequiv::lexical::TokenBag;
namespace lx = aequiv::lexical;
namespace oracle = aequiv::testing::oracle;

std::vector<std::string> random_bag(aequiv::Rng& rng) {
  static constexpr std::array<const char*, 6> kAlphabet = {"a", "b", "c", "d", "e", "f"};
  std::vector<std::string> out(aequiv::uniform_index(rng, 9));
  for (auto& t : out) t = kAlphabet[aequiv::uniform_index(rng, kAlphabet.size())];
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) s += (s.empty() ? "" : " ") + t;
  return s;
}

TEST(Normalization, SimpleLowercasesAndDeletesPunctuation) {
  EXPECT_EQ(lx::normalized_tokens("Napoleon's Army!", NormalizationProfile::simple()),
            (std::vector<std::string>{"napoleons", "army"}));
  EXPECT_EQ(lx::normalized_tokens("co-NP", NormalizationProfile::simple()),
            (std::vector<std::string>{"conp"}));
  EXPECT_EQ(lx::normalized_tokens("0.5–1.4 m", NormalizationProfile::simple()),
            (std::vector<std::string>{"0514", "m"}));
}

TEST(Normalization, ArticlesOnlyDroppedBySquadProfile) {
  EXPECT_EQ(lx::normalized_tokens("The cat and a dog", NormalizationProfile::simple()).size(), 5u);
  EXPECT_EQ(lx::normalized_tokens("The cat and a dog", NormalizationProfile::squad_official()),
            (std::vector<std::string>{"cat", "and", "dog"}));
}

TEST(Normalization, NonAsciiLetters) {
  EXPECT_EQ(lx::normalized_tokens("CAFÉ Ñandú", NormalizationProfile::simple()),
            (std::vector<std::string>{"café", "ñandú"}));
  EXPECT_EQ(lx::normalized_tokens("¿qué?", NormalizationProfile::simple()),
            (std::vector<std::string>{"qué"}));
}

TEST(Normalization, ProfileNames) {
  EXPECT_EQ(lx::profile_by_name("simple"), NormalizationProfile::simple());
  EXPECT_EQ(lx::profile_by_name("squad-official"), NormalizationProfile::squad_official());
  EXPECT_FALSE(lx::profile_by_name("stemmed").has_value());
  EXPECT_EQ(lx::profile_name(NormalizationProfile::squad_official()), "squad-official");
}

TEST(ExactMatch, AnyReference) {
  const std::vector<std::string> refs{"Saint Genevieve", "genevieve"};
  EXPECT_TRUE(lx::exact_match("Genevieve.", refs));
  EXPECT_FALSE(lx::exact_match("Saint", refs));
  EXPECT_TRUE(lx::exact_match("the Eiffel tower", std::vector<std::string>{"Eiffel Tower"},
                              NormalizationProfile::squad_official()));
  EXPECT_THROW(lx::exact_match("x", std::vector<std::string>{}), aequiv::ValidationError);
}

TEST(TokenF1, WorkedExamples) {
  EXPECT_DOUBLE_EQ(lx::token_f1("b c d", "a b c"), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(lx::token_f1("secondary school", "secondary school teachers"), 0.8);
  EXPECT_DOUBLE_EQ(lx::token_f1("0.5–1.4 m", "50–140 cm"), 0.0);
  EXPECT_DOUBLE_EQ(lx::token_f1("", ""), 1.0);
  EXPECT_DOUBLE_EQ(lx::token_f1("word", "!!"), 0.0);
}

TEST(TokenF1, RepeatedTokensCountWithMultiplicity) {
  EXPECT_DOUBLE_EQ(lx::token_f1("a a b", "a b b"), 2.0 * 2 / 6);
  EXPECT_DOUBLE_EQ(lx::token_f1("a a", "a"), 2.0 * 1 / 3);
}

TEST(TokenF1, MatchesCountingOracleOnRandomBags) {
  aequiv::Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const auto c = random_bag(rng);
    const auto r = random_bag(rng);
    EXPECT_EQ(lx::token_f1(join(c), join(r)), oracle::token_f1(c, r)) << join(c) << " | " << join(r);
  }
}

TEST(TokenF1, SymmetricBoundedAndOneOnlyForEqualBags) {
  aequiv::Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    const auto c = random_bag(rng);
    const auto r = random_bag(rng);
    const double f = lx::token_f1(join(c), join(r));
    EXPECT_EQ(f, lx::token_f1(join(r), join(c)));
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    auto sc = c, sr = r;
    std::sort(sc.begin(), sc.end());
    std::sort(sr.begin(), sr.end());
    EXPECT_EQ(f == 1.0, sc == sr);
  }
}

TEST(TokenF1, SharedVectorFile) {
  std::size_t n = 0;
  aequiv::for_each_jsonl(std::string(AEQUIV_TEST_DATA_DIR) + "/f1_vectors.jsonl",
                         [&](const nlohmann::json& j, std::size_t line) {
                           const double expected = j.at("f1").get<double>();
                           EXPECT_EQ(lx::token_f1(j.at("candidate").get<std::string>(),
                                                  j.at("reference").get<std::string>()),
                                     expected)
                               << "line " << line;
                           ++n;
                         });
  EXPECT_EQ(n, 100u);
}

TEST(MaxTokenF1, ExamplesAndEmptyReferences) {
  EXPECT_DOUBLE_EQ(lx::max_token_f1("rain", std::vector<std::string>{"rain", "infrequent rain"}), 1.0);
  EXPECT_DOUBLE_EQ(lx::max_token_f1("secondary school",
                                    std::vector<std::string>{"secondary school teachers"}),
                   0.8);
  EXPECT_THROW(lx::max_token_f1("x", std::vector<std::string>{}), aequiv::ValidationError);
}

TEST(MaxTokenF1, ExactMatchImpliesOneAndReferencesOnlyHelp) {
  aequiv::Rng rng(13);
  for (int i = 0; i < 500; ++i) {
    const std::string cand = join(random_bag(rng));
    std::vector<std::string> refs{join(random_bag(rng))};
    double prev = lx::max_token_f1(cand, refs);
    for (int k = 0; k < 4; ++k) {
      refs.push_back(join(random_bag(rng)));
      const double now = lx::max_token_f1(cand, refs);
      EXPECT_GE(now, prev);
      prev = now;
    }
    if (lx::exact_match(cand, refs)) EXPECT_EQ(lx::max_token_f1(cand, refs), 1.0);
    refs.push_back(cand);
    EXPECT_TRUE(lx::exact_match(cand, refs));
    EXPECT_EQ(lx::max_token_f1(cand, refs), 1.0);
  }
}

TEST(TokenBag, OverlapIsMultisetIntersection) {
  const TokenBag a({"x", "y", "y", "z"});
  const TokenBag b({"y", "y", "y", "x"});
  EXPECT_EQ(a.overlap(b), 3u);
  EXPECT_EQ(b.overlap(a), 3u);
  EXPECT_EQ(TokenBag({"b", "a"}), TokenBag({"a", "b"}));
}

}  // namespace
