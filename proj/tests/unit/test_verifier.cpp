#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "reasonlab/error.hpp"
#include "reasonlab/verifier.hpp"

namespace rl = reasonlab;

namespace {

const rl::Vocabulary& vocab() { return rl::Vocabulary::standard(); }

rl::TokenSequence tokens(const std::vector<std::string>& symbols) { return vocab().from_symbols(symbols); }

// Random written forms of a small set of values, so equal values recur often.
std::string random_form(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> num(-12, 12);
  std::uniform_int_distribution<int> den(1, 8);
  std::uniform_int_distribution<int> scale(1, 4);
  std::uniform_int_distribution<int> kind(0, 3);
  const int n = num(gen);
  const int d = den(gen);
  switch (kind(gen)) {
    case 0: {
      const int k = scale(gen);
      return std::to_string(n * k) + "/" + std::to_string(d * k);
    }
    case 1:
      return std::to_string(n);
    case 2: {
      // Decimal with a quarter grid: exact in base ten.
      const int q = n * 25;
      const std::string sign = q < 0 ? "-" : "";
      const int a = std::abs(q);
      std::string frac = std::to_string(a % 100);
      if (frac.size() < 2) frac.insert(0, "0");
      return sign + std::to_string(a / 100) + "." + frac;
    }
    default:
      return std::to_string(n) + "/" + std::to_string(d);
  }
}

}  // namespace

TEST(Verifier, StatedExamples) {
  EXPECT_TRUE(rl::verify("1/2", "0.5"));
  EXPECT_FALSE(rl::verify("0.33", "1/3"));
  EXPECT_TRUE(rl::verify("-3/4", "-0.75"));
  EXPECT_TRUE(rl::verify("4/2", "2"));
  EXPECT_FALSE(rl::verify("", "2"));
  EXPECT_FALSE(rl::verify("abc", "2"));
}

TEST(Verifier, MalformedTruth) {
  try {
    rl::verify("1", "one");
    FAIL();
  } catch (const rl::Error& e) {
    EXPECT_EQ(e.kind(), rl::ErrorKind::kMalformedTruth);
  }
  EXPECT_THROW(rl::verify("1", "1/0"), rl::Error);
}

TEST(Verifier, StrictGrammar) {
  EXPECT_TRUE(rl::parse_answer("12").has_value());
  EXPECT_TRUE(rl::parse_answer("-12/5").has_value());
  EXPECT_TRUE(rl::parse_answer("0.125").has_value());
  for (const char* bad : {"+5", "--5", "3/-4", ".5", "5.", "1/0", " 5", "5/", "", "-", "1.2.3", "x"}) {
    EXPECT_FALSE(rl::parse_answer(bad).has_value()) << bad;
  }
}

TEST(Verifier, FallbackStageRescuesSloppyForms) {
  const auto a = rl::verify_detailed("+5", "5");
  EXPECT_TRUE(a.equivalent);
  EXPECT_EQ(a.decided_by, rl::VerifyStage::kFallback);
  EXPECT_TRUE(rl::verify("--5", "5"));
  EXPECT_TRUE(rl::verify("3/-4", "-0.75"));
  EXPECT_TRUE(rl::verify(".5", "1/2"));
  EXPECT_TRUE(rl::verify("5.", "5"));
  EXPECT_TRUE(rl::verify(" 1 / 2 ", "0.5"));
  const auto b = rl::verify_detailed("5", "5");
  EXPECT_EQ(b.decided_by, rl::VerifyStage::kPrimary);
  const auto c = rl::verify_detailed("6", "5");
  EXPECT_FALSE(c.equivalent);
  EXPECT_EQ(c.decided_by, rl::VerifyStage::kFallback);
}

TEST(Verifier, CanonicalForm) {
  EXPECT_EQ(rl::canonical_answer("6/4"), "3/2");
  EXPECT_EQ(rl::canonical_answer("-0.50"), "-1/2");
  EXPECT_EQ(rl::canonical_answer("-0"), "0");
  EXPECT_EQ(rl::canonical_answer("0/7"), "0");
  EXPECT_FALSE(rl::canonical_answer("x").has_value());
  std::mt19937_64 gen(3);
  for (int i = 0; i < 2000; ++i) {
    const auto c = rl::canonical_answer(random_form(gen));
    ASSERT_TRUE(c.has_value());
    EXPECT_EQ(rl::canonical_answer(*c), c);
  }
}

TEST(Verifier, AgreesWithExactRationalOracle) {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_form(gen);
    const auto b = random_form(gen);
    const auto fa = oracle::parse(a);
    const auto fb = oracle::parse(b);
    ASSERT_TRUE(fa && fb);
    EXPECT_EQ(rl::verify(a, b), oracle::equal(*fa, *fb)) << a << " vs " << b;
  }
}

TEST(Verifier, EquivalenceRelation) {
  std::mt19937_64 gen(12);
  std::vector<std::string> xs(10000);
  for (auto& x : xs) x = random_form(gen);
  std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
  std::size_t transitive_checked = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_TRUE(rl::verify(xs[i], xs[i]));
    const auto& y = xs[pick(gen)];
    const auto& z = xs[pick(gen)];
    EXPECT_EQ(rl::verify(xs[i], y), rl::verify(y, xs[i]));
    if (rl::verify(xs[i], y) && rl::verify(y, z)) {
      ++transitive_checked;
      EXPECT_TRUE(rl::verify(xs[i], z));
    }
  }
  EXPECT_GT(transitive_checked, 0u);
}

TEST(Verifier, ExtractFinalAnswer) {
  EXPECT_EQ(rl::extract_final_answer(tokens({"3", "+", "4", "<ans>", "7", "<eos>"})), "7");
  EXPECT_EQ(rl::extract_final_answer(tokens({"<ans>", "1", "<ans>", "-", "2", "<eos>"})), "-2");
  EXPECT_EQ(rl::extract_final_answer(tokens({"<ans>", "1", "/", "2"})), "1/2");
  EXPECT_FALSE(rl::extract_final_answer(tokens({"3", "+", "4", "<eos>"})).has_value());
  EXPECT_FALSE(rl::extract_final_answer(tokens({"<ans>", "<eos>"})).has_value());
}

TEST(Verifier, RewardIsPlusOrMinusOne) {
  EXPECT_EQ(rl::reward(tokens({"<ans>", "7", "<eos>"}), "7").reward, 1);
  EXPECT_EQ(rl::reward(tokens({"<ans>", "8", "<eos>"}), "7").reward, -1);
  EXPECT_EQ(rl::reward(tokens({"7", "<eos>"}), "7").reward, -1);
  EXPECT_THROW(rl::reward(tokens({"7"}), "seven"), rl::Error);

  std::mt19937_64 gen(5);
  std::uniform_int_distribution<std::size_t> len(0, 12);
  std::uniform_int_distribution<rl::TokenId> tok(0, static_cast<rl::TokenId>(vocab().size() - 1));
  for (int i = 0; i < 5000; ++i) {
    rl::TokenSequence t(len(gen));
    for (auto& x : t) x = tok(gen);
    const int r = rl::reward(t, "3", "r" + std::to_string(i)).reward;
    EXPECT_TRUE(r == 1 || r == -1);
  }
}
