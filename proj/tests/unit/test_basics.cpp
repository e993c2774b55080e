#include <gtest/gtest.h>

#include <set>

#include "reasonlab/error.hpp"
#include "reasonlab/parameters.hpp"
#include "reasonlab/rng.hpp"
#include "reasonlab/vocabulary.hpp"

namespace rl = reasonlab;

TEST(Rng, DerivedSeedsAreDistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 50; ++a) {
    for (std::uint64_t b = 0; b < 50; ++b) seen.insert(rl::derive_seed(7, {a, b}));
  }
  EXPECT_EQ(seen.size(), 2500u);
  EXPECT_EQ(rl::derive_seed(7, {1, 2}), rl::derive_seed(7, {1, 2}));
  EXPECT_NE(rl::derive_seed(7, {1, 2}), rl::derive_seed(7, {2, 1}));
  EXPECT_NE(rl::derive_seed(7, {1}), rl::derive_seed(8, {1}));
}

TEST(Rng, RangesRespected) {
  rl::Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
    const int b = rng.between(-2, 2);
    EXPECT_GE(b, -2);
    EXPECT_LE(b, 2);
  }
}

TEST(Vocabulary, StandardLayout) {
  const auto& v = rl::Vocabulary::standard();
  EXPECT_EQ(v.symbol(v.pad()), "<pad>");
  EXPECT_EQ(v.symbol(v.eos()), "<eos>");
  EXPECT_EQ(v.symbol(v.answer_start()), "<ans>");
  for (int n = 0; n <= rl::kMaxNumberToken; ++n) {
    EXPECT_EQ(v.number_value(v.number(n)), n);
    EXPECT_EQ(v.symbol(v.number(n)), std::to_string(n));
  }
  EXPECT_EQ(v.number_value(v.eos()), -1);
  EXPECT_THROW(v.number(100), rl::Error);
  const std::vector<std::string> syms = {"3", "+", "4", "=", "?"};
  const auto toks = v.from_symbols(syms);
  EXPECT_EQ(v.to_symbols(toks), syms);
  EXPECT_EQ(v.render(toks), "3 + 4 = ?");
  try {
    v.id("seven");
    FAIL();
  } catch (const rl::Error& e) {
    EXPECT_EQ(e.kind(), rl::ErrorKind::kUnknownToken);
  }
  EXPECT_THROW(rl::Vocabulary({"<eos>", "<eos>"}), rl::Error);
  EXPECT_THROW(rl::Vocabulary({"a", "b"}), rl::Error);
}

TEST(Parameters, LayoutAndAccess) {
  rl::ParameterSet p;
  p.add("a", {2, 3});
  p.add("b", {4});
  EXPECT_EQ(p.size(), 10u);
  EXPECT_EQ(p.spec("b").offset, 6u);
  p.array("b")[1] = 2.5;
  EXPECT_EQ(p.flat()[7], 2.5);
  const auto z = p.zeros_like();
  EXPECT_TRUE(z.same_layout(p));
  EXPECT_EQ(z.flat()[7], 0.0);
  EXPECT_THROW(p.array("c"), rl::Error);
  EXPECT_TRUE(p.all_finite());
  p.flat()[0] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(p.all_finite());
  p.fill(1.0);
  for (double v : p.flat()) EXPECT_EQ(v, 1.0);
}
