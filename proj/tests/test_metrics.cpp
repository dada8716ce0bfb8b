#include "doctest.h"
#include "qgen/metrics.hpp"
#include "testutil.hpp"

using namespace qgen;

TEST_CASE("tokenize lower-cases and splits on non-alphanumeric runs") {
    CHECK(tokenize("A lovely dinner!") ==
          TokenSequence{"a", "lovely", "dinner"});
    CHECK(tokenize("") == TokenSequence{});
    CHECK(tokenize("Tom-Thumb's table") ==
          TokenSequence{"tom", "thumb", "s", "table"});
    CHECK(tokenize("  ...  ") == TokenSequence{});
    CHECK(tokenize("3 ships, 2 crowns") ==
          TokenSequence{"3", "ships", "2", "crowns"});
}

TEST_CASE("lcs_length basics") {
    const TokenSequence a{"the", "cat", "sat"};
    CHECK(lcs_length(a, a) == 3);
    CHECK(lcs_length(a, TokenSequence{"dog", "runs"}) == 0);
    CHECK(lcs_length(TokenSequence{"the", "cat", "ran", "home"}, a) == 2);
    CHECK(lcs_length(TokenSequence{}, a) == 0);
}

TEST_CASE("rouge_l_f1 examples") {
    CHECK(rouge_l_f1("the cat sat", "the cat sat") == doctest::Approx(1.0));
    // LCS=2, P=2/4, R=2/3
    CHECK(rouge_l_f1("the cat ran home", "the cat sat") ==
          doctest::Approx(4.0 / 7.0).epsilon(1e-12));
    CHECK(rouge_l_f1("dog", "cat") == 0.0);
    CHECK(rouge_l_f1("", "anything") == 0.0);
}

TEST_CASE("rouge_1_f1 examples") {
    // overlap 2, P=2/3, R=1
    CHECK(rouge_1_f1("a lovely dinner", "lovely dinner") ==
          doctest::Approx(0.8).epsilon(1e-12));
    CHECK(rouge_1_f1("so it goes", "so it goes") == doctest::Approx(1.0));
    CHECK(rouge_1_f1("", "anything") == 0.0);
    // clipped counts: "the the the" vs "the" overlaps once
    CHECK(rouge_1_f1("the the the", "the") ==
          doctest::Approx(testutil::f1_from(1, 3, 1)));
}

TEST_CASE("metric identities on random pairs") {
    SeededRng rng(20240901);
    for (int i = 0; i < 1000; ++i) {
        const auto a = testutil::random_tokens(rng, 12, 5);
        const auto b = testutil::random_tokens(rng, 12, 5);
        const double l_ab = rouge_l_f1(a, b);
        const double l_ba = rouge_l_f1(b, a);
        const double u_ab = rouge_1_f1(a, b);
        const double u_ba = rouge_1_f1(b, a);
        REQUIRE(l_ab == l_ba);
        REQUIRE(u_ab == u_ba);
        REQUIRE(l_ab >= 0.0);
        REQUIRE(l_ab <= 1.0);
        REQUIRE(u_ab >= 0.0);
        REQUIRE(u_ab <= 1.0);
        REQUIRE(lcs_length(a, b) <= std::min(a.size(), b.size()));
        if (!a.empty()) {
            REQUIRE(rouge_l_f1(a, a) == 1.0);
            REQUIRE(rouge_1_f1(a, a) == 1.0);
        }
    }
}

TEST_CASE("production scores match exhaustive oracles") {
    SeededRng rng(77);
    for (int i = 0; i < 300; ++i) {
        const auto a = testutil::random_tokens(rng, 12, 5);
        const auto b = testutil::random_tokens(rng, 12, 5);
        REQUIRE(lcs_length(a, b) == testutil::lcs_exhaustive(a, b));
        REQUIRE(rouge_l_f1(a, b) ==
                doctest::Approx(testutil::rouge_l_oracle(a, b)).epsilon(1e-12));
        REQUIRE(rouge_1_f1(a, b) ==
                doctest::Approx(testutil::rouge_1_oracle(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("tokenize-based overloads agree with pre-tokenized ones") {
    const std::string c = "What did Tom-Thumb SEE at the table?";
    const std::string r = "what did tom thumb see";
    CHECK(rouge_l_f1(c, r) == rouge_l_f1(tokenize(c), tokenize(r)));
    CHECK(rouge_1_f1(c, r) == rouge_1_f1(tokenize(c), tokenize(r)));
}
