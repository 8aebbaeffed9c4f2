#include <catch2/catch_amalgamated.hpp>

#include "qrex/replay.hpp"

#include <set>

using namespace qrex;

TEST_CASE("partition_stream closed-form indices") {
    SECTION("K=1 N=1 B=2 u=1") {
        auto p = partition_stream(1, 1, 2, 1);
        CHECK(p.total() == 3);
        CHECK(p.index(1, 1, 1) == 1);
        CHECK(p.index(1, 1, 2) == 2);
        CHECK_FALSE(p.in_gap(1));
        CHECK_FALSE(p.in_gap(2));
        CHECK(p.in_gap(3));
    }
    SECTION("K=2 N=2 B=2 u=0") {
        auto p = partition_stream(2, 2, 2, 0);
        CHECK(p.index(2, 1, 1) == 5);
        CHECK(p.total() == 8);
        for (std::int64_t t = 1; t <= 8; ++t) CHECK_FALSE(p.in_gap(t));
    }
    SECTION("K=1 N=3 B=4 u=2") {
        auto p = partition_stream(1, 3, 4, 2);
        CHECK(p.total() == 18);
        const std::set<std::int64_t> gaps{5, 6, 11, 12, 17, 18};
        for (std::int64_t t = 1; t <= 18; ++t) CHECK(p.in_gap(t) == (gaps.count(t) == 1));
    }
    CHECK_THROWS_AS(partition_stream(0, 1, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(partition_stream(1, 1, -2, 0), std::invalid_argument);
}

TEST_CASE("partition indices cover [1, T] exactly once") {
    for (auto [K, N, B, u] : {std::array<std::int64_t, 4>{2, 3, 4, 1},
                              std::array<std::int64_t, 4>{3, 1, 5, 0},
                              std::array<std::int64_t, 4>{1, 4, 2, 3}}) {
        auto p = partition_stream(K, N, B, u);
        std::set<std::int64_t> seen;
        for (std::int64_t k = 1; k <= K; ++k)
            for (std::int64_t j = 1; j <= N; ++j)
                for (std::int64_t i = 1; i <= B + u; ++i) {
                    const auto t = p.index(k, j, i);
                    CHECK(t >= 1);
                    CHECK(t <= p.total());
                    CHECK(seen.insert(t).second);
                    CHECK(p.in_gap(t) == (i > B));
                }
        CHECK(static_cast<std::int64_t>(seen.size()) == p.total());
    }
}

TEST_CASE("iteration_order") {
    Rng rng(1);
    CHECK(iteration_order(3, ReplayOrder::Reverse, rng) == std::vector<int>{3, 2, 1});
    CHECK(iteration_order(4, ReplayOrder::Forward, rng) == std::vector<int>{1, 2, 3, 4});
    CHECK(iteration_order(1, ReplayOrder::Reverse, rng) == std::vector<int>{1});
    CHECK(iteration_order(1, ReplayOrder::Forward, rng) == std::vector<int>{1});
    CHECK(iteration_order(1, ReplayOrder::UniformRandomPermutation, rng) == std::vector<int>{1});
    CHECK_THROWS_AS(iteration_order(0, ReplayOrder::Reverse, rng), std::invalid_argument);

    auto perm = iteration_order(6, ReplayOrder::UniformRandomPermutation, rng);
    std::set<int> s(perm.begin(), perm.end());
    CHECK(s == std::set<int>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("random permutations place each position first equally often") {
    // chi-squared over the first element of B=5 permutations, 1e5 draws,
    // 4 degrees of freedom, 1% critical value 13.2767
    Rng rng(99);
    const int draws = 100000;
    std::array<double, 5> counts{};
    for (int i = 0; i < draws; ++i) {
        auto perm = iteration_order(5, ReplayOrder::UniformRandomPermutation, rng);
        counts[static_cast<std::size_t>(perm[0] - 1)] += 1.0;
    }
    const double expected = draws / 5.0;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 13.2767);
}

TEST_CASE("with-replacement sampling stays within range") {
    Rng rng(17);
    auto idx = iteration_order_with_replacement(8, rng);
    CHECK(idx.size() == 8);
    for (int v : idx) {
        CHECK(v >= 1);
        CHECK(v <= 8);
    }
}
