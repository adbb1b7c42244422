#include "fedhist/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

namespace fedhist {
namespace {

TEST(DeriveSeed, CoordinateOrderMatters) {
    const std::uint64_t s = 42;
    EXPECT_NE(derive_seed(s, 1, 2, 3), derive_seed(s, 1, 3, 2));
    EXPECT_NE(derive_seed(s, 1, 2), derive_seed(s, 2, 1));
    EXPECT_NE(derive_seed(s, StreamTag::data), derive_seed(s, StreamTag::partition));
    EXPECT_EQ(derive_seed(s, StreamTag::init, 7), derive_seed(s, StreamTag::init, 7));
}

TEST(RandomStream, SameSeedSameSequence) {
    RandomStream a(123), b(123);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_raw(), b.next_raw());
}

TEST(RandomStream, UniformRange) {
    RandomStream rng(5);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        const double o = rng.uniform_open();
        EXPECT_GT(o, 0.0);
        EXPECT_LT(o, 1.0);
        const double r = rng.uniform(-2.0, 3.0);
        EXPECT_GE(r, -2.0);
        EXPECT_LT(r, 3.0);
    }
}

TEST(RandomStream, UniformIntBoundsAndBalance) {
    RandomStream rng(17);
    const std::uint64_t n = 6;
    std::vector<int> counts(n, 0);
    const int draws = 60000;
    for (int i = 0; i < draws; ++i) {
        const std::uint64_t v = rng.uniform_int(n);
        ASSERT_LT(v, n);
        counts[static_cast<std::size_t>(v)] += 1;
    }
    for (const int c : counts) {
        EXPECT_NEAR(static_cast<double>(c) / draws, 1.0 / 6.0, 0.01);
    }
    EXPECT_THROW(rng.uniform_int(0), std::invalid_argument);
}

TEST(RandomStream, NormalMoments) {
    RandomStream rng(31);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(RandomStream, GammaMomentsBothBranches) {
    for (const double shape : {0.3, 2.5}) {
        RandomStream rng(7000 + static_cast<std::uint64_t>(shape * 10));
        const int n = 100000;
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = rng.gamma(shape);
            ASSERT_GT(x, 0.0);
            sum += x;
            sq += x * x;
        }
        const double mean = sum / n;
        const double var = sq / n - mean * mean;
        EXPECT_NEAR(mean, shape, 0.05 * shape + 0.01);
        EXPECT_NEAR(var, shape, 0.08 * shape + 0.02);
    }
    RandomStream rng(1);
    EXPECT_THROW(rng.gamma(0.0), std::invalid_argument);
    EXPECT_THROW(rng.gamma(-1.0), std::invalid_argument);
}

TEST(RandomStream, DirichletSimplex) {
    RandomStream rng(11);
    for (int it = 0; it < 200; ++it) {
        const auto p = rng.dirichlet(0.3, 8);
        ASSERT_EQ(p.size(), 8u);
        double sum = 0.0;
        for (const double v : p) {
            EXPECT_GE(v, 0.0);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(RandomStream, DirichletMeanIsUniform) {
    RandomStream rng(13);
    const std::size_t n = 5;
    std::vector<double> acc(n, 0.0);
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) {
        const auto p = rng.dirichlet(1.0, n);
        for (std::size_t j = 0; j < n; ++j) acc[j] += p[j];
    }
    for (const double a : acc) EXPECT_NEAR(a / draws, 1.0 / n, 0.01);
}

TEST(RandomStream, ShuffleIsPermutation) {
    RandomStream rng(19);
    std::vector<int> v(40);
    for (int i = 0; i < 40; ++i) v[static_cast<std::size_t>(i)] = i;
    auto shuffled = v;
    rng.shuffle(shuffled);
    EXPECT_NE(shuffled, v);  // 40! makes a fixed-point astronomically unlikely
    std::sort(shuffled.begin(), shuffled.end());
    EXPECT_EQ(shuffled, v);

    RandomStream r1(19), r2(19);
    auto a = v, b = v;
    r1.shuffle(a);
    r2.shuffle(b);
    EXPECT_EQ(a, b);
}

TEST(RandomStream, SampleIndicesDistinctAndInRange) {
    RandomStream rng(23);
    for (int it = 0; it < 300; ++it) {
        const auto s = rng.sample_indices(50, 12);
        ASSERT_EQ(s.size(), 12u);
        std::set<int> seen(s.begin(), s.end());
        EXPECT_EQ(seen.size(), 12u);
        for (const int i : s) {
            EXPECT_GE(i, 0);
            EXPECT_LT(i, 50);
        }
    }
    EXPECT_EQ(rng.sample_indices(5, 5).size(), 5u);
    EXPECT_THROW(rng.sample_indices(3, 4), std::invalid_argument);
}

}  // namespace
}  // namespace fedhist
