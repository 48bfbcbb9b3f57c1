#include "doctest.h"

#include <random>

#include "asgd/error.hpp"
#include "asgd/vecmath.hpp"

using asgd::Vector;

namespace {

std::vector<Vector> random_set(std::mt19937_64& rng, std::size_t count, std::size_t dim) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<Vector> out;
    for (std::size_t i = 0; i < count; ++i) {
        Vector v(dim);
        for (std::size_t k = 0; k < dim; ++k) v[k] = nd(rng);
        out.push_back(v);
    }
    return out;
}

// Independent brute-force diameter in long double.
long double brute_diameter_sq(const std::vector<Vector>& s) {
    long double best = 0;
    for (const auto& a : s)
        for (const auto& b : s) {
            long double d = 0;
            for (std::size_t k = 0; k < a.dim(); ++k) {
                const long double e = static_cast<long double>(a[k]) - b[k];
                d += e * e;
            }
            best = std::max(best, d);
        }
    return best;
}

}  // namespace

TEST_CASE("midpoint is coordinate-wise and symmetric") {
    const Vector a{1.0, -2.0, 4.0};
    const Vector b{3.0, 2.0, 0.5};
    const Vector m = asgd::midpoint(a, b);
    CHECK(m == Vector{2.0, 0.0, 2.25});
    CHECK(asgd::midpoint(b, a) == m);
    CHECK(asgd::midpoint(a, a) == a);
}

TEST_CASE("mean of identical points is exact") {
    const Vector v{0.1, 0.7, -3.3};
    std::vector<Vector> s(7, v);
    CHECK(asgd::mean(s) == v);
}

TEST_CASE("mean matches a long double reference") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto s = random_set(rng, 1 + trial % 9, 4);
        const Vector m = asgd::mean(s);
        for (std::size_t k = 0; k < 4; ++k) {
            long double ref = 0;
            for (const auto& p : s) ref += p[k];
            ref /= s.size();
            CHECK(static_cast<double>(ref) == doctest::Approx(m[k]).epsilon(1e-12));
        }
    }
}

TEST_CASE("extreme pair agrees with brute force") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        auto s = random_set(rng, 1 + trial % 17, 1 + trial % 6);
        const auto pair = asgd::extreme_pair(s);
        CHECK(static_cast<double>(brute_diameter_sq(s)) == doctest::Approx(pair.dist_sq).epsilon(1e-12));
        CHECK(asgd::distance_sq(s[pair.first], s[pair.second]) == pair.dist_sq);
        CHECK(pair.first <= pair.second);
    }
}

TEST_CASE("ties resolve to the first pair and first index") {
    const std::vector<Vector> s{{0.0}, {1.0}, {-1.0}};
    // (1, 2) is the unique extreme pair here
    CHECK(asgd::extreme_pair(s).first == 1);
    const std::vector<Vector> square{{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
    const auto p = asgd::extreme_pair(square);
    CHECK(p.first == 0);
    CHECK(p.second == 2);
    CHECK(asgd::farthest_index(std::vector<Vector>{{1.0}, {-1.0}}, Vector{0.0}) == 0);
}

TEST_CASE("singleton sets aggregate to the point itself") {
    const std::vector<Vector> s{{2.5, -1.0}};
    CHECK(asgd::mid_extremes(s) == s[0]);
    CHECK(asgd::approach_extreme(s, s[0]) == s[0]);
    CHECK(asgd::diameter_sq(s) == 0.0);
}

TEST_CASE("approach_extreme moves halfway to the farthest point") {
    const std::vector<Vector> s{{0.0}, {4.0}, {1.0}};
    CHECK(asgd::approach_extreme(s, Vector{1.0}) == Vector{2.5});
}

TEST_CASE("usage errors") {
    CHECK_THROWS_AS(asgd::mid_extremes(std::vector<Vector>{}), asgd::UsageError);
    CHECK_THROWS_AS(asgd::midpoint(Vector{1.0}, Vector{1.0, 2.0}), asgd::UsageError);
    CHECK_THROWS_AS(asgd::extreme_pair(std::vector<Vector>{{1.0}, {1.0, 2.0}}), asgd::UsageError);
    CHECK_THROWS_AS(asgd::approach_extreme(std::vector<Vector>{{1.0}}, Vector{1.0, 2.0}), asgd::UsageError);
}

TEST_CASE("aggregates of sets sharing a point stay close") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> size(1, 12);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t d = 1 + trial % 5;
        auto a = random_set(rng, size(rng), d);
        auto b = random_set(rng, size(rng), d);
        b.push_back(a.front());
        std::vector<Vector> joint = a;
        joint.insert(joint.end(), b.begin(), b.end());
        const double diam = asgd::diameter_sq(joint);
        CHECK(asgd::distance_sq(asgd::mid_extremes(a), asgd::mid_extremes(b)) <= 7.0 / 8.0 * diam);
        const Vector own_a = a[size(rng) % a.size()];
        const Vector own_b = b[size(rng) % b.size()];
        CHECK(asgd::distance_sq(asgd::approach_extreme(a, own_a), asgd::approach_extreme(b, own_b)) <=
              31.0 / 32.0 * diam);
    }
}
