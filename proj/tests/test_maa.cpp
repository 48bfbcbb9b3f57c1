#include "doctest.h"

#include <cmath>
#include <random>

#include "asgd/error.hpp"
#include "asgd/maa.hpp"

using namespace asgd;
using namespace asgd::maa;

namespace {

// Smallest R with factor^R <= q, by counting.
std::size_t count_rounds(double q, double factor) {
    std::size_t r = 0;
    double v = 1.0;
    while (v > q) {
        v *= factor;
        ++r;
    }
    return r;
}

}  // namespace

TEST_CASE("round counts") {
    CHECK(required_rounds(1.0 / 6.0, RoundContext::SMMidExt) == 14);
    CHECK(required_rounds(1.0 / 6.0, RoundContext::SMApproachExt) == 57);
    CHECK(required_rounds(1.0 / 10.0, RoundContext::SMApproachExt) == 73);
    for (double q : {0.5, 0.25, 0.1, 1e-3, 0.9}) {
        for (auto ctx : {RoundContext::SMMidExt, RoundContext::SMApproachExt, RoundContext::ClusterMidExt,
                         RoundContext::ClusterApproachExt})
            CHECK(required_rounds(q, ctx) == count_rounds(q, round_factor(ctx)));
    }
    CHECK_THROWS_AS(required_rounds(0.0, RoundContext::SMMidExt), UsageError);
    CHECK_THROWS_AS(required_rounds(1.0, RoundContext::SMMidExt), UsageError);
    CHECK_THROWS_AS(required_rounds(-0.5, RoundContext::SMMidExt), UsageError);
}

TEST_CASE("cluster parameters") {
    const auto p = cluster_params(0.5, Rule::MidExtremes, 5);
    CHECK(p.quorum_clusters == 3);
    CHECK(p.smmaa_rounds == 14);
    CHECK(p.rounds == count_rounds(0.5, 23.0 / 24.0));
    const auto a = cluster_params(0.5, Rule::ApproachExtreme, 4);
    CHECK(a.quorum_clusters == 3);
    CHECK(a.smmaa_rounds == 73);
    CHECK(a.rounds == count_rounds(0.5, 79.0 / 80.0));
}

TEST_CASE("register bank semantics") {
    RoundRegisterBank bank(3, 2);
    CHECK_FALSE(bank.read(1, 0).has_value());
    bank.write(1, 0, 0, Point{Vector{1.5}, kNoNode});
    REQUIRE(bank.read(1, 0).has_value());
    CHECK(bank.read(1, 0)->value == Vector{1.5});
    CHECK_FALSE(bank.read(2, 0).has_value());
    CHECK_THROWS_AS(bank.write(1, 1, 0, Point{Vector{2.0}, kNoNode}), ModelViolation);
    CHECK_THROWS_AS(bank.write(1, 0, 0, Point{Vector{2.0}, kNoNode}), ModelViolation);
    CHECK_THROWS_AS(bank.read(4, 0), ModelViolation);
    CHECK_THROWS_AS(bank.read(1, 3), ModelViolation);
}

TEST_CASE("solo SMMAA returns its input") {
    SmmaaProcess p(0, 1, 5, Rule::MidExtremes, 0, Point{Vector{3.0, 4.0}, kNoNode});
    RoundRegisterBank bank(1, 5);
    int steps = 0;
    while (!p.finished()) {
        smmaa_step(p, bank, nullptr);
        ++steps;
    }
    CHECK(steps == 6);  // one write per array A_1..A_6, no foreign cells to read
    CHECK(p.output().value == Vector{3.0, 4.0});
}

TEST_CASE("hand-executed SMMAA schedule with two processes") {
    // p0 runs to completion before p1 takes a step.
    const Vector a{0.0}, b{8.0};
    RoundRegisterBank bank(2, 2);
    SmmaaProcess p0(0, 2, 2, Rule::MidExtremes, 0, Point{a, kNoNode});
    SmmaaProcess p1(1, 2, 2, Rule::MidExtremes, 1, Point{b, kNoNode});
    while (!p0.finished()) smmaa_step(p0, bank, nullptr);
    CHECK(p0.output().value == a);
    // p1: A_1 = {a, b} -> 4; A_2 = {a, 4} -> 2.
    while (!p1.finished()) smmaa_step(p1, bank, nullptr);
    CHECK(p1.output().value == Vector{2.0});
    CHECK(bank.read(3, 1)->value == Vector{2.0});
}

TEST_CASE("lockstep SMMAA schedule agrees immediately") {
    const Vector a{0.0}, b{8.0};
    RoundRegisterBank bank(2, 1);
    SmmaaProcess p0(0, 2, 1, Rule::MidExtremes, 0, Point{a, kNoNode});
    SmmaaProcess p1(1, 2, 1, Rule::MidExtremes, 1, Point{b, kNoNode});
    while (!p0.finished() || !p1.finished()) {
        smmaa_step(p0, bank, nullptr);
        smmaa_step(p1, bank, nullptr);
    }
    CHECK(p0.output().value == Vector{4.0});
    CHECK(p1.output().value == Vector{4.0});
}

TEST_CASE("aggregate records witness midpoints") {
    WitnessLog log;
    const NodeId na = log.add_input(0, Vector{0.0, 2.0});
    const NodeId nb = log.add_input(1, Vector{2.0, 0.0});
    const std::vector<Point> set{{Vector{0.0, 2.0}, na}, {Vector{2.0, 0.0}, nb}};
    const Point out = aggregate(Rule::MidExtremes, set, set[0], 0, &log);
    CHECK(out.value == Vector{1.0, 1.0});
    REQUIRE(log.contains(out.node));
    CHECK(log.node(out.node).left == na);
    CHECK(log.node(out.node).right == nb);
    CHECK_THROWS_AS(log.add_midpoint(0, 1, 99, Vector{0.0}), UsageError);
    CHECK_THROWS_AS(log.node(0), UsageError);
}

TEST_CASE("cluster MAA process waits for a majority of clusters") {
    const std::vector<ClusterId> cluster_of{0, 1, 2};
    ClusterMaaParams params{Rule::MidExtremes, 1, 1, 2};
    ClusterMaaProcess p(0, 0, 1, cluster_of, params, Point{Vector{0.0}, kNoNode});
    RoundRegisterBank bank(1, 1);
    while (p.want() == Want::Write || p.want() == Want::Read) smmaa_step(p.smmaa(), bank, nullptr);
    REQUIRE(p.want() == Want::Send);
    const MaaMessage sent = p.take_send(nullptr);
    CHECK(sent.round == 1);
    CHECK(p.want() == Want::Wait);
    p.on_message({2, 1, Point{Vector{100.0}, kNoNode}}, nullptr);  // future round: buffered only
    CHECK(p.want() == Want::Wait);
    p.on_message({1, 2, Point{Vector{1.0}, kNoNode}}, nullptr);
    CHECK(p.finished());
    CHECK(p.output().value == Vector{0.5});
    CHECK(p.last_quorum() == std::vector<ProcessId>{0, 2});
    p.on_message({1, 1, Point{Vector{5.0}, kNoNode}}, nullptr);  // stale, ignored
    CHECK(p.output().value == Vector{0.5});
}

TEST_CASE("SMMAA contraction on random lockstep-free schedules") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + trial % 5;
        const std::size_t R = required_rounds(1.0 / 6.0, RoundContext::SMMidExt);
        RoundRegisterBank bank(k, R);
        std::vector<SmmaaProcess> procs;
        std::vector<Vector> inputs;
        for (std::size_t i = 0; i < k; ++i) {
            Vector v(3);
            for (std::size_t c = 0; c < 3; ++c) v[c] = nd(rng);
            inputs.push_back(v);
            procs.emplace_back(i, k, R, Rule::MidExtremes, static_cast<ProcessId>(i), Point{v, kNoNode});
        }
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        std::size_t live = k;
        while (live > 0) {
            auto& p = procs[pick(rng)];
            if (p.finished()) continue;
            smmaa_step(p, bank, nullptr);
            if (p.finished()) --live;
        }
        std::vector<Vector> outs;
        for (auto& p : procs) outs.push_back(p.output().value);
        CHECK(diameter_sq(outs) <= diameter_sq(inputs) / 6.0 + 1e-15);
    }
}
