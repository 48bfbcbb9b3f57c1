#include "doctest.h"

#include <random>

#include "asgd/error.hpp"
#include "asgd/sim.hpp"

using namespace asgd;
using namespace asgd::sim;

namespace {

sgd::SgdConfig strongly_convex(std::size_t T, std::size_t N, Vector x1) {
    sgd::SgdConfig c;
    c.variant = sgd::Variant::StronglyConvex;
    c.T = T;
    c.N = N;
    c.x1 = std::move(x1);
    c.schedule = sgd::Decreasing{2.0, 8.0};
    return c;
}

sgd::SgdConfig non_convex(std::size_t T, std::size_t N, double eta, Vector x1) {
    sgd::SgdConfig c;
    c.variant = sgd::Variant::NonConvex;
    c.T = T;
    c.N = N;
    c.x1 = std::move(x1);
    c.schedule = sgd::Constant{eta};
    c.tau = T;
    return c;
}

std::vector<Vector> random_inputs(std::uint64_t seed, std::size_t n, std::size_t d) {
    Rng rng(seed);
    std::normal_distribution<double> nd;
    std::vector<Vector> out;
    for (std::size_t i = 0; i < n; ++i) {
        Vector v(d);
        for (auto& c : v.coords()) c = nd(rng);
        out.push_back(v);
    }
    return out;
}

}  // namespace

TEST_CASE("topology construction") {
    const auto t = Topology::even(7, 3);
    CHECK(t.m() == 3);
    CHECK(t.members(0).size() == 3);
    CHECK(t.members(2).size() == 2);
    CHECK(t.cluster(6) == 2);
    CHECK(t.slot(3) == 0);
    CHECK_THROWS_AS(Topology::from_clusters({{0, 1}, {1}}), ConfigError);
    CHECK_THROWS_AS(Topology::from_clusters({{0}, {}}), ConfigError);
    CHECK_THROWS_AS(Topology::from_clusters({{0, 5}}), ConfigError);
    CHECK_THROWS_AS(Topology::even(2, 3), ConfigError);
}

TEST_CASE("single process without noise reproduces sequential SGD exactly") {
    const auto o = oracle::Oracle::quadratic(1.0, 4.0, Vector{1.0, -1.0, 0.5}, 0.0);
    const auto cfg = strongly_convex(40, 1, Vector{3.0, 2.0, -4.0});
    const auto trace = run(Topology::even(1, 1), {}, {}, cfg, o);
    REQUIRE(trace.ok());
    Rng rng(0);
    const Vector seq = oracle::sequential_sgd(o, 40, cfg.schedule, 1, cfg.x1, rng);
    REQUIRE(trace.outputs[0]);
    CHECK(*trace.outputs[0] == seq);
}

TEST_CASE("equal starts without noise keep every parameter equal") {
    const auto o = oracle::Oracle::quadratic(1.0, 4.0, Vector{1.0, 2.0}, 0.0);
    const auto trace = run(Topology::even(5, 5), {}, {7}, strongly_convex(20, 3, Vector{0.0, 0.0}), o);
    REQUIRE(trace.ok());
    const std::vector<std::string> props{"equal_parameters", "quorum_composition", "stale_filtering", "vt_monotone",
                                         "outputs_present"};
    const auto report = audit(trace, props);
    for (const auto& f : report.findings) CHECK_MESSAGE(f.passed, f.property << ": " << f.detail);
}

TEST_CASE("same seed gives byte-identical traces") {
    const auto o = oracle::Oracle::quadratic(1.0, 4.0, Vector{1.0, 2.0}, 1.0);
    TraceOptions opts;
    opts.events = true;
    const auto a = run(Topology::even(4, 2), {}, {42, 3}, strongly_convex(10, 2, Vector{0.0, 0.0}), o, opts);
    const auto b = run(Topology::even(4, 2), {}, {42, 3}, strongly_convex(10, 2, Vector{0.0, 0.0}), o, opts);
    CHECK(export_trace(a) == export_trace(b));
    const auto c = run(Topology::even(4, 2), {}, {43, 3}, strongly_convex(10, 2, Vector{0.0, 0.0}), o, opts);
    CHECK(export_trace(a) != export_trace(c));
    const std::string text = export_trace(a);
    CHECK(text.rfind("{\"diagnosis\":\"\",\"dim\":2,\"events\":", 0) == 0);
    CHECK(text.find("\"format\":\"asgd-trace\"") != std::string::npos);
}

TEST_CASE("asynchrony: processes run in different iterations at once") {
    const auto o = oracle::Oracle::quadratic(1.0, 4.0, Vector{0.0}, 1.0);
    std::uint32_t spread = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto t = run(Topology::even(6, 3), {}, {seed, 4}, strongly_convex(30, 2, Vector{1.0}), o);
        REQUIRE(t.ok());
        spread = std::max(spread, t.max_iteration_spread);
    }
    CHECK(spread >= 1);
}

TEST_CASE("crashing a whole cluster leaves the non-convex variant live") {
    const auto o = oracle::Oracle::double_well(1, 2.0, 0.3);
    const auto topo = Topology::even(6, 3);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        FaultPlan faults;
        faults.crashes = {{2, Crash::Trigger::AtEvent, seed % 4}, {3, Crash::Trigger::AtIteration, 2}};
        faults.f = 2;
        faults.f_c = 1;
        const auto trace = run(topo, faults, {seed}, non_convex(3, 2, 0.005, Vector{0.5}), o);
        CHECK_MESSAGE(trace.ok(), trace.diagnosis);
        for (ProcessId p : {0u, 1u, 4u, 5u}) CHECK(trace.outputs[p].has_value());
        CHECK(trace.crashed[2]);
        CHECK(trace.crashed[3]);
    }
}

TEST_CASE("losing the cluster majority is reported as a liveness violation") {
    const auto o = oracle::Oracle::double_well(1, 2.0, 0.3);
    FaultPlan faults;
    faults.crashes = {{0, Crash::Trigger::AtEvent, 0}, {1, Crash::Trigger::AtEvent, 0}};
    auto cfg = non_convex(2, 1, 0.005, Vector{0.5});
    CHECK_THROWS_AS(run(Topology::even(3, 3), faults, {1}, cfg, o), ConfigError);
    cfg.assume_cluster_majority = false;
    const auto trace = run(Topology::even(3, 3), faults, {1}, cfg, o);
    CHECK(trace.status == Status::LivenessViolation);
    CHECK(trace.diagnosis.find("process 2 blocked") != std::string::npos);
}

TEST_CASE("event budget exhaustion is a liveness violation") {
    const auto o = oracle::Oracle::quadratic(1.0, 4.0, Vector{0.0}, 1.0);
    Schedule s;
    s.event_budget = 50;
    const auto trace = run(Topology::even(3, 1), {}, s, strongly_convex(100, 2, Vector{1.0}), o);
    CHECK(trace.status == Status::LivenessViolation);
    CHECK(trace.diagnosis.find("budget") != std::string::npos);
}

TEST_CASE("progress condition is checked before running") {
    const auto o = oracle::Oracle::quadratic(1.0, 4.0, Vector{0.0}, 1.0);
    FaultPlan faults;
    faults.f = 2;
    try {
        run(Topology::even(4, 2), faults, {}, strongly_convex(5, 3, Vector{1.0}), o);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "algorithm.N");
    }
}

TEST_CASE("partition injection") {
    const auto topo = Topology::even(2, 2);
    CHECK_NOTHROW(inject_partition(topo, {}, {{0}, {1}}));
    const auto five = Topology::even(10, 5);
    CHECK_NOTHROW(inject_partition(five, {}, {{0, 1, 2, 3}, {4, 5, 6, 7, 8, 9}}));
    CHECK_THROWS_AS(inject_partition(five, {}, {{0, 1, 2}, {3, 4}}), UsageError);
    CHECK_THROWS_AS(inject_partition(topo, {}, {{0}, {0}}), UsageError);

    // Each side runs solo when the quorum is one cluster.
    StandaloneMaa m;
    m.inputs = {Vector{0.0}, Vector{1.0}};
    m.q = 0.5;
    m.quorum_clusters = 1;
    const auto plan = inject_partition(topo, {}, {{0}, {1}});
    const auto trace = run(topo, plan, {3}, m);
    REQUIRE(trace.ok());
    CHECK(*trace.outputs[0] == Vector{0.0});
    CHECK(*trace.outputs[1] == Vector{1.0});
    CHECK(trace.counters.messages_deferred > 0);
}

TEST_CASE("cluster MAA on three singleton clusters") {
    StandaloneMaa m;
    m.inputs = {Vector{0.0}, Vector{1.0}, Vector{1.0}};
    m.q = 0.5;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const auto trace = run(Topology::even(3, 3), {}, {seed}, m);
        REQUIRE(trace.ok());
        std::vector<Vector> outs;
        for (const auto& o : trace.outputs) {
            REQUIRE(o);
            CHECK((*o)[0] >= 0.0);
            CHECK((*o)[0] <= 1.0);
            outs.push_back(*o);
        }
        CHECK(diameter_sq(outs) <= 0.5);
    }
}

TEST_CASE("cluster MAA survives a minority of crashed clusters") {
    const auto topo = Topology::even(10, 5);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        StandaloneMaa m;
        m.inputs = random_inputs(seed, 10, 4);
        m.q = 0.25;
        FaultPlan faults;
        faults.crashes = {{0, Crash::Trigger::AtEvent, 0}, {1, Crash::Trigger::AtEvent, 0},
                          {2, Crash::Trigger::AtEvent, 0}, {3, Crash::Trigger::AtEvent, 0}};
        faults.f_c = 2;
        const auto trace = run(topo, faults, {seed}, m);
        REQUIRE(trace.ok());
        std::vector<Vector> outs, ins;
        for (ProcessId p = 4; p < 10; ++p) {
            REQUIRE(trace.outputs[p]);
            outs.push_back(*trace.outputs[p]);
            ins.push_back(m.inputs[p]);
        }
        CHECK(diameter_sq(outs) <= 0.25 * diameter_sq(ins));
    }
}

TEST_CASE("register reads are consistent with the write order") {
    StandaloneMaa m;
    m.level = maa::Level::SharedMemory;
    m.q = 1.0 / 6.0;
    m.inputs = random_inputs(5, 4, 3);
    TraceOptions opts;
    opts.registers = true;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto trace = run(Topology::even(4, 1), {}, {seed}, m, opts);
        REQUIRE(trace.ok());
        CHECK(trace.counters.register_reads > 0);
        const std::vector<std::string> props{"register_consistency"};
        CHECK(audit(trace, props).passed());
    }
    // A tampered log fails.
    auto trace = run(Topology::even(4, 1), {}, {1}, m, opts);
    for (auto& r : trace.registers)
        if (!r.is_write && r.value) {
            (*r.value)[0] += 1.0;
            break;
        }
    const std::vector<std::string> props{"register_consistency"};
    CHECK_FALSE(audit(trace, props).passed());
}

TEST_CASE("stale-message use is caught by the audit") {
    RunTrace t;
    t.n = 2;
    t.quorum_N = 1;
    t.aggregations.push_back({5, AggregationRecord::Kind::ParamAverage, 0, 3, 0, {1}, {3}, Vector{0.0}});
    t.aggregations.push_back({9, AggregationRecord::Kind::ParamAverage, 1, 4, 0, {0}, {3}, Vector{0.0}});
    const std::vector<std::string> props{"stale_filtering"};
    const auto report = audit(t, props);
    REQUIRE(report.findings.size() == 1);
    CHECK_FALSE(report.findings[0].passed);
    CHECK(report.findings[0].events == std::vector<std::uint64_t>{9});
    const std::vector<std::string> bad{"no_such_property"};
    CHECK_THROWS_AS(audit(t, bad), UsageError);
}

TEST_CASE("convexity witnesses") {
    TraceOptions opts;
    opts.witness = true;

    SUBCASE("two inputs, one round") {
        StandaloneMaa m;
        m.level = maa::Level::SharedMemory;
        m.rounds = 1;
        const Vector a{1.0, 3.0}, b{2.0, -1.0};
        m.inputs = {a, b};
        bool saw_midpoint = false;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const auto trace = run(Topology::even(2, 1), {}, {seed}, m, opts);
            for (const auto& w : extract_convexity_witness(trace)) {
                CHECK(replay_witness(trace, w, *trace.outputs[w.process]));
                if (*trace.outputs[w.process] == midpoint(a, b)) {
                    saw_midpoint = true;
                    REQUIRE(w.chain.size() == 1);
                    CHECK(trace.witness.node(w.chain[0].left).value == a);
                    CHECK(trace.witness.node(w.chain[0].right).value == b);
                }
            }
        }
        CHECK(saw_midpoint);
    }

    SUBCASE("equal inputs") {
        StandaloneMaa m;
        m.inputs.assign(6, Vector{0.1, 0.2, 0.3});
        m.q = 0.5;
        const auto trace = run(Topology::even(6, 3), {}, {2}, m, opts);
        for (const auto& w : extract_convexity_witness(trace)) {
            CHECK(replay_witness(trace, w, Vector{0.1, 0.2, 0.3}));
            for (const auto& step : w.chain) CHECK(step.value == Vector{0.1, 0.2, 0.3});
        }
    }

    SUBCASE("random runs replay bit-exactly") {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            StandaloneMaa m;
            m.rule = seed % 2 ? maa::Rule::MidExtremes : maa::Rule::ApproachExtreme;
            m.inputs = random_inputs(seed, 6, 3);
            m.q = 0.5;
            const auto trace = run(Topology::even(6, 3), {}, {seed}, m, opts);
            REQUIRE(trace.ok());
            const std::vector<std::string> props{"convexity_witness"};
            CHECK(audit(trace, props).passed());
            // A perturbed output no longer matches.
            const auto ws = extract_convexity_witness(trace);
            Vector wrong = *trace.outputs[ws[0].process];
            wrong[0] = std::nextafter(wrong[0], 1e9);
            CHECK_FALSE(replay_witness(trace, ws[0], wrong));
        }
    }

    SUBCASE("traces without witnesses are rejected") {
        StandaloneMaa m;
        m.inputs = {Vector{0.0}, Vector{1.0}};
        const auto trace = run(Topology::even(2, 2), {}, {1}, m);
        CHECK_THROWS_AS(extract_convexity_witness(trace), UsageError);
    }
}
