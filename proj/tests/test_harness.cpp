#include "doctest.h"

#include <cmath>
#include <sstream>

#include "asgd/error.hpp"
#include "asgd/harness.hpp"
#include "asgd/sim.hpp"

using namespace asgd;
using namespace asgd::harness;

namespace {

Scenario small_sc(double sigma) {
    Scenario s;
    s.n = 4;
    s.m = 1;
    s.algorithm.variant = sgd::Variant::StronglyConvex;
    s.algorithm.T = 20;
    s.algorithm.N = 2;
    s.algorithm.schedule = sgd::Decreasing{2.0, 8.0};
    s.algorithm.x1 = Vector{1.0, 1.0};
    s.oracle = OracleSpec{OracleSpec::Kind::Quadratic, 2, 1.0, 4.0, sigma, 2.0, std::nullopt};
    return s;
}

Scenario small_nc(double sigma) {
    Scenario s;
    s.n = 4;
    s.m = 2;
    s.algorithm.variant = sgd::Variant::NonConvex;
    s.algorithm.T = 10;
    s.algorithm.N = 2;
    s.algorithm.schedule = sgd::Constant{0.1};
    s.algorithm.enforce_step_bounds = false;
    s.algorithm.x1 = Vector{0.2};
    s.oracle = OracleSpec{OracleSpec::Kind::DoubleWell, 1, 1.0, 1.0, sigma, 2.0, std::nullopt};
    return s;
}

}  // namespace

TEST_CASE("fit_rate recovers exact power laws") {
    std::vector<std::pair<double, double>> a, b;
    for (double T : {16.0, 64.0, 256.0, 1024.0}) {
        a.emplace_back(T, 3.0 / T);
        b.emplace_back(T, 0.5 / std::sqrt(T));
    }
    const auto fa = fit_rate(a);
    CHECK(fa.slope == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::exp(fa.intercept) == doctest::Approx(3.0));
    CHECK(fa.r_squared == doctest::Approx(1.0));
    CHECK(fit_rate(b).slope == doctest::Approx(-0.5).epsilon(1e-12));

    std::vector<std::pair<double, double>> two{{1.0, 1.0}, {2.0, 0.5}};
    CHECK_THROWS_AS(fit_rate(two), UsageError);
    std::vector<std::pair<double, double>> zero{{1.0, 1.0}, {2.0, 0.0}, {4.0, 0.25}};
    CHECK_THROWS_AS(fit_rate(zero), UsageError);
}

TEST_CASE("summarize") {
    const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
    const auto s = summarize(xs);
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK(s.stderr_ == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
    CHECK(s.n == 4);
    const std::vector<double> one{7.0};
    CHECK(summarize(one).stderr_ == 0.0);
}

TEST_CASE("noise-free runs: every seed agrees") {
    const auto m = estimate(small_sc(0.0), 6, 3);
    REQUIRE(m.complete);
    CHECK(m.internal_err.mean == 0.0);
    CHECK(m.delta.mean == 0.0);
    CHECK(m.external_err.stderr_ == 0.0);
    CHECK(m.diameter_series.size() == 21);
}

TEST_CASE("estimate does not depend on the worker count") {
    const auto s = small_sc(1.0);
    ::setenv("ASGD_THREADS", "1", 1);
    const auto a = estimate(s, 8, 11);
    ::setenv("ASGD_THREADS", "4", 1);
    const auto b = estimate(s, 8, 11);
    ::unsetenv("ASGD_THREADS");
    CHECK(a.external_err.mean == b.external_err.mean);
    CHECK(a.internal_err.mean == b.internal_err.mean);
    CHECK(a.grad_sq_series == b.grad_sq_series);
}

TEST_CASE("sqrt(N/T) rule resolves to a constant rate") {
    auto s = small_nc(0.1);
    s.lr_rule = LrRule::SqrtNOverT;
    s.algorithm.T = 32;
    s.algorithm.N = 2;
    const auto setup = resolve(s, 5);
    REQUIRE(std::holds_alternative<sgd::Constant>(setup.algorithm.schedule));
    CHECK(std::get<sgd::Constant>(setup.algorithm.schedule).eta == doctest::Approx(0.25));
    CHECK(setup.algorithm.tau >= 1);
    CHECK(setup.algorithm.tau <= 32);
}

TEST_CASE("sweep expansion order and hashes") {
    EnsembleSpec e{small_sc(1.0), 2, 1, {}};
    e.sweep.T = {10, 20};
    e.sweep.N = {1, 2, 3};
    const auto cfgs = expand(e);
    REQUIRE(cfgs.size() == 6);
    CHECK(cfgs[0].scenario.algorithm.T == 10);
    CHECK(cfgs[0].scenario.algorithm.N == 1);
    CHECK(cfgs[1].scenario.algorithm.N == 2);
    CHECK(cfgs[3].scenario.algorithm.T == 20);
    CHECK(cfgs[0].hash != cfgs[1].hash);
    CHECK(expand(e)[4].hash == cfgs[4].hash);
    e.seeds = 0;
    CHECK_THROWS_AS(expand(e), UsageError);
}

TEST_CASE("contraction report skips rounds that start in agreement") {
    sim::StandaloneMaa cfg;
    cfg.level = maa::Level::Cluster;
    cfg.q = 0.25;
    cfg.inputs.assign(3, Vector{1.5, -2.0});
    sim::Schedule sched;
    const auto tr = sim::run(sim::Topology::even(3, 3), {}, sched, cfg);
    REQUIRE(tr.ok());
    const auto rep = contraction_report(std::span<const sim::RunTrace>(&tr, 1), maa::RoundContext::ClusterMidExt);
    CHECK(rep.samples == 0);
    CHECK(rep.skipped == tr.iterations);
    CHECK(rep.violations == 0);
    CHECK(rep.bound == doctest::Approx(23.0 / 24.0));
}

TEST_CASE("contraction report on spread inputs") {
    sim::StandaloneMaa cfg;
    cfg.level = maa::Level::Cluster;
    cfg.q = 0.1;
    cfg.inputs = {Vector{0.0}, Vector{1.0}, Vector{5.0}, Vector{-3.0}, Vector{2.0}};
    sim::Schedule sched;
    sched.d_max = 20;
    const auto tr = sim::run(sim::Topology::even(5, 5), {}, sched, cfg);
    REQUIRE(tr.ok());
    const auto rep = contraction_report(std::span<const sim::RunTrace>(&tr, 1), maa::RoundContext::ClusterMidExt);
    CHECK(rep.samples + rep.skipped + rep.unresolved == tr.iterations);
    CHECK(rep.samples >= 1);
    CHECK(rep.violations == 0);
}

TEST_CASE("divergence demo") {
    auto s = small_nc(0.0);
    s.algorithm.cluster_quorum = 1;
    SUBCASE("no noise, equal starts: both sides follow the same path") {
        const auto d = divergence_demo(s, {{0, 1}, {2, 3}}, 3, 1);
        REQUIRE(d.complete);
        CHECK(d.cross_dist_sq.mean == 0.0);
    }
    SUBCASE("sides sharing a cluster are rejected") {
        CHECK_THROWS_AS(divergence_demo(s, {{0, 2}, {1, 3}}, 3, 1), UsageError);
    }
}

TEST_CASE("sequential landing without noise is deterministic") {
    auto s = small_nc(0.0);
    s.algorithm.T = 200;
    s.algorithm.x1 = Vector{0.3};
    const auto l = sequential_landing(s, 2, 5, 1);
    CHECK(l.runs == 5);
    CHECK(l.plus == 1.0);
    CHECK(l.minus == 0.0);
}

TEST_CASE("liveness violations are reported, not averaged") {
    auto s = small_sc(1.0);
    s.schedule.event_budget = 10;
    const auto m = estimate(s, 3, 1);
    CHECK_FALSE(m.complete);
    CHECK(m.failures.size() == 3);
    std::vector<ConfigResult> r{{Configuration{s, 1}, m}};
    CHECK(to_csv(r).find("liveness_violations") != std::string::npos);
}

TEST_CASE("csv layout") {
    std::vector<ConfigResult> r{{Configuration{small_sc(0.5), 42}, estimate(small_sc(0.5), 2, 1)}};
    const auto csv = to_csv(r);
    std::istringstream in(csv);
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "config_hash,T,N,n,sigma,d_max,stat,mean,stderr,n_seeds");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 9);
    }
    CHECK(rows >= 3);
    CHECK(to_json(r).find("\"asgd-metrics\"") != std::string::npos);
}

TEST_CASE("validation names fields") {
    auto s = small_sc(1.0);
    s.algorithm.N = 9;
    CHECK_THROWS_AS(validate(s), ConfigError);
    auto t = small_nc(1.0);
    t.algorithm.q_schedule = {0.1, 0.2};
    try {
        validate(t);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path().rfind("algorithm", 0) == 0);
    }
}
