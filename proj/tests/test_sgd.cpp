#include "doctest.h"

#include <memory>

#include "asgd/error.hpp"
#include "asgd/sgd.hpp"

using namespace asgd;
using namespace asgd::sgd;

namespace {

SgdConfig sc_config(std::size_t N) {
    SgdConfig c;
    c.variant = Variant::StronglyConvex;
    c.T = 3;
    c.N = N;
    c.x1 = Vector{1.0};
    c.schedule = Decreasing{2.0, 8.0};
    return c;
}

}  // namespace

TEST_CASE("learning rate schedules") {
    CHECK(learning_rate(Decreasing{2.0, 8.0}, 1) == doctest::Approx(2.0 / 9.0));
    CHECK(learning_rate(Decreasing{2.0, 8.0}, 12) == doctest::Approx(0.1));
    CHECK(learning_rate(Constant{0.05}, 7) == 0.05);
    CHECK(max_learning_rate(Decreasing{2.0, 8.0}) == doctest::Approx(2.0 / 9.0));
    CHECK_THROWS_AS(learning_rate(Constant{0.1}, 0), UsageError);
}

TEST_CASE("validation names the offending field") {
    const auto o = oracle::Oracle::quadratic(1.0, 4.0, Vector{0.0}, 1.0);
    auto c = sc_config(4);
    try {
        validate(c, o, 5, 2);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "algorithm.N");
        CHECK(std::string(e.what()).find("N <= n - f") != std::string::npos);
    }
    CHECK_NOTHROW(validate(c, o, 6, 2));
    c.x1 = Vector{1.0, 2.0};
    CHECK_THROWS_AS(validate(c, o, 6, 2), ConfigError);
    c = sc_config(2);
    c.schedule = Decreasing{0.5, 8.0};  // beta <= 1/mu
    try {
        validate(c, o, 4, 0);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "algorithm.schedule.beta");
    }
    c.schedule = Constant{0.5};  // eta > 1/L
    CHECK_THROWS_AS(validate(c, o, 4, 0), ConfigError);
    c.enforce_step_bounds = false;
    CHECK_NOTHROW(validate(c, o, 4, 0));

    SgdConfig nc;
    nc.variant = Variant::NonConvex;
    nc.T = 4;
    nc.N = 2;
    nc.x1 = Vector{0.5};
    nc.schedule = Constant{0.005};
    nc.tau = 5;
    const auto w = oracle::Oracle::double_well(1, 2.0, 0.3);
    try {
        validate(nc, w, 4, 0);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "algorithm.tau");
    }
    nc.tau = 2;
    CHECK_NOTHROW(validate(nc, w, 4, 0));
    nc.schedule = Constant{0.1};  // > 1/(4L) with L = 44
    CHECK_THROWS_AS(validate(nc, w, 4, 0), ConfigError);
}

TEST_CASE("strongly convex process averages exactly the first N parameters") {
    const auto o = oracle::Oracle::quadratic(1.0, 1.0, Vector{0.0}, 0.0);
    auto c = sc_config(2);
    StronglyConvexProcess p(0, c, o);
    Rng rng(1);
    // Another process's round-1 value arrives before the own computation.
    p.on_message(1, 3, Vector{4.0});
    CHECK(p.iteration() == 1);
    const Vector y = p.compute(rng);
    // eta_1 = 2/9, gradient at 1 is 1: y = 7/9
    CHECK(y[0] == doctest::Approx(7.0 / 9.0));
    CHECK(p.iteration() == 2);
    CHECK(p.x()[0] == asgd::mean(std::vector<Vector>{y, Vector{4.0}})[0]);
    auto j = p.take_journal();
    REQUIRE(j.size() == 1);
    CHECK(j[0].senders == std::vector<ProcessId>{0, 3});
    // Late round-1 message is stale and ignored; extra round-2 messages beyond N are dropped.
    const Vector before = p.x();
    p.on_message(1, 5, Vector{100.0});
    p.on_message(2, 1, Vector{1.0});
    p.on_message(2, 2, Vector{2.0});
    p.on_message(2, 4, Vector{50.0});
    CHECK(p.x() == before);
    p.compute(rng);
    // Own value was the third round-2 message: the average uses senders 1 and 2 only.
    CHECK(p.iteration() == 3);
    CHECK(p.x() == Vector{1.5});
    j = p.take_journal();
    REQUIRE(j.size() == 1);
    CHECK(j[0].senders == std::vector<ProcessId>{1, 2});
}

TEST_CASE("effective gradient") {
    CHECK(effective_gradient(Vector{1.0}, Vector{0.5}, 0.25) == Vector{2.0});
    CHECK_THROWS_AS(effective_gradient(Vector{1.0}, Vector{0.5}, 0.0), UsageError);
}

TEST_CASE("non-convex process with a single cluster of one") {
    const auto o = oracle::Oracle::double_well(1, 2.0, 0.0);
    SgdConfig c;
    c.variant = Variant::NonConvex;
    c.T = 2;
    c.N = 1;
    c.x1 = Vector{0.5};
    c.schedule = Constant{0.01};
    c.tau = 2;
    const std::vector<ClusterId> cluster_of{0};
    NonConvexProcess p(0, 0, 1, cluster_of, 1, c, o);
    Rng rng(1);
    maa::RoundRegisterBank* bank = nullptr;
    std::vector<std::unique_ptr<maa::RoundRegisterBank>> banks;
    std::size_t bank_round = 0;
    double x = 0.5;
    for (std::size_t t = 1; t <= 2; ++t) {
        REQUIRE(p.want() == Want::Compute);
        p.compute(rng, nullptr);
        bank = nullptr;
        x -= 0.01 * 4 * x * (x * x - 1);
        while (!p.finished() && p.iteration() == t) {
            const Want w = p.want();
            if (w == Want::Send) {
                p.take_send(nullptr);
                continue;
            }
            REQUIRE((w == Want::Write || w == Want::Read));
            if (!bank || bank_round != p.maa().round()) {
                banks.push_back(std::make_unique<maa::RoundRegisterBank>(1, p.maa().smmaa().rounds()));
                bank = banks.back().get();
                bank_round = p.maa().round();
            }
            maa::smmaa_step(p.maa().smmaa(), *bank, nullptr);
            p.after_register_step(nullptr);
        }
        CHECK(p.x()[0] == doctest::Approx(x).epsilon(1e-14));
    }
    CHECK(p.finished());
    CHECK(p.output()[0] == doctest::Approx(0.5 - 0.01 * 4 * 0.5 * (0.25 - 1)));
}
