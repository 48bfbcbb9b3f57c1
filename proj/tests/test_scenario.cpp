#include "doctest.h"

#include <string>

#include "asgd/error.hpp"
#include "asgd/scenario.hpp"

using namespace asgd;

namespace {

const char* kBase = R"({
  "schema": 1,
  "topology": {"n": 6, "clusters": 3},
  "faults": {"crashes": [{"process": 5, "at_iteration": 3}]},
  "algorithm": {"variant": "non_convex", "T": 40, "N": 2,
                "schedule": {"kind": "constant", "eta": 0.05}, "q_t": 0.2, "tau": 7,
                "enforce_step_bounds": false},
  "oracle": {"kind": "double_well", "d": 2, "sigma": 0.3, "x1": [0.5, -0.5]},
  "schedule": {"seed": 9, "D_max": 6},
  "ensemble": {"S": 12, "seed_root": 4, "sweeps": {"T": [20, 40]}}
})";

std::string error_path(const std::string& text, const std::vector<std::string>& sets = {}) {
    try {
        scenario::parse(text, sets);
    } catch (const ConfigError& e) {
        return e.path();
    }
    return "";
}

}  // namespace

TEST_CASE("parse a full scenario") {
    const auto e = scenario::parse(kBase);
    CHECK(e.base.n == 6);
    CHECK(e.base.topology().m() == 3);
    CHECK(e.base.algorithm.variant == sgd::Variant::NonConvex);
    CHECK(e.base.algorithm.T == 40);
    CHECK(std::get<sgd::Constant>(e.base.algorithm.schedule).eta == 0.05);
    CHECK(e.base.algorithm.tau == 7);
    CHECK_FALSE(e.base.random_tau);
    REQUIRE(e.base.faults.crashes.size() == 1);
    CHECK(e.base.faults.crashes[0].trigger == sim::Crash::Trigger::AtIteration);
    CHECK(e.base.algorithm.x1 == Vector{0.5, -0.5});
    CHECK(e.base.schedule.d_max == 6);
    CHECK(e.seeds == 12);
    CHECK(e.sweep.T == std::vector<std::size_t>{20, 40});
}

TEST_CASE("canonical text round-trips") {
    const auto e = scenario::parse(kBase);
    const auto text = scenario::to_text(e);
    const auto again = scenario::parse(text);
    CHECK(scenario::to_text(again) == text);
    CHECK(scenario::to_text(again.base) == scenario::to_text(e.base));
}

TEST_CASE("unknown fields are rejected with their path") {
    std::string t = kBase;
    t.replace(t.find("\"tau\""), 5, "\"tua\"");
    CHECK(error_path(t) == "algorithm.tua");
    CHECK(error_path(R"({"algorithm": {"variant": "strongly_convex", "T": 4}, "oracle": {"kind": "cubic"}})") == "oracle.kind");
    CHECK(error_path(R"({"oracle": {}})") == "algorithm");
    CHECK(error_path(R"({"schema": 2, "algorithm": {}, "oracle": {}})") == "schema");
    CHECK(error_path("{not json") == "$");
}

TEST_CASE("type errors carry paths") {
    CHECK(error_path(kBase, {"algorithm.T=\"many\""}) == "algorithm.T");
    CHECK(error_path(kBase, {"oracle.x1=[1, \"a\"]"}) == "oracle.x1[1]");
    CHECK(error_path(kBase, {"algorithm.N=10"}).rfind("algorithm.N", 0) == 0);
}

TEST_CASE("overrides") {
    const auto e = scenario::parse(kBase, {"algorithm.T=64", "oracle.sigma=0", "algorithm.maa_rule=approach_extreme"});
    CHECK(e.base.algorithm.T == 64);
    CHECK(e.base.oracle.sigma == 0.0);
    CHECK(e.base.algorithm.rule == maa::Rule::ApproachExtreme);
    CHECK(error_path(kBase, {"noequals"}) == "--set");
    CHECK(error_path(kBase, {"algorithm.T.x=1"}) == "--set");
}

TEST_CASE("explicit cluster lists") {
    const auto e = scenario::parse(R"({"topology": {"n": 3, "clusters": [[0], [1, 2]]},
        "algorithm": {"variant": "strongly_convex", "T": 5, "N": 1}, "oracle": {"kind": "quadratic", "d": 1, "x1": [1]}})");
    CHECK(e.base.topology().m() == 2);
    CHECK(e.base.topology().members(1).size() == 2);
    CHECK(error_path(R"({"topology": {"n": 4, "clusters": [[0], [1, 2]]},
        "algorithm": {"variant": "strongly_convex", "T": 5, "N": 1}, "oracle": {"kind": "quadratic", "d": 1, "x1": [1]}})") == "topology.n");
}
