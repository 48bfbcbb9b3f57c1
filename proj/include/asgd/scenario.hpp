#pragma once

// JSON scenario files, schema version 1.
//
//   {
//     "schema": 1,
//     "topology":  {"n": 6, "clusters": 3}          (or "clusters": [[0,1],[2,3],[4,5]])
//     "faults":    {"crashes": [{"process": 2, "at_iteration": 5}], "partition": {"a": [..], "b": [..]},
//                   "f": 1, "f_c": 0}
//     "algorithm": {"variant": "strongly_convex" | "non_convex", "T": 64, "N": 4,
//                   "schedule": {"kind": "decreasing", "beta": 2, "gamma": 8}
//                             | {"kind": "constant", "eta": 0.05} | {"kind": "sqrt_n_over_t"},
//                   "q_t": 0.01 | [..T values..], "maa_rule": "mid_extremes" | "approach_extreme",
//                   "tau": 7, "cluster_quorum": 2, "assume_cluster_majority": true,
//                   "enforce_step_bounds": true}
//     "oracle":    {"kind": "quadratic" | "double_well", "d": 2, "mu": 1, "L": 4, "sigma": 1,
//                   "radius": 2, "x_star": [..], "x1": [..]}
//     "schedule":  {"seed": 1, "D_max": 4, "local_max": 2, "event_budget": 10000000}
//     "ensemble":  {"S": 200, "seed_root": 1, "sweeps": {"T": [..], "N": [..], "n": [..], "sigma": [..],
//                   "D_max": [..]}}
//   }
//
// Only "algorithm" and "oracle" are required. Unknown keys are rejected.
// Errors are ConfigError with the JSON path of the field.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "asgd/harness.hpp"

namespace asgd::scenario {

inline constexpr int kSchemaVersion = 1;

harness::EnsembleSpec parse(std::string_view text);
harness::EnsembleSpec load(const std::filesystem::path& path);

/// Applies "a.b.c=value" overrides to the document before parsing. The value
/// is read as JSON when it parses, as a string otherwise.
harness::EnsembleSpec parse(std::string_view text, const std::vector<std::string>& overrides);

/// Canonical text of a scenario (keys sorted, no ensemble section); parse(to_text(s)) == s.
std::string to_text(const harness::Scenario& scenario);
std::string to_text(const harness::EnsembleSpec& spec);

}  // namespace asgd::scenario
