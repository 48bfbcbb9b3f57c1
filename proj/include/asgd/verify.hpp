#pragma once

// Acceptance checks, numbered 1-12, grouped into named suites. Shared by the
// `asgd verify` command and the acceptance test binary.

#include <iosfwd>
#include <string>
#include <vector>

namespace asgd::verify {

struct Check {
    int criterion = 0;
    std::string title;
    bool passed = false;
    std::string bound;     // what was required
    std::string observed;  // what was measured
    std::vector<std::string> notes;
    double seconds = 0.0;
};

struct Options {
    /// Scaled-down sample counts for a fast smoke run. Runtime limits are not
    /// checked and the line is marked "quick".
    bool quick = false;
    /// Progress lines, or nullptr.
    std::ostream* log = nullptr;
};

inline constexpr int kCriteria = 12;

/// Runs one criterion. Throws UsageError outside [1, 12].
Check run(int criterion, const Options& options = {});

/// contraction, variance, convergence, faults, divergence, determinism, all.
const std::vector<std::string>& suite_names();
/// Criteria of a suite. Throws UsageError for unknown names.
std::vector<int> suite(const std::string& name);

/// "PASS  7 <title>: <observed> (<bound>) [12.3 s]"
std::string format(const Check& check);

}  // namespace asgd::verify
