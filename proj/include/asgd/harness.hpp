#pragma once

// Seed ensembles over simulated runs, and the statistics computed from them.
//
// Every statistic is a mean over seeds with its standard error. Seeds run in
// parallel (ASGD_THREADS caps the worker count); per-seed results are reduced
// in seed order, so totals do not depend on the thread count.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asgd/maa.hpp"
#include "asgd/oracle.hpp"
#include "asgd/sgd.hpp"
#include "asgd/sim.hpp"
#include "asgd/vecmath.hpp"

namespace asgd::harness {

struct OracleSpec {
    enum class Kind : std::uint8_t { Quadratic, DoubleWell };
    Kind kind = Kind::Quadratic;
    std::size_t d = 1;
    double mu = 1.0;
    double L = 1.0;
    double sigma = 0.0;
    double radius = 2.0;
    std::optional<Vector> x_star;  // zero when unset

    oracle::Oracle build() const;
};

/// Learning-rate rule applied per configuration. SqrtNOverT sets the constant
/// rate eta = sqrt(N / T) after the sweep has fixed N and T.
enum class LrRule : std::uint8_t { Given, SqrtNOverT };

struct Scenario {
    std::size_t n = 1;
    /// Explicit cluster lists; when empty, n processes are split evenly into `m` clusters.
    std::vector<std::vector<ProcessId>> clusters;
    std::size_t m = 1;
    sim::FaultPlan faults;
    sim::Schedule schedule;
    sgd::SgdConfig algorithm;
    LrRule lr_rule = LrRule::Given;
    /// Non-convex variant: draw tau per run from the run seed (true), or use algorithm.tau.
    bool random_tau = true;
    /// When set, tau is drawn once from this seed and shared by every run.
    std::optional<std::uint64_t> tau_seed;
    OracleSpec oracle;

    sim::Topology topology() const;
};

struct Sweep {
    std::vector<std::size_t> T;
    std::vector<std::size_t> N;
    std::vector<std::size_t> n;
    std::vector<double> sigma;
    std::vector<std::uint32_t> d_max;

    std::size_t size() const noexcept;
};

struct EnsembleSpec {
    Scenario base;
    std::size_t seeds = 1;
    std::uint64_t seed_root = 1;
    Sweep sweep;
};

/// One point of the Cartesian sweep, in lexicographic order T, N, n, sigma, d_max.
struct Configuration {
    Scenario scenario;
    std::uint64_t hash = 0;  // FNV-1a of the canonical scenario text
};

/// Expands the sweep. Throws UsageError when seeds == 0.
std::vector<Configuration> expand(const EnsembleSpec& spec);

/// Seed of run s of an ensemble rooted at `root`.
std::uint64_t run_seed(std::uint64_t root, std::size_t s) noexcept;

/// Fully resolved simulator inputs for one run of a configuration.
struct RunSetup {
    sim::Topology topology;
    sim::FaultPlan faults;
    sim::Schedule schedule;
    sgd::SgdConfig algorithm;
};

/// Applies the learning-rate rule, the run seed and the tau draw.
RunSetup resolve(const Scenario& scenario, std::uint64_t seed);

/// Checks a scenario without running it. Throws ConfigError naming the field.
void validate(const Scenario& scenario);

struct Stat {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
};

/// Mean and standard error of the samples (stderr 0 for fewer than two).
Stat summarize(std::span<const double> samples);

struct Metrics {
    std::size_t seeds = 0;
    /// False when some run violated liveness; statistics are then withheld.
    bool complete = true;
    std::vector<std::string> failures;  // "seed k: <diagnosis>"

    /// ||x^i - x*||^2 (strongly convex) or ||grad Q(x^i)||^2 (non-convex) at the
    /// outputs, averaged over nonfaulty i.
    Stat external_err;
    /// Max over nonfaulty output pairs of the mean ||x^i - x^j||^2.
    Stat internal_err;
    /// Max over t of the max-pair mean ||x_t^i - x_t^j||^2.
    Stat delta;
    /// Min over t in [1, T] of the mean ||grad Q(x_t^i)||^2.
    Stat min_grad_sq;
    std::size_t min_grad_t = 0;
    /// Fraction of (run, iteration) pairs whose parameter diameter^2 stays within
    /// 2 sigma^2 eta^3 / N (non-convex, constant rate only).
    std::optional<double> envelope_fraction;
    double envelope_bound = 0.0;

    Stat events;
    Stat messages;
    Stat maa_rounds;

    /// Indexed by t-1 for x_t, t = 1..T+1.
    std::vector<double> diameter_series;  // max-pair mean ||x_t^i - x_t^j||^2
    std::vector<double> grad_sq_series;   // mean ||grad Q(x_t^i)||^2
    std::vector<double> dist_sq_series;   // mean ||x_t^i - x*||^2 (strongly convex oracle)
};

/// Runs every seed of one configuration.
Metrics estimate(const Scenario& scenario, std::size_t seeds, std::uint64_t seed_root);

struct ConfigResult {
    Configuration config;
    Metrics metrics;
};

/// Runs all configurations of the ensemble in sweep order.
std::vector<ConfigResult> estimate(const EnsembleSpec& spec);

/// Worker count: ASGD_THREADS if set and positive, otherwise the hardware concurrency.
std::size_t thread_count();

/// Calls body(i) for i in [0, count) on up to thread_count() threads. The
/// first exception thrown is rethrown after all workers stop.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

// --------------------------------------------------------------------------
// Rate fits

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::vector<double> residuals;  // in log space
};

/// Least-squares slope of log(value) against log(scale). Needs at least three
/// points with positive scale and value; throws UsageError otherwise.
RateFit fit_rate(std::span<const std::pair<double, double>> series);

// --------------------------------------------------------------------------
// Contraction

struct RoundRatio {
    std::size_t round = 0;  // ratio of round `round + 1` values to round `round` values
    double max_ratio = 0.0;
    std::size_t samples = 0;
    std::size_t skipped = 0;     // zero-diameter rounds
    std::size_t unresolved = 0;  // diameter within ~1024 ulps of the coordinates
};

struct ContractionReport {
    maa::RoundContext context = maa::RoundContext::SMMidExt;
    double bound = 1.0;
    std::vector<RoundRatio> rounds;
    double max_ratio = 0.0;
    std::size_t samples = 0;
    std::size_t skipped = 0;
    std::size_t unresolved = 0;
    std::size_t violations = 0;
};

/// Per-round squared-diameter ratios from MAA snapshots, compared against the
/// round factor of `context`. Rounds starting at zero diameter, or at a diameter
/// within about 1024 ulps of the coordinates' magnitude, are counted apart.
ContractionReport contraction_report(std::span<const sim::RunTrace> traces, maa::RoundContext context);

// --------------------------------------------------------------------------
// Partition divergence

struct DivergenceResult {
    std::size_t seeds = 0;
    Stat cross_dist_sq;  // E||x^a - x^b||^2 over a in A, b in B
    double a_plus = 0.0, a_minus = 0.0;
    double b_plus = 0.0, b_minus = 0.0;
    bool complete = true;
    std::vector<std::string> failures;
};

/// Runs the scenario with messages between `a` and `b` held back until both
/// sides finish. The scenario must let each side reach its quorums alone.
/// Throws UsageError when the sides share a cluster.
DivergenceResult divergence_demo(const Scenario& scenario, const sim::Partition& partition, std::size_t seeds,
                                 std::uint64_t seed_root, double landing_radius = 0.5);

struct LandingStats {
    std::size_t runs = 0;
    double plus = 0.0;   // fraction ending within `radius` of (+1, ..., +1)
    double minus = 0.0;  // fraction ending within `radius` of (-1, ..., -1)
};

/// Sequential mini-batch SGD from x1 on the scenario's oracle, same T and rate.
LandingStats sequential_landing(const Scenario& scenario, std::size_t batch, std::size_t runs, std::uint64_t seed_root,
                                double radius = 0.5);

// --------------------------------------------------------------------------
// Output

/// Columns: config_hash,T,N,n,sigma,d_max,stat,mean,stderr,n_seeds
void write_csv(std::span<const ConfigResult> results, std::ostream& out);
std::string to_csv(std::span<const ConfigResult> results);
/// Summary with per-iteration series.
std::string to_json(std::span<const ConfigResult> results);

}  // namespace asgd::harness
