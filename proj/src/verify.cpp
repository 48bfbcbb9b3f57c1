#include "asgd/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "asgd/error.hpp"
#include "asgd/harness.hpp"
#include "asgd/maa.hpp"
#include "asgd/oracle.hpp"
#include "asgd/rng.hpp"
#include "asgd/sgd.hpp"
#include "asgd/sim.hpp"
#include "asgd/vecmath.hpp"

namespace asgd::verify {

namespace {

using harness::LrRule;
using harness::OracleSpec;
using harness::Scenario;
using maa::Rule;
using Clock = std::chrono::steady_clock;

std::string fmt(double v, int prec = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

void progress(const Options& o, const std::string& line) {
    if (o.log) *o.log << "  .. " << line << '\n' << std::flush;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// A mix of shapes: isotropic Gaussian, a thin box, and points on a sphere.
Vector random_point(Rng& rng, std::size_t d, int shape, double scale) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vector v(d);
    for (std::size_t k = 0; k < d; ++k) v[k] = g(rng);
    if (shape == 1) {
        for (std::size_t k = 0; k < d; ++k) v[k] = uniform(rng, -1.0, 1.0) * (k == 0 ? 1.0 : 0.05);
    } else if (shape == 2) {
        const double r = std::sqrt(norm_sq(v));
        if (r > 0.0)
            for (std::size_t k = 0; k < d; ++k) v[k] /= r;
    }
    for (std::size_t k = 0; k < d; ++k) v[k] *= scale;
    return v;
}

std::vector<Vector> random_inputs(Rng& rng, std::size_t count, std::size_t d) {
    const int shape = static_cast<int>(pick(rng, 0, 2));
    const double scale = std::exp(uniform(rng, -3.0, 3.0));
    std::vector<Vector> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(random_point(rng, d, shape, scale));
    return out;
}

double output_diameter(const sim::RunTrace& t) {
    std::vector<Vector> outs;
    for (std::size_t i = 0; i < t.n; ++i)
        if (!t.crashed[i] && t.outputs[i]) outs.push_back(*t.outputs[i]);
    return outs.empty() ? 0.0 : diameter_sq(outs);
}

bool survivors_output(const sim::RunTrace& t) {
    for (std::size_t i = 0; i < t.n; ++i)
        if (!t.crashed[i] && !t.outputs[i]) return false;
    return t.ok();
}

sim::Schedule random_schedule(Rng& rng) {
    sim::Schedule s;
    s.seed = rng();
    s.d_max = static_cast<std::uint32_t>(pick(rng, 1, 8));
    s.local_max = static_cast<std::uint32_t>(pick(rng, 1, 4));
    return s;
}

// Topology with m clusters of 1..max_size members.
sim::Topology random_topology(Rng& rng, std::size_t m, std::size_t max_size) {
    std::vector<std::vector<ProcessId>> cl(m);
    ProcessId next = 0;
    for (auto& c : cl) {
        const std::size_t k = pick(rng, 1, max_size);
        for (std::size_t j = 0; j < k; ++j) c.push_back(next++);
    }
    return sim::Topology::from_clusters(cl);
}

// ---------------------------------------------------------------------------
// 1, 2: aggregation rules on point sets sharing a value

Check common_value(Rule rule, const Options& o) {
    const bool mid = rule == Rule::MidExtremes;
    const double bound = mid ? 7.0 / 8.0 : 31.0 / 32.0;
    Check c;
    c.criterion = mid ? 1 : 2;
    c.title = mid ? "MidExtremes common-value contraction" : "ApproachExtreme common-value contraction";
    Rng rng(derive_seed(mid ? 101 : 102, {}));
    const std::size_t trials = o.quick ? 200 : 1000;
    std::size_t violations = 0;
    double worst = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const std::size_t d = pick(rng, 1, 8);
        const std::size_t shared = pick(rng, 1, 3);
        const std::size_t na = pick(rng, shared, 30), nb = pick(rng, shared, 30);
        auto pool = random_inputs(rng, na + nb - shared, d);
        std::vector<Vector> a(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(na));
        std::vector<Vector> b(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(shared));
        b.insert(b.end(), pool.begin() + static_cast<std::ptrdiff_t>(na), pool.end());
        std::shuffle(a.begin(), a.end(), rng);
        std::shuffle(b.begin(), b.end(), rng);
        Vector ya, yb;
        if (mid) {
            ya = mid_extremes(a);
            yb = mid_extremes(b);
        } else {
            ya = approach_extreme(a, a[pick(rng, 0, a.size() - 1)]);
            yb = approach_extreme(b, b[pick(rng, 0, b.size() - 1)]);
        }
        const double joint = diameter_sq(pool);
        if (joint == 0.0) continue;
        const double ratio = distance_sq(ya, yb) / joint;
        worst = std::max(worst, ratio);
        if (ratio > bound) ++violations;
    }
    c.bound = "ratio <= " + fmt(bound) + ", zero violations" + (o.quick ? "" : ", < 10 s");
    c.observed = std::to_string(trials) + " pairs, max ratio " + fmt(worst) + ", " + std::to_string(violations) +
                 " violations";
    c.passed = violations == 0;
    return c;
}

// ---------------------------------------------------------------------------
// 3: SMMAA end to end

Check smmaa_end_to_end(const Options& o) {
    Check c;
    c.criterion = 3;
    c.title = "SMMAA end-to-end contraction";
    const std::size_t r_mid = maa::required_rounds(1.0 / 6.0, maa::RoundContext::SMMidExt);
    const std::size_t r_ae6 = maa::required_rounds(1.0 / 6.0, maa::RoundContext::SMApproachExt);
    const std::size_t r_ae10 = maa::required_rounds(1.0 / 10.0, maa::RoundContext::SMApproachExt);
    bool ok = r_mid == 14 && r_ae6 == 57 && r_ae10 == 73;
    c.notes.push_back("required_rounds: 1/6 MidExt " + std::to_string(r_mid) + ", 1/6 ApproachExt " +
                      std::to_string(r_ae6) + ", 1/10 ApproachExt " + std::to_string(r_ae10));

    Rng rng(derive_seed(103, {}));
    const std::size_t per_size_mid = o.quick ? 40 : 500;
    const std::size_t per_size_ae = o.quick ? 10 : 100;
    double worst_mid = 0.0, worst_ae = 0.0;
    std::size_t runs = 0, failures = 0, stuck = 0;
    for (std::size_t size = 2; size <= 8; ++size) {
        for (int variant = 0; variant < 2; ++variant) {
            const bool ae = variant == 1;
            const std::size_t count = ae ? per_size_ae : per_size_mid;
            for (std::size_t k = 0; k < count; ++k) {
                sim::StandaloneMaa cfg;
                cfg.level = maa::Level::SharedMemory;
                cfg.rule = ae ? Rule::ApproachExtreme : Rule::MidExtremes;
                cfg.q = ae ? 1.0 / 10.0 : 1.0 / 6.0;
                cfg.inputs = random_inputs(rng, size, pick(rng, 1, 4));
                const auto topo = sim::Topology::even(size, 1);
                sim::FaultPlan faults;
                if (pick(rng, 0, 2) == 0) {
                    const std::size_t crashes = pick(rng, 1, size - 1);
                    std::vector<ProcessId> ids(size);
                    std::iota(ids.begin(), ids.end(), 0);
                    std::shuffle(ids.begin(), ids.end(), rng);
                    for (std::size_t j = 0; j < crashes; ++j)
                        faults.crashes.push_back({ids[j], sim::Crash::Trigger::AtEvent, pick(rng, 0, 40 * size)});
                }
                const auto trace = sim::run(topo, faults, random_schedule(rng), cfg);
                ++runs;
                if (!survivors_output(trace)) {
                    ++stuck;
                    continue;
                }
                const double ratio = output_diameter(trace) / diameter_sq(cfg.inputs);
                double& worst = ae ? worst_ae : worst_mid;
                worst = std::max(worst, ratio);
                if (ratio > cfg.q) ++failures;
            }
        }
    }
    ok = ok && failures == 0 && stuck == 0;
    c.bound = "rounds 14/57/73; output diam^2 <= 1/6 (MidExt, 14 rounds), <= 1/10 (ApproachExt, 73 rounds)";
    c.observed = std::to_string(runs) + " runs, max ratio MidExt " + fmt(worst_mid) + ", ApproachExt " +
                 fmt(worst_ae) + ", " + std::to_string(failures) + " over bound, " + std::to_string(stuck) +
                 " without output";
    c.passed = ok;
    return c;
}

// ---------------------------------------------------------------------------
// 4: cluster MAA rounds

Check cluster_rounds(const Options& o) {
    Check c;
    c.criterion = 4;
    c.title = "Cluster MAA per-round contraction";
    Rng rng(derive_seed(104, {}));
    const std::size_t want_samples = o.quick ? 150 : 1000;
    bool ok = true;
    std::ostringstream obs;
    for (int variant = 0; variant < 2; ++variant) {
        const bool ae = variant == 1;
        const auto ctx = ae ? maa::RoundContext::ClusterApproachExt : maa::RoundContext::ClusterMidExt;
        std::size_t samples = 0, skipped = 0, unresolved = 0, violations = 0, runs = 0, target_miss = 0, stuck = 0, round_miss = 0;
        double worst = 0.0;
        const std::size_t max_runs = 50 * want_samples;
        while (samples < want_samples && runs < max_runs) {
            const std::size_t m = std::array<std::size_t, 3>{3, 5, 7}[pick(rng, 0, 2)];
            const auto topo = random_topology(rng, m, 3);
            sim::StandaloneMaa cfg;
            cfg.level = maa::Level::Cluster;
            cfg.rule = ae ? Rule::ApproachExtreme : Rule::MidExtremes;
            cfg.q = uniform(rng, 0.05, 0.5);
            cfg.inputs = random_inputs(rng, topo.n(), pick(rng, 1, 3));
            sim::FaultPlan faults;
            const std::size_t fc = pick(rng, 0, (m - 1) / 2);
            std::vector<ClusterId> order(m);
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t j = 0; j < fc; ++j)
                for (ProcessId p : topo.members(order[j]))
                    faults.crashes.push_back({p, sim::Crash::Trigger::AtEvent, pick(rng, 0, 300)});
            // wide delay spread, so that processes hear different cluster majorities
            auto sched = random_schedule(rng);
            sched.d_max = static_cast<std::uint32_t>(pick(rng, 1, 64));
            const auto trace = sim::run(topo, faults, sched, cfg);
            ++runs;
            if (!survivors_output(trace)) {
                ++stuck;
                continue;
            }
            if (trace.iterations != maa::required_rounds(cfg.q, ctx)) ++round_miss;
            if (output_diameter(trace) > cfg.q * diameter_sq(cfg.inputs)) ++target_miss;
            const auto rep = harness::contraction_report(std::span<const sim::RunTrace>(&trace, 1), ctx);
            samples += rep.samples;
            skipped += rep.skipped;
            unresolved += rep.unresolved;
            violations += rep.violations;
            worst = std::max(worst, rep.max_ratio);
        }
        ok = ok && violations == 0 && samples >= want_samples && stuck == 0 && target_miss == 0 && round_miss == 0;
        obs << (ae ? "; ApproachExt: " : "MidExt: ") << samples << " rounds (" << skipped
            << " zero-diameter, " << unresolved
            << " at rounding resolution excluded), max ratio " << fmt(worst) << ", " << violations << " violations, " << runs
            << " runs, " << target_miss << " missed q, " << round_miss << " wrong R, " << stuck
            << " without output";
    }
    c.bound = "per-round ratio <= 23/24 (MidExt), <= 79/80 (ApproachExt); output within q after ceil(log q) rounds";
    c.observed = obs.str();
    c.passed = ok;
    return c;
}

// ---------------------------------------------------------------------------
// 5: convexity witnesses

Check witnesses(const Options& o) {
    Check c;
    c.criterion = 5;
    c.title = "Convexity witnesses replay";
    Rng rng(derive_seed(105, {}));
    const std::size_t runs = o.quick ? 20 : 100;
    std::size_t outputs = 0, replayed = 0, missing = 0;
    for (std::size_t k = 0; k < runs; ++k) {
        sim::StandaloneMaa cfg;
        const bool cluster = k % 2 == 1;
        cfg.level = cluster ? maa::Level::Cluster : maa::Level::SharedMemory;
        cfg.rule = pick(rng, 0, 1) ? Rule::ApproachExtreme : Rule::MidExtremes;
        cfg.q = uniform(rng, 0.05, 0.5);
        const auto topo = cluster ? random_topology(rng, pick(rng, 1, 4), 3) : sim::Topology::even(pick(rng, 1, 6), 1);
        cfg.inputs = random_inputs(rng, topo.n(), pick(rng, 1, 4));
        sim::FaultPlan faults;
        if (topo.n() > 1 && pick(rng, 0, 1)) {
            const ProcessId p = static_cast<ProcessId>(pick(rng, 0, topo.n() - 1));
            const bool lone = topo.members(topo.cluster(p)).size() == 1;
            if (!cluster || !lone || topo.m() >= 3) faults.crashes.push_back({p, sim::Crash::Trigger::AtEvent, pick(rng, 0, 60)});
        }
        sim::TraceOptions opts;
        opts.witness = true;
        const auto trace = sim::run(topo, faults, random_schedule(rng), cfg, opts);
        if (!trace.ok()) {
            ++missing;
            continue;
        }
        const auto ws = sim::extract_convexity_witness(trace);
        std::size_t produced = 0;
        for (const auto& out : trace.outputs) produced += out.has_value();
        outputs += produced;
        if (ws.size() != produced) missing += produced - std::min(produced, ws.size());
        for (const auto& w : ws)
            if (sim::replay_witness(trace, w, *trace.outputs[w.process])) ++replayed;
    }
    c.bound = "every output's midpoint chain replays bit-exactly";
    c.observed = std::to_string(runs) + " runs, " + std::to_string(replayed) + "/" + std::to_string(outputs) +
                 " outputs replayed, " + std::to_string(missing) + " missing";
    c.passed = missing == 0 && replayed == outputs && outputs > 0;
    return c;
}

// ---------------------------------------------------------------------------
// 6: variance of averaged gradients

Check variance(const Options& o) {
    Check c;
    c.criterion = 6;
    c.title = "Averaged-gradient variance";
    const std::size_t draws = o.quick ? 20000 : 100000;
    const double sigma = 1.0;
    const auto orc = oracle::Oracle::quadratic(1.0, 4.0, Vector{0.5, -1.0, 2.0}, sigma);
    Rng rng(derive_seed(106, {}));
    bool ok = true;
    std::ostringstream obs;
    for (std::size_t B : {1, 4, 16, 64}) {
        double acc = 0.0;
        std::vector<Vector> noise(B);
        for (std::size_t s = 0; s < draws; ++s) {
            for (std::size_t b = 0; b < B; ++b) {
                const Vector x = random_point(rng, 3, 0, 3.0);
                noise[b] = orc.stochastic_grad(x, rng) - orc.grad(x);
            }
            acc += norm_sq(mean(noise));
        }
        const double v = acc / static_cast<double>(draws);
        const double lim = sigma * sigma / static_cast<double>(B) * 1.1;
        ok = ok && v <= lim;
        obs << "B=" << B << ": " << fmt(v) << " <= " << fmt(lim) << "; ";
    }

    // Per-process averages inside the non-convex algorithm.
    Scenario s;
    s.n = 6;
    s.m = 3;
    s.algorithm.variant = sgd::Variant::NonConvex;
    s.algorithm.N = 2;
    s.algorithm.T = 100;
    s.algorithm.schedule = sgd::Constant{0.05};
    s.algorithm.q_schedule = {0.5};
    s.oracle = OracleSpec{OracleSpec::Kind::Quadratic, 3, 1.0, 1.0, sigma, 2.0, Vector{0.5, -1.0, 2.0}};
    s.algorithm.x1 = Vector{2.0, 2.0, -2.0};
    const auto orc2 = s.oracle.build();
    double acc = 0.0;
    std::size_t samples = 0;
    std::size_t seed = 0;
    while (samples < draws) {
        const auto setup = harness::resolve(s, harness::run_seed(206, seed++));
        const auto trace = sim::run(setup.topology, setup.faults, setup.schedule, setup.algorithm, orc2);
        if (!trace.ok()) {
            ok = false;
            break;
        }
        for (const auto& r : trace.aggregations) {
            if (r.kind != sim::AggregationRecord::Kind::GradientAverage) continue;
            Vector g(orc2.dim());
            for (ProcessId p : r.senders) g += orc2.grad(*trace.snapshots[r.iteration - 1][p]);
            g *= 1.0 / static_cast<double>(r.senders.size());
            acc += distance_sq(r.value, g);
            ++samples;
        }
    }
    const double v = acc / static_cast<double>(std::max<std::size_t>(samples, 1));
    const double lim = sigma * sigma / static_cast<double>(s.algorithm.N) * 1.1;
    ok = ok && samples >= draws && v <= lim;
    obs << "in-run g_t^i (N=2, " << samples << " samples): " << fmt(v) << " <= " << fmt(lim);
    c.bound = "E||mean noise||^2 <= sigma^2/B * 1.1; per-process g_t^i <= sigma^2/N * 1.1";
    c.observed = obs.str();
    c.passed = ok;
    return c;
}

// ---------------------------------------------------------------------------
// 7, 8: strongly convex rates

Scenario strongly_convex_scenario() {
    Scenario s;
    s.n = 8;
    s.m = 1;
    s.algorithm.variant = sgd::Variant::StronglyConvex;
    s.algorithm.N = 4;
    s.algorithm.schedule = sgd::Decreasing{2.0, 8.0};
    s.oracle = OracleSpec{OracleSpec::Kind::Quadratic, 2, 1.0, 4.0, 1.0, 2.0, Vector{1.0, -1.0}};
    s.algorithm.x1 = Vector{2.0, 0.0};
    return s;
}

struct SweepResult {
    std::vector<std::pair<double, harness::Metrics>> by_T;
    bool complete = true;
};

SweepResult sc_sweep(const Options& o) {
    SweepResult r;
    Scenario s = strongly_convex_scenario();
    const std::size_t seeds = o.quick ? 40 : 200;
    for (std::size_t T : {64, 128, 256, 512}) {
        s.algorithm.T = T;
        auto m = harness::estimate(s, seeds, 107);
        r.complete = r.complete && m.complete;
        progress(o, "T=" + std::to_string(T) + " external " + fmt(m.external_err.mean) + " internal " +
                        fmt(m.internal_err.mean));
        r.by_T.emplace_back(static_cast<double>(T), std::move(m));
    }
    return r;
}

Check sc_external(const Options& o) {
    Check c;
    c.criterion = 7;
    c.title = "Strongly convex external rate";
    const auto t0 = Clock::now();
    const auto sw = sc_sweep(o);
    std::vector<std::pair<double, double>> pts;
    for (const auto& [T, m] : sw.by_T) pts.emplace_back(T, m.external_err.mean);
    const auto fit = harness::fit_rate(pts);
    bool ok = sw.complete && fit.slope >= -1.25 && fit.slope <= -0.75;

    Scenario s = strongly_convex_scenario();
    s.algorithm.T = 256;
    const std::size_t seeds = o.quick ? 40 : 200;
    std::vector<harness::Stat> byN;
    for (std::size_t N : {2, 4, 8}) {
        s.algorithm.N = N;
        auto m = harness::estimate(s, seeds, 107);
        ok = ok && m.complete;
        byN.push_back(m.external_err);
    }
    bool monotone = true;
    std::ostringstream ns;
    for (std::size_t k = 1; k < byN.size(); ++k) {
        const double se = std::hypot(byN[k].stderr_, byN[k - 1].stderr_);
        if (byN[k].mean > byN[k - 1].mean + 3.0 * se) monotone = false;
    }
    ns << "N=2,4,8 at T=256: " << fmt(byN[0].mean) << ", " << fmt(byN[1].mean) << ", " << fmt(byN[2].mean);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    ok = ok && monotone && (o.quick || secs < 300.0);
    c.bound = "slope in [-1.25, -0.75]; no increase beyond 3 se when N doubles; < 5 min";
    std::ostringstream obs;
    obs << "slope " << fmt(fit.slope) << " (";
    for (std::size_t k = 0; k < pts.size(); ++k) obs << (k ? ", " : "") << "T=" << pts[k].first << ": " << fmt(pts[k].second);
    obs << "); " << ns.str();
    c.observed = obs.str();
    c.passed = ok;
    return c;
}

Check sc_internal(const Options& o) {
    Check c;
    c.criterion = 8;
    c.title = "Strongly convex internal convergence";
    const auto sw = sc_sweep(o);
    std::vector<std::pair<double, double>> pts;
    for (const auto& [T, m] : sw.by_T) pts.emplace_back(T, m.internal_err.mean);
    bool ok = sw.complete;
    double slope = 0.0;
    try {
        slope = harness::fit_rate(pts).slope;
    } catch (const UsageError&) {
        ok = false;
    }
    ok = ok && slope >= -1.25 && slope <= -0.75;

    Scenario s = strongly_convex_scenario();
    s.oracle.sigma = 0.0;
    s.algorithm.T = 128;
    const auto zero = harness::estimate(s, o.quick ? 5 : 20, 108);
    const bool exact = zero.complete && zero.internal_err.mean == 0.0 && zero.delta.mean == 0.0;
    ok = ok && exact;
    std::ostringstream obs;
    obs << "slope " << fmt(slope) << " (";
    for (std::size_t k = 0; k < pts.size(); ++k) obs << (k ? ", " : "") << "T=" << pts[k].first << ": " << fmt(pts[k].second);
    obs << "); sigma=0 internal_err " << fmt(zero.internal_err.mean);
    c.bound = "slope in [-1.25, -0.75]; internal_err == 0 when sigma = 0";
    c.observed = obs.str();
    c.passed = ok;
    return c;
}

// ---------------------------------------------------------------------------
// 9: non-convex rate

Check nonconvex_rate(const Options& o) {
    Check c;
    c.criterion = 9;
    c.title = "Non-convex rate and diameter envelope";
    const auto t0 = Clock::now();
    Scenario s;
    s.n = 6;
    s.m = 3;
    s.algorithm.variant = sgd::Variant::NonConvex;
    s.algorithm.N = 2;
    s.lr_rule = LrRule::SqrtNOverT;
    s.algorithm.enforce_step_bounds = false;
    s.schedule.event_budget = 1'000'000'000;
    s.oracle = OracleSpec{OracleSpec::Kind::DoubleWell, 2, 1.0, 1.0, 0.3, 2.0, std::nullopt};
    s.algorithm.x1 = Vector{0.5, -0.5};
    const std::size_t seeds = o.quick ? 8 : 100;
    const std::vector<std::size_t> nts = o.quick ? std::vector<std::size_t>{64, 256, 1024}
                                                 : std::vector<std::size_t>{256, 1024, 4096};
    std::vector<std::pair<double, double>> pts;
    bool ok = true;
    double worst_env = 1.0;
    std::ostringstream obs;
    for (std::size_t nt : nts) {
        s.algorithm.T = nt / s.algorithm.N;
        const auto m = harness::estimate(s, seeds, 109);
        if (!m.complete) {
            ok = false;
            obs << "NT=" << nt << ": liveness violation (" << m.failures.front() << "); ";
            continue;
        }
        pts.emplace_back(static_cast<double>(nt), m.min_grad_sq.mean);
        worst_env = std::min(worst_env, m.envelope_fraction.value_or(0.0));
        progress(o, "NT=" + std::to_string(nt) + " min_t grad^2 " + fmt(m.min_grad_sq.mean) + " envelope " +
                        fmt(m.envelope_fraction.value_or(0.0)));
        obs << "NT=" << nt << ": " << fmt(m.min_grad_sq.mean) << " +- " << fmt(m.min_grad_sq.stderr_, 2) << "; ";
    }
    double slope = 0.0;
    if (pts.size() == nts.size()) {
        slope = harness::fit_rate(pts).slope;
    } else {
        ok = false;
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    ok = ok && slope >= -0.8 && slope <= -0.2 && worst_env >= 0.99 && (o.quick || secs < 900.0);
    obs << "slope " << fmt(slope) << "; envelope fraction " << fmt(worst_env);
    c.bound = "slope vs NT in [-0.8, -0.2]; diameter within 2 sigma^2 eta^3/N in >= 99% of iterations; < 15 min";
    c.observed = obs.str();
    c.passed = ok;
    return c;
}

// ---------------------------------------------------------------------------
// 10: crash tolerance

Check fault_tolerance(const Options& o) {
    Check c;
    c.criterion = 10;
    c.title = "Crash tolerance and liveness reporting";
    Rng rng(derive_seed(110, {}));
    const std::size_t plans = o.quick ? 10 : 50;
    std::size_t sc_ok = 0, nc_ok = 0, neg_ok = 0;
    const std::size_t negatives = o.quick ? 3 : 10;
    std::vector<std::string> bad;

    const auto quad = oracle::Oracle::quadratic(1.0, 2.0, Vector{0.0, 1.0}, 0.5);
    for (std::size_t k = 0; k < plans; ++k) {
        const std::size_t n = 8;
        sgd::SgdConfig cfg;
        cfg.variant = sgd::Variant::StronglyConvex;
        cfg.T = 30;
        cfg.N = pick(rng, 1, 4);
        cfg.schedule = sgd::Decreasing{2.0, 4.0};
        cfg.x1 = Vector{1.0, -1.0};
        const std::size_t f = pick(rng, 0, n - cfg.N);
        std::vector<ProcessId> ids(n);
        std::iota(ids.begin(), ids.end(), 0);
        std::shuffle(ids.begin(), ids.end(), rng);
        sim::FaultPlan faults;
        faults.f = f;
        for (std::size_t j = 0; j < f; ++j) {
            if (pick(rng, 0, 1))
                faults.crashes.push_back({ids[j], sim::Crash::Trigger::AtEvent, pick(rng, 0, 400)});
            else
                faults.crashes.push_back({ids[j], sim::Crash::Trigger::AtIteration, pick(rng, 1, cfg.T)});
        }
        const auto trace = sim::run(sim::Topology::even(n, 4), faults, random_schedule(rng), cfg, quad);
        if (survivors_output(trace))
            ++sc_ok;
        else
            bad.push_back("strongly convex plan " + std::to_string(k) + ": " + trace.diagnosis);
    }

    for (std::size_t k = 0; k < plans; ++k) {
        const std::size_t m = 5;
        const auto topo = sim::Topology::even(10, m);
        sgd::SgdConfig cfg;
        cfg.variant = sgd::Variant::NonConvex;
        cfg.T = 8;
        cfg.N = 2;
        cfg.schedule = sgd::Constant{0.05};
        cfg.q_schedule.assign(cfg.T, 0.5);
        cfg.tau = pick(rng, 1, cfg.T);
        cfg.x1 = Vector{1.0, -1.0};
        std::vector<ClusterId> order(m);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        sim::FaultPlan faults;
        const std::size_t fc = pick(rng, 0, (m - 1) / 2);
        for (std::size_t j = 0; j < fc; ++j)
            for (ProcessId p : topo.members(order[j]))
                faults.crashes.push_back({p, sim::Crash::Trigger::AtEvent, pick(rng, 0, 2000)});
        // one more crash inside a surviving cluster, sometimes
        if (pick(rng, 0, 1)) {
            const auto& mem = topo.members(order[fc + pick(rng, 0, m - fc - 1)]);
            faults.crashes.push_back({mem[pick(rng, 0, mem.size() - 1)], sim::Crash::Trigger::AtIteration,
                                      pick(rng, 1, cfg.T)});
        }
        faults.f_c = fc;
        const auto trace = sim::run(topo, faults, random_schedule(rng), cfg, quad);
        if (survivors_output(trace))
            ++nc_ok;
        else
            bad.push_back("non-convex plan " + std::to_string(k) + ": " + trace.diagnosis);
    }

    for (std::size_t k = 0; k < negatives; ++k) {
        const std::size_t m = 5;
        const auto topo = sim::Topology::even(10, m);
        sgd::SgdConfig cfg;
        cfg.variant = sgd::Variant::NonConvex;
        cfg.T = 4;
        cfg.N = 2;
        cfg.schedule = sgd::Constant{0.05};
        cfg.q_schedule.assign(cfg.T, 0.5);
        cfg.x1 = Vector{1.0, -1.0};
        cfg.assume_cluster_majority = false;
        std::vector<ClusterId> order(m);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        sim::FaultPlan faults;
        for (std::size_t j = 0; j < 3; ++j)
            for (ProcessId p : topo.members(order[j])) faults.crashes.push_back({p, sim::Crash::Trigger::AtEvent, 0});
        const auto trace = sim::run(topo, faults, random_schedule(rng), cfg, quad);
        if (!trace.ok() && trace.diagnosis.find("blocked") != std::string::npos)
            ++neg_ok;
        else
            bad.push_back("majority-violated plan " + std::to_string(k) + " not reported");
    }
    c.bound = "all survivors output (f <= n-N; f_c <= floor((m-1)/2)); majority loss reported as liveness violation";
    c.observed = "strongly convex " + std::to_string(sc_ok) + "/" + std::to_string(plans) + ", non-convex " +
                 std::to_string(nc_ok) + "/" + std::to_string(plans) + ", negative control " +
                 std::to_string(neg_ok) + "/" + std::to_string(negatives);
    c.notes = bad;
    c.passed = sc_ok == plans && nc_ok == plans && neg_ok == negatives;
    return c;
}

// ---------------------------------------------------------------------------
// 11: partition divergence

Scenario split_scenario() {
    Scenario s;
    s.n = 4;
    s.m = 2;
    s.algorithm.variant = sgd::Variant::NonConvex;
    s.algorithm.T = 60;
    s.algorithm.N = 2;
    s.algorithm.schedule = sgd::Constant{0.1};
    s.algorithm.enforce_step_bounds = false;
    s.oracle = OracleSpec{OracleSpec::Kind::DoubleWell, 1, 1.0, 1.0, 0.3, 2.0, std::nullopt};
    s.algorithm.x1 = Vector{0.0};
    return s;
}

Check divergence(const Options& o) {
    Check c;
    c.criterion = 11;
    c.title = "Partition divergence";
    const std::size_t seeds = o.quick ? 60 : 400;
    Scenario healthy = split_scenario();
    Scenario split = healthy;
    split.algorithm.cluster_quorum = 1;
    const sim::Partition part{{0, 1}, {2, 3}};
    const auto div = harness::divergence_demo(split, part, seeds, 111);
    const auto base = harness::estimate(healthy, seeds, 111);
    const auto seq = harness::sequential_landing(healthy, healthy.algorithm.N, seeds, 112);
    bool ok = div.complete && base.complete;
    const double ratio_needed = 10.0 * base.internal_err.mean;
    ok = ok && div.cross_dist_sq.mean >= ratio_needed;
    ok = ok && std::abs(seq.plus - 0.5) <= 0.1 && std::abs(seq.minus - 0.5) <= 0.1;
    std::ostringstream obs;
    obs << "cross E||x^a-x^b||^2 " << fmt(div.cross_dist_sq.mean) << " +- " << fmt(div.cross_dist_sq.stderr_, 2)
        << " vs healthy internal_err " << fmt(base.internal_err.mean) << "; sequential landing +1: " << fmt(seq.plus)
        << ", -1: " << fmt(seq.minus) << "; partitioned sides +1/-1: A " << fmt(div.a_plus) << "/"
        << fmt(div.a_minus) << ", B " << fmt(div.b_plus) << "/" << fmt(div.b_minus);
    c.bound = "cross distance >= 10x healthy internal_err; sequential landing frequencies 0.5 +- 0.1";
    c.observed = obs.str();
    c.passed = ok;
    return c;
}

// ---------------------------------------------------------------------------
// 12: determinism

struct ThreadsEnv {
    std::string saved;
    bool had = false;
    ThreadsEnv() {
        if (const char* v = std::getenv("ASGD_THREADS")) {
            had = true;
            saved = v;
        }
    }
    void set(const char* v) { ::setenv("ASGD_THREADS", v, 1); }
    ~ThreadsEnv() {
        if (had)
            ::setenv("ASGD_THREADS", saved.c_str(), 1);
        else
            ::unsetenv("ASGD_THREADS");
    }
};

Scenario determinism_scenario(std::size_t k) {
    Rng rng(derive_seed(112, {k}));
    Scenario s;
    const bool nonconvex = k % 2 == 1;
    s.m = pick(rng, 1, 3) + (nonconvex ? 1 : 0);
    s.n = s.m * pick(rng, 1, 2);
    s.algorithm.variant = nonconvex ? sgd::Variant::NonConvex : sgd::Variant::StronglyConvex;
    s.algorithm.T = pick(rng, 5, 20);
    s.algorithm.N = pick(rng, 1, std::max<std::size_t>(1, s.n - 1));
    s.schedule.seed = rng();
    s.schedule.d_max = static_cast<std::uint32_t>(pick(rng, 1, 6));
    if (nonconvex) {
        s.algorithm.schedule = sgd::Constant{0.004};
        s.algorithm.q_schedule = {0.3};
        s.oracle = OracleSpec{OracleSpec::Kind::DoubleWell, pick(rng, 1, 3), 1.0, 1.0, 0.5, 2.0, std::nullopt};
        s.algorithm.x1 = Vector(s.oracle.d, 0.3);
    } else {
        s.algorithm.schedule = sgd::Decreasing{2.0, 8.0};
        s.oracle = OracleSpec{OracleSpec::Kind::Quadratic, pick(rng, 1, 3), 1.0, 4.0, 1.0, 2.0, std::nullopt};
        s.algorithm.x1 = Vector(s.oracle.d, 1.0);
    }
    if (k % 4 == 0 && s.n > s.algorithm.N && !nonconvex) {
        s.faults.crashes.push_back({static_cast<ProcessId>(s.n - 1), sim::Crash::Trigger::AtIteration, 2});
    }
    if (k % 4 == 3 && s.m >= 3) {
        const auto topo = s.topology();
        for (ProcessId p : topo.members(0)) s.faults.crashes.push_back({p, sim::Crash::Trigger::AtEvent, 7});
        if (s.algorithm.N > s.n - topo.members(0).size()) s.algorithm.N = 1;
    }
    return s;
}

Check determinism(const Options& o) {
    Check c;
    c.criterion = 12;
    c.title = "Deterministic traces and CSVs";
    const std::size_t count = o.quick ? 6 : 20;
    std::size_t same = 0;
    ThreadsEnv env;
    for (std::size_t k = 0; k < count; ++k) {
        const Scenario s = determinism_scenario(k);
        std::string trace[2], csv[2];
        for (int rep = 0; rep < 2; ++rep) {
            env.set(rep == 0 ? "1" : "3");
            const auto setup = harness::resolve(s, s.schedule.seed);
            sim::TraceOptions opts;
            opts.events = true;
            opts.registers = true;
            opts.witness = true;
            const auto tr = sim::run(setup.topology, setup.faults, setup.schedule, setup.algorithm,
                                     s.oracle.build(), opts);
            trace[rep] = sim::export_trace(tr);
            harness::EnsembleSpec e{s, 4, s.schedule.seed, {}};
            csv[rep] = harness::to_csv(harness::estimate(e));
        }
        if (trace[0] == trace[1] && csv[0] == csv[1])
            ++same;
        else
            c.notes.push_back("scenario " + std::to_string(k) + " differs between repeats");
    }
    c.bound = "byte-identical trace and CSV on repeat (1 vs 3 worker threads)";
    c.observed = std::to_string(same) + "/" + std::to_string(count) + " scenarios identical";
    c.passed = same == count;
    return c;
}

}  // namespace

Check run(int criterion, const Options& options) {
    const auto t0 = Clock::now();
    Check c;
    switch (criterion) {
        case 1: c = common_value(Rule::MidExtremes, options); break;
        case 2: c = common_value(Rule::ApproachExtreme, options); break;
        case 3: c = smmaa_end_to_end(options); break;
        case 4: c = cluster_rounds(options); break;
        case 5: c = witnesses(options); break;
        case 6: c = variance(options); break;
        case 7: c = sc_external(options); break;
        case 8: c = sc_internal(options); break;
        case 9: c = nonconvex_rate(options); break;
        case 10: c = fault_tolerance(options); break;
        case 11: c = divergence(options); break;
        case 12: c = determinism(options); break;
        default: throw UsageError("verify: no criterion " + std::to_string(criterion));
    }
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if ((criterion == 1 || criterion == 2) && !options.quick && c.seconds >= 10.0) {
        c.passed = false;
        c.notes.push_back("runtime limit of 10 s exceeded");
    }
    if (options.quick) c.notes.push_back("quick mode: reduced sample counts");
    return c;
}

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"contraction", "variance",    "convergence", "faults",
                                                "divergence",  "determinism", "all"};
    return names;
}

std::vector<int> suite(const std::string& name) {
    static const std::map<std::string, std::vector<int>> suites{
        {"contraction", {1, 2, 3, 4, 5}}, {"variance", {6}},       {"convergence", {7, 8, 9}},
        {"faults", {10}},                 {"divergence", {11}},    {"determinism", {12}},
        {"all", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}}};
    const auto it = suites.find(name);
    if (it == suites.end()) {
        std::string known;
        for (const auto& n : suite_names()) known += (known.empty() ? "" : ", ") + n;
        throw UsageError("unknown suite \"" + name + "\" (known: " + known + ")");
    }
    return it->second;
}

std::string format(const Check& c) {
    std::ostringstream os;
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.1f s", c.seconds);
    os << (c.passed ? "PASS" : "FAIL") << ' ' << (c.criterion < 10 ? " " : "") << c.criterion << ' ' << c.title
       << ": " << c.observed << " (required: " << c.bound << ") [" << secs << ']';
    for (const auto& n : c.notes) os << "\n      " << n;
    return os.str();
}

}  // namespace asgd::verify
