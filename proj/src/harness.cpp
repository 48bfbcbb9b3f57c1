#include "asgd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "asgd/error.hpp"
#include "asgd/rng.hpp"
#include "asgd/scenario.hpp"
#include "json.hpp"

namespace asgd::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

double stderr_of(double sum, double sumsq, std::size_t n) {
    if (n < 2) return 0.0;
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, (sumsq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
}

// Running sum for one cell of a per-seed table; NaN samples are absent.
struct Acc {
    double sum = 0.0;
    double sumsq = 0.0;
    std::size_t n = 0;

    void add(double x) {
        if (std::isnan(x)) return;
        sum += x;
        sumsq += x * x;
        ++n;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : kNaN; }
    Stat stat() const { return {mean(), stderr_of(sum, sumsq, n), n}; }
};

// What one run contributes to the ensemble statistics.
struct SeedResult {
    bool ok = true;
    std::string diagnosis;
    double external = kNaN;
    std::vector<double> pair_out;  // P entries
    std::vector<double> pair_t;    // (T+1) x P
    std::vector<double> grad_t;    // T+1
    std::vector<double> dist_t;    // T+1, strongly convex oracles only
    std::size_t env_hits = 0;
    std::size_t env_total = 0;
    double events = 0.0;
    double messages = 0.0;
    double maa_rounds = 0.0;
};

std::optional<double> envelope_bound(const RunSetup& setup, const oracle::Oracle& o) {
    if (setup.algorithm.variant != sgd::Variant::NonConvex) return std::nullopt;
    const auto* c = std::get_if<sgd::Constant>(&setup.algorithm.schedule);
    if (!c) return std::nullopt;
    const double s2 = o.sigma() * o.sigma();
    return 2.0 * s2 * c->eta * c->eta * c->eta / static_cast<double>(setup.algorithm.N);
}

SeedResult run_one(const Scenario& sc, const oracle::Oracle& o, std::uint64_t seed) {
    const RunSetup setup = resolve(sc, seed);
    sim::TraceOptions opts;
    opts.journal = false;
    const sim::RunTrace trace = sim::run(setup.topology, setup.faults, setup.schedule, setup.algorithm, o, opts);

    SeedResult r;
    r.events = static_cast<double>(trace.counters.events);
    r.messages = static_cast<double>(trace.counters.messages_sent);
    r.maa_rounds = static_cast<double>(trace.counters.maa_rounds);
    if (!trace.ok()) {
        r.ok = false;
        r.diagnosis = trace.diagnosis;
        return r;
    }
    const std::size_t n = trace.n;
    const std::size_t P = pair_count(n);
    const bool nonconvex = setup.algorithm.variant == sgd::Variant::NonConvex;
    const auto x_star = o.minimizer();

    auto err = [&](const Vector& x) { return nonconvex || !x_star ? norm_sq(o.grad(x)) : distance_sq(x, *x_star); };

    double ext = 0.0;
    std::size_t live = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (trace.crashed[i] || !trace.outputs[i]) continue;
        ext += err(*trace.outputs[i]);
        ++live;
    }
    r.external = live ? ext / static_cast<double>(live) : kNaN;

    r.pair_out.assign(P, kNaN);
    for (std::size_t i = 0, k = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j, ++k)
            if (!trace.crashed[i] && !trace.crashed[j] && trace.outputs[i] && trace.outputs[j])
                r.pair_out[k] = distance_sq(*trace.outputs[i], *trace.outputs[j]);

    const auto bound = envelope_bound(setup, o);
    const std::size_t steps = trace.snapshots.size();
    r.pair_t.assign(steps * P, kNaN);
    r.grad_t.assign(steps, kNaN);
    if (x_star) r.dist_t.assign(steps, kNaN);
    for (std::size_t t = 0; t < steps; ++t) {
        const auto& snap = trace.snapshots[t];
        double g = 0.0, dist = 0.0, diam = 0.0;
        std::size_t present = 0;
        for (std::size_t i = 0, k = 0; i < n; ++i) {
            if (!snap[i]) {
                k += n - i - 1;
                continue;
            }
            g += norm_sq(o.grad(*snap[i]));
            if (x_star) dist += distance_sq(*snap[i], *x_star);
            ++present;
            for (std::size_t j = i + 1; j < n; ++j, ++k) {
                if (!snap[j]) continue;
                const double d2 = distance_sq(*snap[i], *snap[j]);
                r.pair_t[t * P + k] = d2;
                diam = std::max(diam, d2);
            }
        }
        if (present) {
            r.grad_t[t] = g / static_cast<double>(present);
            if (x_star) r.dist_t[t] = dist / static_cast<double>(present);
        }
        if (bound && t >= 1 && present) {
            ++r.env_total;
            if (diam <= *bound) ++r.env_hits;
        }
    }
    return r;
}

}  // namespace

oracle::Oracle OracleSpec::build() const {
    try {
        if (kind == Kind::DoubleWell) return oracle::Oracle::double_well(d, radius, sigma);
        const Vector xs = x_star ? *x_star : Vector(d);
        if (xs.dim() != d)
            throw ConfigError("oracle.x_star", "x_star has dimension " + std::to_string(xs.dim()) + ", expected " +
                                                   std::to_string(d));
        return oracle::Oracle::quadratic(mu, L, xs, sigma);
    } catch (const UsageError& e) {
        throw ConfigError("oracle", e.what());
    }
}

sim::Topology Scenario::topology() const {
    try {
        if (!clusters.empty()) return sim::Topology::from_clusters(clusters);
        return sim::Topology::even(n, m);
    } catch (const UsageError& e) {
        throw ConfigError("topology", e.what());
    }
}

std::size_t Sweep::size() const noexcept {
    auto len = [](std::size_t k) { return k ? k : 1; };
    return len(T.size()) * len(N.size()) * len(n.size()) * len(sigma.size()) * len(d_max.size());
}

std::uint64_t run_seed(std::uint64_t root, std::size_t s) noexcept { return derive_seed(root, {stream::run, s}); }

RunSetup resolve(const Scenario& sc, std::uint64_t seed) {
    RunSetup r{sc.topology(), sc.faults, sc.schedule, sc.algorithm};
    r.schedule.seed = seed;
    auto& a = r.algorithm;
    if (sc.lr_rule == LrRule::SqrtNOverT)
        a.schedule = sgd::Constant{std::sqrt(static_cast<double>(a.N) / static_cast<double>(a.T))};
    if (a.q_schedule.size() == 1 && a.T > 1) a.q_schedule.assign(a.T, a.q_schedule.front());
    if (a.variant == sgd::Variant::NonConvex && sc.random_tau) {
        Rng rng(derive_seed(sc.tau_seed.value_or(seed), {stream::tau}));
        a.tau = std::uniform_int_distribution<std::size_t>(1, a.T)(rng);
    }
    return r;
}

void validate(const Scenario& sc) {
    const sim::Topology topo = sc.topology();
    if (topo.n() != sc.n) throw ConfigError("topology.n", "topology has " + std::to_string(topo.n()) + " processes");
    if (sc.schedule.d_max == 0) throw ConfigError("schedule.D_max", "D_max must be at least 1");
    if (sc.schedule.local_max == 0) throw ConfigError("schedule.local_max", "local_max must be at least 1");
    const oracle::Oracle o = sc.oracle.build();
    const bool nonconvex = sc.algorithm.variant == sgd::Variant::NonConvex;
    sim::validate(topo, sc.faults, nonconvex && sc.algorithm.assume_cluster_majority);
    if (sc.faults.partition) sim::inject_partition(topo, sim::FaultPlan{}, *sc.faults.partition);
    if (sc.lr_rule == LrRule::SqrtNOverT && sc.algorithm.T == 0) throw ConfigError("algorithm.T", "T must be at least 1");
    if (sc.algorithm.q_schedule.size() > 1 && sc.algorithm.q_schedule.size() != sc.algorithm.T)
        throw ConfigError("algorithm.q_t", "per-iteration q_t list must have T entries");
    if (sc.algorithm.T == 0) throw ConfigError("algorithm.T", "T must be at least 1");
    RunSetup r = resolve(sc, sc.schedule.seed);
    sgd::validate(r.algorithm, o, topo.n(), sc.faults.max_crashes());
    if (nonconvex && r.algorithm.cluster_quorum && *r.algorithm.cluster_quorum > topo.m())
        throw ConfigError("algorithm.cluster_quorum", "cluster quorum exceeds the number of clusters");
}

std::vector<Configuration> expand(const EnsembleSpec& spec) {
    if (spec.seeds == 0) throw UsageError("expand: ensemble needs at least one seed");
    const auto& sw = spec.sweep;
    auto axis = [](const auto& v, auto base) { return v.empty() ? std::vector<decltype(base)>{base} : v; };
    const Scenario& b = spec.base;
    std::vector<Configuration> out;
    for (std::size_t T : axis(sw.T, b.algorithm.T))
        for (std::size_t N : axis(sw.N, b.algorithm.N))
            for (std::size_t n : axis(sw.n, b.n))
                for (double sigma : axis(sw.sigma, b.oracle.sigma))
                    for (std::uint32_t dm : axis(sw.d_max, b.schedule.d_max)) {
                        Scenario s = b;
                        s.algorithm.T = T;
                        s.algorithm.N = N;
                        s.n = n;
                        s.oracle.sigma = sigma;
                        s.schedule.d_max = dm;
                        out.push_back({s, fnv1a(scenario::to_text(s))});
                    }
    return out;
}

Stat summarize(std::span<const double> samples) {
    Acc a;
    for (double x : samples) a.add(x);
    Stat s = a.stat();
    if (s.n == 0) s.mean = 0.0;
    return s;
}

std::size_t thread_count() {
    if (const char* env = std::getenv("ASGD_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min(thread_count(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr error;
    std::mutex mu;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count || stop.load()) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
                stop = true;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

Metrics estimate(const Scenario& scenario, std::size_t seeds, std::uint64_t seed_root) {
    if (seeds == 0) throw UsageError("estimate: at least one seed is required");
    validate(scenario);
    const oracle::Oracle o = scenario.oracle.build();

    std::vector<SeedResult> runs(seeds);
    parallel_for(seeds, [&](std::size_t s) { runs[s] = run_one(scenario, o, run_seed(seed_root, s)); });

    Metrics m;
    m.seeds = seeds;
    Acc events, messages, rounds;
    for (std::size_t s = 0; s < seeds; ++s) {
        events.add(runs[s].events);
        messages.add(runs[s].messages);
        rounds.add(runs[s].maa_rounds);
        if (!runs[s].ok) {
            m.complete = false;
            m.failures.push_back("seed " + std::to_string(s) + ": " + runs[s].diagnosis);
        }
    }
    m.events = events.stat();
    m.messages = messages.stat();
    m.maa_rounds = rounds.stat();
    if (!m.complete) return m;

    const std::size_t P = pair_count(scenario.n);
    const std::size_t steps = runs.front().grad_t.size();

    Acc ext;
    for (const auto& r : runs) ext.add(r.external);
    m.external_err = ext.stat();

    // internal_err: the pair with the largest mean output distance
    m.internal_err = {0.0, 0.0, seeds};
    for (std::size_t k = 0; k < P; ++k) {
        Acc a;
        for (const auto& r : runs) a.add(r.pair_out[k]);
        if (a.n && a.mean() > m.internal_err.mean) m.internal_err = a.stat();
    }

    m.diameter_series.assign(steps, 0.0);
    m.delta = {0.0, 0.0, seeds};
    std::vector<Acc> cells(P);
    for (std::size_t t = 0; t < steps; ++t) {
        for (auto& c : cells) c = {};
        for (const auto& r : runs)
            for (std::size_t k = 0; k < P; ++k) cells[k].add(r.pair_t[t * P + k]);
        for (const auto& c : cells) {
            if (!c.n) continue;
            m.diameter_series[t] = std::max(m.diameter_series[t], c.mean());
            if (c.mean() > m.delta.mean) m.delta = c.stat();
        }
    }

    std::vector<Acc> grad(steps), dist(steps);
    for (const auto& r : runs)
        for (std::size_t t = 0; t < steps; ++t) {
            grad[t].add(r.grad_t[t]);
            if (!r.dist_t.empty()) dist[t].add(r.dist_t[t]);
        }
    m.grad_sq_series.resize(steps);
    for (std::size_t t = 0; t < steps; ++t) m.grad_sq_series[t] = grad[t].mean();
    if (!runs.front().dist_t.empty()) {
        m.dist_sq_series.resize(steps);
        for (std::size_t t = 0; t < steps; ++t) m.dist_sq_series[t] = dist[t].mean();
    }
    // min over t in [1, T]: snapshot index t-1, the final x_{T+1} excluded
    std::size_t best = 0;
    for (std::size_t t = 1; t + 1 < steps; ++t)
        if (grad[t].mean() < grad[best].mean()) best = t;
    m.min_grad_sq = grad[best].stat();
    m.min_grad_t = best + 1;

    const RunSetup setup = resolve(scenario, run_seed(seed_root, 0));
    if (const auto bound = envelope_bound(setup, o)) {
        std::size_t hits = 0, total = 0;
        for (const auto& r : runs) {
            hits += r.env_hits;
            total += r.env_total;
        }
        m.envelope_bound = *bound;
        m.envelope_fraction = total ? static_cast<double>(hits) / static_cast<double>(total) : 1.0;
    }
    return m;
}

std::vector<ConfigResult> estimate(const EnsembleSpec& spec) {
    std::vector<ConfigResult> out;
    for (auto& c : expand(spec)) {
        Metrics m = estimate(c.scenario, spec.seeds, spec.seed_root);
        out.push_back({std::move(c), std::move(m)});
    }
    return out;
}

RateFit fit_rate(std::span<const std::pair<double, double>> series) {
    if (series.size() < 3) throw UsageError("fit_rate: need at least three points");
    std::vector<double> x, y;
    for (const auto& [scale, value] : series) {
        if (!(scale > 0.0) || !(value > 0.0)) throw UsageError("fit_rate: scales and values must be positive");
        x.push_back(std::log(scale));
        y.push_back(std::log(value));
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw UsageError("fit_rate: scales must not all be equal");
    RateFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double res = y[i] - (f.intercept + f.slope * x[i]);
        f.residuals.push_back(res);
        sse += res * res;
    }
    f.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    return f;
}

namespace {
constexpr double kResolutionUlps = 1024.0;
}  // namespace

ContractionReport contraction_report(std::span<const sim::RunTrace> traces, maa::RoundContext context) {
    ContractionReport rep;
    rep.context = context;
    rep.bound = maa::round_factor(context);
    std::vector<Vector> prev, next;
    for (const auto& tr : traces) {
        for (std::size_t k = 0; k + 1 < tr.snapshots.size(); ++k) {
            if (rep.rounds.size() <= k) rep.rounds.push_back({k + 1, 0.0, 0, 0, 0});
            RoundRatio& rr = rep.rounds[k];
            prev.clear();
            next.clear();
            for (const auto& v : tr.snapshots[k])
                if (v) prev.push_back(*v);
            for (const auto& v : tr.snapshots[k + 1])
                if (v) next.push_back(*v);
            if (prev.empty() || next.empty()) continue;
            const double d0 = diameter_sq(prev);
            if (d0 == 0.0) {
                ++rr.skipped;
                ++rep.skipped;
                continue;
            }
            double scale = 0.0;
            for (const auto& v : prev)
                for (double x : v.coords()) scale = std::max(scale, std::abs(x));
            // Midpoints are rounded to within half an ulp, so ratios of rounds this close
            // to the representable spacing measure rounding, not the rule.
            const double resolution = kResolutionUlps * std::numeric_limits<double>::epsilon() * scale;
            if (d0 <= resolution * resolution * static_cast<double>(prev.front().dim())) {
                ++rr.unresolved;
                ++rep.unresolved;
                continue;
            }
            const double ratio = diameter_sq(next) / d0;
            rr.max_ratio = std::max(rr.max_ratio, ratio);
            ++rr.samples;
            ++rep.samples;
            rep.max_ratio = std::max(rep.max_ratio, ratio);
            if (ratio > rep.bound) ++rep.violations;
        }
    }
    return rep;
}

namespace {

bool near_corner(const Vector& x, double sign, double radius) {
    Vector c(x.dim(), sign);
    return distance_sq(x, c) <= radius * radius;
}

}  // namespace

DivergenceResult divergence_demo(const Scenario& scenario, const sim::Partition& partition, std::size_t seeds,
                                 std::uint64_t seed_root, double landing_radius) {
    if (seeds == 0) throw UsageError("divergence_demo: at least one seed is required");
    const sim::Topology topo = scenario.topology();
    const sim::FaultPlan faults = sim::inject_partition(topo, scenario.faults, partition);
    if (partition.a.empty() || partition.b.empty()) throw UsageError("divergence_demo: both sides must be nonempty");
    validate(scenario);
    const oracle::Oracle o = scenario.oracle.build();

    struct Side {
        std::optional<Vector> rep;
        std::vector<Vector> outs;
    };
    struct One {
        bool ok = true;
        std::string diagnosis;
        double cross = kNaN;
        Side a, b;
    };
    std::vector<One> runs(seeds);
    parallel_for(seeds, [&](std::size_t s) {
        RunSetup setup = resolve(scenario, run_seed(seed_root, s));
        setup.faults = faults;
        sim::TraceOptions opts;
        opts.journal = false;
        const auto tr = sim::run(setup.topology, setup.faults, setup.schedule, setup.algorithm, o, opts);
        One& r = runs[s];
        if (!tr.ok()) {
            r.ok = false;
            r.diagnosis = tr.diagnosis;
            return;
        }
        auto collect = [&](const std::vector<ProcessId>& side, Side& out) {
            for (ProcessId p : side)
                if (!tr.crashed[p] && tr.outputs[p]) out.outs.push_back(*tr.outputs[p]);
            if (!out.outs.empty()) out.rep = out.outs.front();
        };
        collect(partition.a, r.a);
        collect(partition.b, r.b);
        double sum = 0.0;
        std::size_t cnt = 0;
        for (const auto& x : r.a.outs)
            for (const auto& y : r.b.outs) {
                sum += distance_sq(x, y);
                ++cnt;
            }
        if (cnt) r.cross = sum / static_cast<double>(cnt);
    });

    DivergenceResult res;
    res.seeds = seeds;
    Acc cross;
    std::size_t ap = 0, am = 0, bp = 0, bm = 0, na = 0, nb = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
        const One& r = runs[s];
        if (!r.ok) {
            res.complete = false;
            res.failures.push_back("seed " + std::to_string(s) + ": " + r.diagnosis);
            continue;
        }
        cross.add(r.cross);
        if (r.a.rep) {
            ++na;
            ap += near_corner(*r.a.rep, 1.0, landing_radius);
            am += near_corner(*r.a.rep, -1.0, landing_radius);
        }
        if (r.b.rep) {
            ++nb;
            bp += near_corner(*r.b.rep, 1.0, landing_radius);
            bm += near_corner(*r.b.rep, -1.0, landing_radius);
        }
    }
    if (!res.complete) return res;
    res.cross_dist_sq = cross.stat();
    auto frac = [](std::size_t k, std::size_t n) { return n ? static_cast<double>(k) / static_cast<double>(n) : 0.0; };
    res.a_plus = frac(ap, na);
    res.a_minus = frac(am, na);
    res.b_plus = frac(bp, nb);
    res.b_minus = frac(bm, nb);
    return res;
}

LandingStats sequential_landing(const Scenario& scenario, std::size_t batch, std::size_t runs, std::uint64_t seed_root,
                                double radius) {
    if (runs == 0) throw UsageError("sequential_landing: at least one run is required");
    const oracle::Oracle o = scenario.oracle.build();
    std::vector<std::uint8_t> side(runs, 0);
    parallel_for(runs, [&](std::size_t s) {
        const RunSetup setup = resolve(scenario, run_seed(seed_root, s));
        Rng rng(derive_seed(setup.schedule.seed, {stream::process_noise, 0}));
        const Vector x = oracle::sequential_sgd(o, setup.algorithm.T, setup.algorithm.schedule, batch,
                                                setup.algorithm.x1, rng);
        side[s] = near_corner(x, 1.0, radius) ? 1 : near_corner(x, -1.0, radius) ? 2 : 0;
    });
    LandingStats st;
    st.runs = runs;
    for (auto v : side) {
        st.plus += v == 1;
        st.minus += v == 2;
    }
    st.plus /= static_cast<double>(runs);
    st.minus /= static_cast<double>(runs);
    return st;
}

// --------------------------------------------------------------------------

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::pair<std::string, Stat>> stat_rows(const Metrics& m) {
    std::vector<std::pair<std::string, Stat>> rows;
    if (m.complete) {
        rows.emplace_back("external_err", m.external_err);
        rows.emplace_back("internal_err", m.internal_err);
        rows.emplace_back("delta", m.delta);
        rows.emplace_back("min_grad_sq", m.min_grad_sq);
        if (m.envelope_fraction) rows.emplace_back("envelope_fraction", Stat{*m.envelope_fraction, 0.0, m.seeds});
    } else {
        rows.emplace_back("liveness_violations", Stat{static_cast<double>(m.failures.size()), 0.0, m.seeds});
    }
    rows.emplace_back("events", m.events);
    rows.emplace_back("messages", m.messages);
    rows.emplace_back("maa_rounds", m.maa_rounds);
    return rows;
}

}  // namespace

void write_csv(std::span<const ConfigResult> results, std::ostream& out) {
    out << "config_hash,T,N,n,sigma,d_max,stat,mean,stderr,n_seeds\n";
    for (const auto& r : results) {
        const Scenario& s = r.config.scenario;
        for (const auto& [name, st] : stat_rows(r.metrics))
            out << hex(r.config.hash) << ',' << s.algorithm.T << ',' << s.algorithm.N << ',' << s.n << ','
                << num(s.oracle.sigma) << ',' << s.schedule.d_max << ',' << name << ',' << num(st.mean) << ','
                << num(st.stderr_) << ',' << st.n << '\n';
    }
}

std::string to_csv(std::span<const ConfigResult> results) {
    std::ostringstream os;
    write_csv(results, os);
    return os.str();
}

std::string to_json(std::span<const ConfigResult> results) {
    using nlohmann::json;
    json arr = json::array();
    for (const auto& r : results) {
        const Scenario& s = r.config.scenario;
        const Metrics& m = r.metrics;
        json stats = json::object();
        for (const auto& [name, st] : stat_rows(m)) stats[name] = {{"mean", st.mean}, {"stderr", st.stderr_}, {"n", st.n}};
        json c = {{"config_hash", hex(r.config.hash)},
                  {"T", s.algorithm.T},
                  {"N", s.algorithm.N},
                  {"n", s.n},
                  {"sigma", s.oracle.sigma},
                  {"d_max", s.schedule.d_max},
                  {"seeds", m.seeds},
                  {"complete", m.complete},
                  {"failures", m.failures},
                  {"stats", stats},
                  {"min_grad_t", m.min_grad_t}};
        if (m.envelope_fraction) c["envelope_bound"] = m.envelope_bound;
        c["series"] = {{"diameter_sq", m.diameter_series}, {"grad_sq", m.grad_sq_series}};
        if (!m.dist_sq_series.empty()) c["series"]["dist_sq"] = m.dist_sq_series;
        arr.push_back(std::move(c));
    }
    return json{{"format", "asgd-metrics"}, {"version", 1}, {"configs", arr}}.dump(1);
}

}  // namespace asgd::harness
