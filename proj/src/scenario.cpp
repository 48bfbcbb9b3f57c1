#include "asgd/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "asgd/error.hpp"
#include "json.hpp"

namespace asgd::scenario {

using json = nlohmann::json;
using harness::EnsembleSpec;
using harness::LrRule;
using harness::OracleSpec;
using harness::Scenario;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

std::string index_path(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// Field access that remembers which keys were consumed, so leftovers can be
// reported as unknown.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "$" : path_, "expected an object");
    }

    const json* get(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    std::string path(const std::string& key) const { return join(path_, key); }

    double number(const std::string& key, double fallback) {
        const json* v = get(key);
        if (!v) return fallback;
        if (!v->is_number()) throw ConfigError(path(key), "expected a number");
        return v->get<double>();
    }

    std::uint64_t integer(const std::string& key, std::uint64_t fallback) {
        const json* v = get(key);
        return v ? to_uint(*v, path(key)) : fallback;
    }

    bool boolean(const std::string& key, bool fallback) {
        const json* v = get(key);
        if (!v) return fallback;
        if (!v->is_boolean()) throw ConfigError(path(key), "expected true or false");
        return v->get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback) {
        const json* v = get(key);
        if (!v) return fallback;
        if (!v->is_string()) throw ConfigError(path(key), "expected a string");
        return v->get<std::string>();
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(join(path_, it.key()), "unknown field");
    }

    static std::uint64_t to_uint(const json& v, const std::string& path) {
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer()) {
            if (v.get<std::int64_t>() < 0) throw ConfigError(path, "must be non-negative");
            return static_cast<std::uint64_t>(v.get<std::int64_t>());
        }
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (d >= 0.0 && d == static_cast<double>(static_cast<std::uint64_t>(d))) return static_cast<std::uint64_t>(d);
        }
        throw ConfigError(path, "expected a non-negative integer");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

Vector to_vector(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
    Vector out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (!v[k].is_number()) throw ConfigError(index_path(path, k), "expected a number");
        out[k] = v[k].get<double>();
    }
    return out;
}

template <class T>
std::vector<T> uint_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, "expected an array");
    std::vector<T> out;
    for (std::size_t k = 0; k < v.size(); ++k) out.push_back(static_cast<T>(Obj::to_uint(v[k], index_path(path, k))));
    return out;
}

std::vector<double> number_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, "expected an array");
    std::vector<double> out;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (!v[k].is_number()) throw ConfigError(index_path(path, k), "expected a number");
        out.push_back(v[k].get<double>());
    }
    return out;
}

void parse_topology(const json& j, Scenario& s) {
    Obj o(j, "topology");
    const json* n = o.get("n");
    const json* c = o.get("clusters");
    if (c && c->is_array()) {
        std::size_t total = 0;
        for (std::size_t k = 0; k < c->size(); ++k) {
            s.clusters.push_back(uint_list<ProcessId>((*c)[k], index_path("topology.clusters", k)));
            total += s.clusters.back().size();
        }
        s.m = s.clusters.size();
        s.n = n ? Obj::to_uint(*n, "topology.n") : total;
        if (s.n != total)
            throw ConfigError("topology.n", "n = " + std::to_string(s.n) + " but the clusters list " +
                                                std::to_string(total) + " processes");
    } else {
        s.n = n ? Obj::to_uint(*n, "topology.n") : 1;
        s.m = c ? Obj::to_uint(*c, "topology.clusters") : 1;
    }
    o.finish();
}

void parse_faults(const json& j, Scenario& s) {
    Obj o(j, "faults");
    if (const json* cs = o.get("crashes")) {
        if (!cs->is_array()) throw ConfigError("faults.crashes", "expected an array");
        for (std::size_t k = 0; k < cs->size(); ++k) {
            const std::string p = index_path("faults.crashes", k);
            Obj c((*cs)[k], p);
            sim::Crash crash;
            const json* proc = c.get("process");
            if (!proc) throw ConfigError(c.path("process"), "missing");
            crash.process = static_cast<ProcessId>(Obj::to_uint(*proc, c.path("process")));
            const json* ev = c.get("at_event");
            const json* it = c.get("at_iteration");
            if ((ev != nullptr) == (it != nullptr))
                throw ConfigError(p, "give exactly one of at_event and at_iteration");
            crash.trigger = ev ? sim::Crash::Trigger::AtEvent : sim::Crash::Trigger::AtIteration;
            crash.value = ev ? Obj::to_uint(*ev, c.path("at_event")) : Obj::to_uint(*it, c.path("at_iteration"));
            c.finish();
            s.faults.crashes.push_back(crash);
        }
    }
    if (const json* pj = o.get("partition")) {
        Obj p(*pj, "faults.partition");
        sim::Partition part;
        const json* a = p.get("a");
        const json* b = p.get("b");
        if (!a || !b) throw ConfigError("faults.partition", "needs both sides a and b");
        part.a = uint_list<ProcessId>(*a, "faults.partition.a");
        part.b = uint_list<ProcessId>(*b, "faults.partition.b");
        p.finish();
        s.faults.partition = std::move(part);
    }
    if (const json* f = o.get("f")) s.faults.f = Obj::to_uint(*f, "faults.f");
    if (const json* f = o.get("f_c")) s.faults.f_c = Obj::to_uint(*f, "faults.f_c");
    o.finish();
}

void parse_algorithm(const json& j, Scenario& s) {
    Obj o(j, "algorithm");
    auto& a = s.algorithm;
    const std::string variant = o.string("variant", "");
    if (variant == "strongly_convex")
        a.variant = sgd::Variant::StronglyConvex;
    else if (variant == "non_convex")
        a.variant = sgd::Variant::NonConvex;
    else
        throw ConfigError("algorithm.variant", "expected \"strongly_convex\" or \"non_convex\"");
    a.T = o.integer("T", 1);
    a.N = o.integer("N", 1);
    if (const json* sj = o.get("schedule")) {
        Obj sc(*sj, "algorithm.schedule");
        const std::string kind = sc.string("kind", "");
        if (kind == "decreasing") {
            a.schedule = sgd::Decreasing{sc.number("beta", 1.0), sc.number("gamma", 1.0)};
        } else if (kind == "constant") {
            a.schedule = sgd::Constant{sc.number("eta", 0.1)};
        } else if (kind == "sqrt_n_over_t") {
            s.lr_rule = LrRule::SqrtNOverT;
        } else {
            throw ConfigError("algorithm.schedule.kind", "expected \"decreasing\", \"constant\" or \"sqrt_n_over_t\"");
        }
        sc.finish();
    }
    if (const json* q = o.get("q_t")) {
        if (q->is_number())
            a.q_schedule = {q->get<double>()};
        else
            a.q_schedule = number_list(*q, "algorithm.q_t");
    }
    const std::string rule = o.string("maa_rule", "mid_extremes");
    if (rule == "mid_extremes")
        a.rule = maa::Rule::MidExtremes;
    else if (rule == "approach_extreme")
        a.rule = maa::Rule::ApproachExtreme;
    else
        throw ConfigError("algorithm.maa_rule", "expected \"mid_extremes\" or \"approach_extreme\"");
    if (const json* t = o.get("tau")) {
        a.tau = Obj::to_uint(*t, "algorithm.tau");
        s.random_tau = false;
    }
    if (const json* t = o.get("tau_seed")) {
        if (!s.random_tau) throw ConfigError("algorithm.tau_seed", "give either tau or tau_seed");
        s.tau_seed = Obj::to_uint(*t, "algorithm.tau_seed");
    }
    if (const json* q = o.get("cluster_quorum")) a.cluster_quorum = Obj::to_uint(*q, "algorithm.cluster_quorum");
    a.assume_cluster_majority = o.boolean("assume_cluster_majority", true);
    a.enforce_step_bounds = o.boolean("enforce_step_bounds", true);
    o.finish();
}

void parse_oracle(const json& j, Scenario& s) {
    Obj o(j, "oracle");
    auto& spec = s.oracle;
    const std::string kind = o.string("kind", "");
    if (kind == "quadratic")
        spec.kind = OracleSpec::Kind::Quadratic;
    else if (kind == "double_well")
        spec.kind = OracleSpec::Kind::DoubleWell;
    else
        throw ConfigError("oracle.kind", "expected \"quadratic\" or \"double_well\"");
    std::optional<Vector> x1;
    if (const json* v = o.get("x1")) x1 = to_vector(*v, "oracle.x1");
    if (const json* v = o.get("x_star")) spec.x_star = to_vector(*v, "oracle.x_star");
    spec.d = o.integer("d", x1 ? x1->dim() : 1);
    spec.mu = o.number("mu", 1.0);
    spec.L = o.number("L", spec.mu);
    spec.sigma = o.number("sigma", 0.0);
    spec.radius = o.number("radius", 2.0);
    s.algorithm.x1 = x1 ? *x1 : Vector(spec.d);
    o.finish();
}

void parse_schedule(const json& j, Scenario& s) {
    Obj o(j, "schedule");
    s.schedule.seed = o.integer("seed", s.schedule.seed);
    s.schedule.d_max = static_cast<std::uint32_t>(o.integer("D_max", s.schedule.d_max));
    s.schedule.local_max = static_cast<std::uint32_t>(o.integer("local_max", s.schedule.local_max));
    s.schedule.event_budget = o.integer("event_budget", s.schedule.event_budget);
    o.finish();
}

void parse_ensemble(const json& j, EnsembleSpec& e) {
    Obj o(j, "ensemble");
    e.seeds = o.integer("S", 1);
    if (e.seeds == 0) throw ConfigError("ensemble.S", "S must be at least 1");
    e.seed_root = o.integer("seed_root", e.base.schedule.seed);
    if (const json* sj = o.get("sweeps")) {
        Obj sw(*sj, "ensemble.sweeps");
        if (const json* v = sw.get("T")) e.sweep.T = uint_list<std::size_t>(*v, "ensemble.sweeps.T");
        if (const json* v = sw.get("N")) e.sweep.N = uint_list<std::size_t>(*v, "ensemble.sweeps.N");
        if (const json* v = sw.get("n")) e.sweep.n = uint_list<std::size_t>(*v, "ensemble.sweeps.n");
        if (const json* v = sw.get("sigma")) e.sweep.sigma = number_list(*v, "ensemble.sweeps.sigma");
        if (const json* v = sw.get("D_max")) e.sweep.d_max = uint_list<std::uint32_t>(*v, "ensemble.sweeps.D_max");
        sw.finish();
        if (!e.sweep.n.empty() && !e.base.clusters.empty())
            throw ConfigError("ensemble.sweeps.n", "sweeping n needs the topology given as a cluster count");
    }
    o.finish();
}

EnsembleSpec from_json(const json& doc) {
    Obj root(doc, "");
    const std::uint64_t version = root.integer("schema", kSchemaVersion);
    if (version != kSchemaVersion)
        throw ConfigError("schema", "unsupported schema version " + std::to_string(version) + " (expected " +
                                        std::to_string(kSchemaVersion) + ")");
    EnsembleSpec e;
    Scenario& s = e.base;
    if (const json* v = root.get("topology")) parse_topology(*v, s);
    const json* alg = root.get("algorithm");
    if (!alg) throw ConfigError("algorithm", "missing");
    parse_algorithm(*alg, s);
    const json* orc = root.get("oracle");
    if (!orc) throw ConfigError("oracle", "missing");
    parse_oracle(*orc, s);
    if (const json* v = root.get("faults")) parse_faults(*v, s);
    if (const json* v = root.get("schedule")) parse_schedule(*v, s);
    if (const json* v = root.get("ensemble")) parse_ensemble(*v, e);
    else e.seed_root = s.schedule.seed;
    root.finish();
    harness::validate(s);
    return e;
}

json parse_document(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& err) {
        throw ConfigError("$", std::string("malformed JSON: ") + err.what());
    }
}

void apply_override(json& doc, const std::string& item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set", "expected key=value, got \"" + item + "\"");
    const std::string key = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("--set", "empty path segment in \"" + key + "\"");
        if (!node->is_object()) throw ConfigError("--set", "\"" + key + "\" does not name an object field");
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

json vec_json(const Vector& v) {
    json a = json::array();
    for (double c : v.coords()) a.push_back(c);
    return a;
}

json scenario_json(const Scenario& s) {
    json doc;
    doc["schema"] = kSchemaVersion;
    json topo;
    topo["n"] = s.n;
    if (s.clusters.empty())
        topo["clusters"] = s.m;
    else
        topo["clusters"] = s.clusters;
    doc["topology"] = topo;

    json faults = json::object();
    json crashes = json::array();
    for (const auto& c : s.faults.crashes)
        crashes.push_back({{"process", c.process},
                           {c.trigger == sim::Crash::Trigger::AtEvent ? "at_event" : "at_iteration", c.value}});
    if (!crashes.empty()) faults["crashes"] = crashes;
    if (s.faults.partition) faults["partition"] = {{"a", s.faults.partition->a}, {"b", s.faults.partition->b}};
    if (s.faults.f) faults["f"] = *s.faults.f;
    if (s.faults.f_c) faults["f_c"] = *s.faults.f_c;
    doc["faults"] = faults;

    const auto& a = s.algorithm;
    json alg;
    alg["variant"] = sgd::to_string(a.variant);
    alg["T"] = a.T;
    alg["N"] = a.N;
    if (s.lr_rule == LrRule::SqrtNOverT)
        alg["schedule"] = {{"kind", "sqrt_n_over_t"}};
    else if (const auto* d = std::get_if<sgd::Decreasing>(&a.schedule))
        alg["schedule"] = {{"kind", "decreasing"}, {"beta", d->beta}, {"gamma", d->gamma}};
    else
        alg["schedule"] = {{"kind", "constant"}, {"eta", std::get<sgd::Constant>(a.schedule).eta}};
    if (a.q_schedule.size() == 1)
        alg["q_t"] = a.q_schedule.front();
    else if (!a.q_schedule.empty())
        alg["q_t"] = a.q_schedule;
    alg["maa_rule"] = a.rule == maa::Rule::MidExtremes ? "mid_extremes" : "approach_extreme";
    if (!s.random_tau) alg["tau"] = a.tau;
    if (s.tau_seed) alg["tau_seed"] = *s.tau_seed;
    if (a.cluster_quorum) alg["cluster_quorum"] = *a.cluster_quorum;
    alg["assume_cluster_majority"] = a.assume_cluster_majority;
    alg["enforce_step_bounds"] = a.enforce_step_bounds;
    doc["algorithm"] = alg;

    const auto& o = s.oracle;
    json orc;
    orc["kind"] = o.kind == OracleSpec::Kind::Quadratic ? "quadratic" : "double_well";
    orc["d"] = o.d;
    orc["sigma"] = o.sigma;
    orc["x1"] = vec_json(a.x1);
    if (o.kind == OracleSpec::Kind::Quadratic) {
        orc["mu"] = o.mu;
        orc["L"] = o.L;
        if (o.x_star) orc["x_star"] = vec_json(*o.x_star);
    } else {
        orc["radius"] = o.radius;
    }
    doc["oracle"] = orc;

    doc["schedule"] = {{"seed", s.schedule.seed},
                       {"D_max", s.schedule.d_max},
                       {"local_max", s.schedule.local_max},
                       {"event_budget", s.schedule.event_budget}};
    return doc;
}

}  // namespace

EnsembleSpec parse(std::string_view text) { return from_json(parse_document(text)); }

EnsembleSpec parse(std::string_view text, const std::vector<std::string>& overrides) {
    json doc = parse_document(text);
    for (const auto& item : overrides) apply_override(doc, item);
    return from_json(doc);
}

EnsembleSpec load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("$", "cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string to_text(const Scenario& scenario) { return scenario_json(scenario).dump(); }

std::string to_text(const EnsembleSpec& spec) {
    json doc = scenario_json(spec.base);
    json sweeps = json::object();
    if (!spec.sweep.T.empty()) sweeps["T"] = spec.sweep.T;
    if (!spec.sweep.N.empty()) sweeps["N"] = spec.sweep.N;
    if (!spec.sweep.n.empty()) sweeps["n"] = spec.sweep.n;
    if (!spec.sweep.sigma.empty()) sweeps["sigma"] = spec.sweep.sigma;
    if (!spec.sweep.d_max.empty()) sweeps["D_max"] = spec.sweep.d_max;
    doc["ensemble"] = {{"S", spec.seeds}, {"seed_root", spec.seed_root}, {"sweeps", sweeps}};
    return doc.dump();
}

}  // namespace asgd::scenario
