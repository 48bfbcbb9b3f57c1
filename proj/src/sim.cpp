#include "asgd/sim.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <memory>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "asgd/error.hpp"
#include "asgd/rng.hpp"

namespace asgd::sim {

// --------------------------------------------------------------------------
// Topology and faults

Topology Topology::from_clusters(std::vector<std::vector<ProcessId>> clusters) {
    if (clusters.empty()) throw ConfigError("topology.clusters", "at least one cluster is required");
    std::size_t n = 0;
    for (const auto& c : clusters) {
        if (c.empty()) throw ConfigError("topology.clusters", "clusters must be nonempty");
        n += c.size();
    }
    Topology t;
    t.cluster_of_.assign(n, std::numeric_limits<ClusterId>::max());
    t.slot_of_.assign(n, 0);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (std::size_t s = 0; s < clusters[c].size(); ++s) {
            const ProcessId p = clusters[c][s];
            if (p >= n)
                throw ConfigError("topology.clusters", "process id " + std::to_string(p) + " outside [0, " +
                                                           std::to_string(n) + ")");
            if (t.cluster_of_[p] != std::numeric_limits<ClusterId>::max())
                throw ConfigError("topology.clusters", "process " + std::to_string(p) + " listed twice");
            t.cluster_of_[p] = static_cast<ClusterId>(c);
            t.slot_of_[p] = s;
        }
    }
    t.clusters_ = std::move(clusters);
    return t;
}

Topology Topology::even(std::size_t n, std::size_t m) {
    if (m == 0 || n < m) throw ConfigError("topology.m", "need 1 <= m <= n");
    std::vector<std::vector<ProcessId>> clusters(m);
    ProcessId next = 0;
    for (std::size_t c = 0; c < m; ++c) {
        const std::size_t size = n / m + (c < n % m ? 1 : 0);
        for (std::size_t k = 0; k < size; ++k) clusters[c].push_back(next++);
    }
    return from_clusters(std::move(clusters));
}

std::vector<ClusterId> Topology::clusters_of(std::span<const ProcessId> procs) const {
    std::set<ClusterId> out;
    for (ProcessId p : procs) out.insert(cluster(p));
    return {out.begin(), out.end()};
}

std::size_t FaultPlan::max_crashes() const noexcept {
    return f.value_or(crashes.size());
}

std::size_t crashed_cluster_count(const Topology& topo, const FaultPlan& plan) {
    std::vector<bool> dead(topo.n(), false);
    for (const auto& c : plan.crashes)
        if (c.process < topo.n()) dead[c.process] = true;
    std::size_t count = 0;
    for (const auto& members : topo.clusters())
        if (std::all_of(members.begin(), members.end(), [&](ProcessId p) { return dead[p]; })) ++count;
    return count;
}

namespace {

void check_partition(const Topology& topo, const Partition& part, bool usage) {
    auto fail = [usage](const std::string& msg) {
        if (usage) throw UsageError("inject_partition: " + msg);
        throw ConfigError("faults.partition", msg);
    };
    if (part.a.empty() || part.b.empty()) fail("both sides must be nonempty");
    std::set<ProcessId> seen;
    for (const auto* side : {&part.a, &part.b})
        for (ProcessId p : *side) {
            if (p >= topo.n()) fail("process id " + std::to_string(p) + " outside topology");
            if (!seen.insert(p).second) fail("process " + std::to_string(p) + " appears twice");
        }
    const auto ca = topo.clusters_of(part.a);
    const auto cb = topo.clusters_of(part.b);
    std::vector<ClusterId> both;
    std::set_intersection(ca.begin(), ca.end(), cb.begin(), cb.end(), std::back_inserter(both));
    if (!both.empty()) fail("cluster(A) and cluster(B) overlap in cluster " + std::to_string(both.front()));
}

}  // namespace

void validate(const Topology& topo, const FaultPlan& plan, bool assert_cluster_majority) {
    std::set<ProcessId> seen;
    for (const auto& c : plan.crashes) {
        if (c.process >= topo.n())
            throw ConfigError("faults.crashes", "process id " + std::to_string(c.process) + " outside topology");
        if (!seen.insert(c.process).second)
            throw ConfigError("faults.crashes", "process " + std::to_string(c.process) + " crashes twice");
    }
    if (plan.f && plan.crashes.size() > *plan.f)
        throw ConfigError("faults.f", std::to_string(plan.crashes.size()) + " crashes exceed f = " +
                                          std::to_string(*plan.f));
    const std::size_t fc = crashed_cluster_count(topo, plan);
    if (plan.f_c && fc > *plan.f_c)
        throw ConfigError("faults.f_c", std::to_string(fc) + " crashed clusters exceed f_c = " +
                                            std::to_string(*plan.f_c));
    if (assert_cluster_majority) {
        const std::size_t bound = (topo.m() - 1) / 2;
        const std::size_t declared = std::max(plan.f_c.value_or(0), fc);
        if (declared > bound)
            throw ConfigError("faults.f_c", "cluster-majority assumption violated: f_c = " + std::to_string(declared) +
                                                " > floor((m-1)/2) = " + std::to_string(bound));
    }
    if (plan.partition) check_partition(topo, *plan.partition, false);
}

FaultPlan inject_partition(const Topology& topo, FaultPlan plan, Partition partition) {
    check_partition(topo, partition, true);
    plan.partition = std::move(partition);
    return plan;
}

const char* to_string(EventKind k) noexcept {
    switch (k) {
        case EventKind::Crash: return "crash";
        case EventKind::Compute: return "compute";
        case EventKind::Send: return "send";
        case EventKind::Deliver: return "deliver";
        case EventKind::Drop: return "drop";
        case EventKind::Defer: return "defer";
        case EventKind::Release: return "release";
        case EventKind::Write: return "write";
        case EventKind::Read: return "read";
        case EventKind::Output: return "output";
    }
    return "?";
}

std::uint64_t digest(const Vector& v) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double c : v.coords()) {
        std::uint64_t bits;
        std::memcpy(&bits, &c, sizeof bits);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::vector<ProcessId> RunTrace::survivors() const {
    std::vector<ProcessId> out;
    for (std::size_t i = 0; i < crashed.size(); ++i)
        if (!crashed[i]) out.push_back(static_cast<ProcessId>(i));
    return out;
}

// --------------------------------------------------------------------------
// Engine

namespace {

template <class... Fs>
struct overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

using Actor = std::variant<sgd::StronglyConvexProcess, sgd::NonConvexProcess, maa::ClusterMaaProcess, maa::SmmaaProcess>;

constexpr std::uint32_t kLocal = std::numeric_limits<std::uint32_t>::max();

struct Message {
    MsgKind kind = MsgKind::Param;
    std::uint32_t iteration = 0;
    std::uint32_t round = 0;
    ProcessId sender = 0;
    ProcessId dest = 0;
    std::uint32_t payload = 0;
};

// One broadcast value shared by all its copies in flight.
struct Payload {
    maa::Point point;
    std::uint32_t refs = 0;
};

struct Entry {
    std::uint64_t tick;
    std::uint64_t key;
    ProcessId proc;
    std::uint32_t msg;
};

// Pops in (tick, key) order; equal pairs leave in insertion order. Delays are
// at least 1 and at most `max_delay`, so a ring of max_delay+1 buckets holds
// every pending tick. Buckets are kept sorted by descending key.
class CalendarQueue {
public:
    explicit CalendarQueue(std::uint64_t max_delay) : buckets_(max_delay + 1) {}

    bool empty() const noexcept { return size_ == 0; }

    /// `e.tick` must lie in (now, now + max_delay], where now is the last popped tick.
    void push(const Entry& e) {
        auto& b = buckets_[e.tick % buckets_.size()];
        auto it = b.end();
        while (it != b.begin() && (it - 1)->key <= e.key) --it;
        b.insert(it, e);
        ++size_;
    }

    Entry pop() {
        for (;;) {
            auto& b = buckets_[cur_ % buckets_.size()];
            if (!b.empty()) {
                const Entry e = b.back();
                b.pop_back();
                --size_;
                cur_ = e.tick;
                return e;
            }
            ++cur_;
        }
    }

private:
    std::vector<std::vector<Entry>> buckets_;
    std::uint64_t cur_ = 0;
    std::size_t size_ = 0;
};

struct Bank {
    maa::RoundRegisterBank bank;
    std::vector<bool> done;
};

std::uint64_t bank_key(ClusterId c, std::uint64_t instance, std::uint64_t maa_round) {
    if (instance >= (1ULL << 28) || maa_round >= (1ULL << 20) || c >= (1U << 16))
        throw UsageError("simulator: register address out of supported range");
    return (static_cast<std::uint64_t>(c) << 48) | (instance << 20) | maa_round;
}

bool same_bits(const Vector& a, const Vector& b) noexcept {
    return a.dim() == b.dim() && std::memcmp(a.coords().data(), b.coords().data(), a.dim() * sizeof(double)) == 0;
}

class Engine {
public:
    Engine(const Topology& topo, const FaultPlan& faults, const Schedule& sched, const TraceOptions& opts,
           RunTrace& trace)
        : topo_(topo), sched_(sched), opts_(opts), trace_(trace), rng_(derive_seed(sched.seed, {stream::schedule})),
          d_max_(sched.d_max), local_max_(sched.local_max), queue_(std::max(sched.d_max, sched.local_max)) {
        const std::size_t n = topo.n();
        crashed_.assign(n, false);
        local_pending_.assign(n, false);
        bank_cache_.assign(n, nullptr);
        bank_cache_key_.assign(n, 0);
        finished_.assign(n, false);
        steps_.assign(n, 0);
        last_iter_.assign(n, 0);
        maa_rounds_done_.assign(n, 0);
        triggers_.resize(n);
        for (const auto& c : faults.crashes) triggers_[c.process].push_back(c);
        any_triggers_ = !faults.crashes.empty();
        side_.assign(n, 0);
        if (faults.partition) {
            partition_active_ = true;
            for (ProcessId p : faults.partition->a) side_[p] = 1;
            for (ProcessId p : faults.partition->b) side_[p] = 2;
        }
        noise_.reserve(n);
        for (std::size_t p = 0; p < n; ++p) noise_.emplace_back(derive_seed(sched.seed, {stream::process_noise, p}));
        trace_.n = n;
        trace_.outputs.assign(n, std::nullopt);
        trace_.output_nodes.assign(n, maa::kNoNode);
        trace_.cluster_of.assign(topo.cluster_map().begin(), topo.cluster_map().end());
        actors_.reserve(n);
    }

    std::vector<Actor>& actors() { return actors_; }
    maa::WitnessLog* log() { return opts_.witness ? &trace_.witness : nullptr; }
    const sgd::SgdConfig* sgd_cfg = nullptr;

    void execute() {
        for (ProcessId p = 0; p < actors_.size(); ++p) {
            last_iter_[p] = iteration(p);
            if (!maybe_crash(p)) schedule_local(p);
        }
        for (;;) {
            if (queue_.empty()) {
                if (deferred_.empty()) break;
                release_deferred();
                continue;
            }
            if (trace_.counters.events >= sched_.event_budget) {
                fail("event budget of " + std::to_string(sched_.event_budget) + " events exhausted; " +
                     blocked_summary());
                return;
            }
            const Entry e = queue_.pop();
            now_ = e.tick;
            ProcessId p = e.proc;
            if (e.msg == kLocal) {
                local_pending_[p] = false;
                if (crashed_[p] || maybe_crash(p)) continue;
                do_local(p);
            } else {
                const Message m = msgs_[e.msg];
                free_.push_back(e.msg);
                if (crashed_[p] || maybe_crash(p)) {
                    ++trace_.counters.messages_dropped;
                    log_event(EventKind::Drop, p, m.sender, m.iteration, m.round, static_cast<std::uint32_t>(m.kind),
                              payloads_[m.payload].point.value);
                    release_payload(m.payload);
                    continue;
                }
                deliver(m);
                release_payload(m.payload);
            }
            ++trace_.counters.events;
            ++steps_[p];
            after_event(p);
        }
        for (ProcessId p = 0; p < actors_.size(); ++p) {
            if (!crashed_[p] && !finished_[p]) {
                fail("no enabled events; " + blocked_summary());
                return;
            }
        }
    }

    void finish() {
        trace_.crashed.assign(crashed_.begin(), crashed_.end());
        trace_.counters.maa_rounds = *std::max_element(maa_rounds_done_.begin(), maa_rounds_done_.end());
    }

private:
    // ---- actor queries

    std::size_t iteration(ProcessId p) const {
        return std::visit(overloaded{[](const sgd::StronglyConvexProcess& a) { return a.iteration(); },
                                     [](const sgd::NonConvexProcess& a) { return a.iteration(); },
                                     [](const maa::ClusterMaaProcess& a) { return a.round(); },
                                     [](const maa::SmmaaProcess& a) { return a.round(); }},
                          actors_[p]);
    }

    Want want(ProcessId p) const {
        return std::visit([](const auto& a) { return a.want(); }, actors_[p]);
    }

    std::string waiting_for(ProcessId p) const {
        return std::visit(overloaded{[](const maa::SmmaaProcess& a) {
                                         return std::string("SMMAA round ") + std::to_string(a.round()) + " (" +
                                                to_string(a.want()) + ")";
                                     },
                                     [](const auto& a) { return a.waiting_for(); }},
                          actors_[p]);
    }

    // ---- trace helpers

    void log_event(EventKind kind, ProcessId p, ProcessId peer, std::uint32_t it, std::uint32_t round,
                   std::uint32_t aux, const Vector& payload) {
        if (!opts_.events) return;
        trace_.events.push_back({trace_.counters.events, now_, kind, p, peer, it, round, aux, digest(payload)});
    }

    void log_event(EventKind kind, ProcessId p, std::uint32_t it = 0, std::uint32_t round = 0, std::uint32_t aux = 0) {
        if (!opts_.events) return;
        trace_.events.push_back({trace_.counters.events, now_, kind, p, p, it, round, aux, 0});
    }

    void fail(std::string why) {
        trace_.status = Status::LivenessViolation;
        trace_.diagnosis = std::move(why);
    }

    std::string blocked_summary() const {
        std::ostringstream os;
        bool first = true;
        for (ProcessId p = 0; p < actors_.size(); ++p) {
            if (crashed_[p] || finished_[p]) continue;
            os << (first ? "" : "; ") << "process " << p << " blocked (" << waiting_for(p) << ")";
            first = false;
        }
        return first ? "no process blocked" : os.str();
    }

    // ---- scheduling

    void schedule_local(ProcessId p) { schedule_local(p, want(p)); }

    void schedule_local(ProcessId p, Want w) {
        if (crashed_[p] || local_pending_[p]) return;
        if (w == Want::Wait || w == Want::Finished) return;
        push(local_max_, p, kLocal);
        local_pending_[p] = true;
    }

    // One 64-bit draw per event: the high half picks the delay in [1, max]
    // (multiply-shift), the low half is the tie-break key.
    void push(std::uint64_t max, ProcessId p, std::uint32_t msg) {
        const std::uint64_t x = rng_();
        const std::uint64_t delay = 1 + (((x >> 32) * max) >> 32);
        queue_.push({now_ + delay, x & 0xffffffffULL, p, msg});
    }

    void schedule_delivery(std::uint32_t idx) {
        push(d_max_, msgs_[idx].dest, idx);
    }

    std::uint32_t alloc_msg(const Message& m) {
        if (!free_.empty()) {
            const std::uint32_t idx = free_.back();
            free_.pop_back();
            msgs_[idx] = m;
            return idx;
        }
        msgs_.push_back(m);
        return static_cast<std::uint32_t>(msgs_.size() - 1);
    }

    std::uint32_t alloc_payload(maa::Point value, std::uint32_t refs) {
        if (!payload_free_.empty()) {
            const std::uint32_t idx = payload_free_.back();
            payload_free_.pop_back();
            payloads_[idx] = {std::move(value), refs};
            return idx;
        }
        payloads_.push_back({std::move(value), refs});
        return static_cast<std::uint32_t>(payloads_.size() - 1);
    }

    void release_payload(std::uint32_t idx) {
        if (--payloads_[idx].refs == 0) payload_free_.push_back(idx);
    }

    void broadcast(ProcessId from, MsgKind kind, std::size_t it, std::size_t round, maa::Point value) {
        const auto copies = static_cast<std::uint32_t>(actors_.size() - 1);
        if (copies == 0) return;
        const std::uint32_t payload = alloc_payload(std::move(value), copies);
        const auto it32 = static_cast<std::uint32_t>(it);
        const auto r32 = static_cast<std::uint32_t>(round);
        log_event(EventKind::Send, from, from, it32, r32, static_cast<std::uint32_t>(kind),
                  payloads_[payload].point.value);
        for (ProcessId q = 0; q < actors_.size(); ++q) {
            if (q == from) continue;
            ++trace_.counters.messages_sent;
            const std::uint32_t idx = alloc_msg({kind, it32, r32, from, q, payload});
            if (partition_active_ && side_[from] != 0 && side_[q] != 0 && side_[from] != side_[q]) {
                ++trace_.counters.messages_deferred;
                deferred_.push_back(idx);
                log_event(EventKind::Defer, from, q, it32, r32, static_cast<std::uint32_t>(kind),
                          payloads_[payload].point.value);
                continue;
            }
            schedule_delivery(idx);
        }
    }

    void release_deferred() {
        partition_active_ = false;
        for (std::uint32_t idx : deferred_) {
            const Message& m = msgs_[idx];
            log_event(EventKind::Release, m.sender, m.dest, m.iteration, m.round, static_cast<std::uint32_t>(m.kind),
                      payloads_[m.payload].point.value);
            schedule_delivery(idx);
        }
        deferred_.clear();
    }

    // ---- crashes

    bool maybe_crash(ProcessId p) {
        if (crashed_[p]) return true;
        if (!any_triggers_ || triggers_[p].empty()) return false;
        for (const auto& c : triggers_[p]) {
            const bool due = c.trigger == Crash::Trigger::AtEvent ? steps_[p] >= c.value : iteration(p) >= c.value;
            if (due && !finished_[p]) {
                crash(p);
                return true;
            }
        }
        return false;
    }

    void crash(ProcessId p) {
        crashed_[p] = true;
        log_event(EventKind::Crash, p, static_cast<std::uint32_t>(iteration(p)));
        const ClusterId c = topo_.cluster(p);
        for (auto it = banks_.begin(); it != banks_.end();) {
            if ((it->first >> 48) == c && bank_released(c, it->second))
                it = erase_bank(it);
            else
                ++it;
        }
        update_spread();
    }

    // ---- registers

    using BankMap = std::unordered_map<std::uint64_t, Bank>;

    BankMap::iterator erase_bank(BankMap::iterator it) {
        for (std::size_t q = 0; q < bank_cache_.size(); ++q)
            if (bank_cache_key_[q] == it->first) bank_cache_[q] = nullptr;
        return banks_.erase(it);
    }

    bool bank_released(ClusterId c, const Bank& b) const {
        const auto& members = topo_.members(c);
        for (std::size_t s = 0; s < members.size(); ++s)
            if (!b.done[s] && !crashed_[members[s]]) return false;
        return true;
    }

    maa::SmmaaProcess& smmaa_of(ProcessId p, std::uint64_t& instance, std::uint64_t& maa_round) {
        return std::visit(overloaded{[&](sgd::NonConvexProcess& a) -> maa::SmmaaProcess& {
                                         instance = a.iteration();
                                         maa_round = a.maa().round();
                                         return a.maa().smmaa();
                                     },
                                     [&](maa::ClusterMaaProcess& a) -> maa::SmmaaProcess& {
                                         instance = 0;
                                         maa_round = a.round();
                                         return a.smmaa();
                                     },
                                     [&](maa::SmmaaProcess& a) -> maa::SmmaaProcess& {
                                         instance = 0;
                                         maa_round = 0;
                                         return a;
                                     },
                                     [](sgd::StronglyConvexProcess&) -> maa::SmmaaProcess& {
                                         throw ModelViolation("strongly convex process has no shared memory");
                                     }},
                          actors_[p]);
    }

    void register_step(ProcessId p) {
        std::uint64_t instance = 0, maa_round = 0;
        maa::SmmaaProcess& sm = smmaa_of(p, instance, maa_round);
        const ClusterId c = topo_.cluster(p);
        const std::size_t size = topo_.members(c).size();
        const std::uint64_t key = bank_key(c, instance, maa_round);
        Bank* cached = bank_cache_[p];
        if (cached == nullptr || bank_cache_key_[p] != key) {
            auto it = banks_.find(key);
            if (it == banks_.end())
                it = banks_.emplace(key, Bank{maa::RoundRegisterBank(size, sm.rounds()), std::vector<bool>(size, false)})
                         .first;
            cached = bank_cache_[p] = &it->second;
            bank_cache_key_[p] = key;
        }
        Bank& b = *cached;
        const auto round = sm.round();
        const RegisterAddr addr{static_cast<std::uint32_t>(instance), static_cast<std::uint32_t>(maa_round),
                                static_cast<std::uint32_t>(round), 0};
        if (sm.want() == Want::Write) {
            RegisterAddr a = addr;
            a.slot = static_cast<std::uint32_t>(sm.slot());
            b.bank.write(round, sm.slot(), topo_.slot(p), sm.pending_write());
            ++trace_.counters.register_writes;
            log_event(EventKind::Write, p, p, a.instance, a.sm_round, a.slot, sm.pending_write().value);
            if (opts_.registers) trace_.registers.push_back({trace_.counters.events, true, c, p, a, sm.pending_write().value});
            if (std::holds_alternative<maa::SmmaaProcess>(actors_[p])) trace_.snapshots.at(round - 1)[p] = sm.pending_write().value;
            sm.on_write_done(log());
            if (round == sm.rounds() + 1) {
                b.done[topo_.slot(p)] = true;
                if (bank_released(c, b)) erase_bank(banks_.find(key));
            }
        } else {
            RegisterAddr a = addr;
            a.slot = static_cast<std::uint32_t>(sm.read_slot());
            const auto& cell = b.bank.read(round, sm.read_slot());
            ++trace_.counters.register_reads;
            if (opts_.events)
                trace_.events.push_back({trace_.counters.events, now_, EventKind::Read, p, p, a.instance, a.sm_round,
                                         a.slot, cell ? digest(cell->value) : 0});
            if (opts_.registers)
                trace_.registers.push_back({trace_.counters.events, false, c, p, a,
                                            cell ? std::optional<Vector>(cell->value) : std::nullopt});
            sm.on_read(cell, log());
        }
        if (auto* nc = std::get_if<sgd::NonConvexProcess>(&actors_[p])) nc->after_register_step(log());
    }

    // ---- steps

    void do_local(ProcessId p) {
        const Want w = want(p);
        switch (w) {
            case Want::Compute: {
                ++trace_.counters.computes;
                const auto t = iteration(p);
                log_event(EventKind::Compute, p, static_cast<std::uint32_t>(t));
                if (auto* sc = std::get_if<sgd::StronglyConvexProcess>(&actors_[p])) {
                    Vector y = sc->compute(noise_[p]);
                    broadcast(p, MsgKind::Param, t, 0, {std::move(y), maa::kNoNode});
                } else {
                    Vector g = std::get<sgd::NonConvexProcess>(actors_[p]).compute(noise_[p], log());
                    broadcast(p, MsgKind::Grad, t, 0, {std::move(g), maa::kNoNode});
                }
                break;
            }
            case Want::Write:
            case Want::Read: register_step(p); break;
            case Want::Send: {
                if (auto* nc = std::get_if<sgd::NonConvexProcess>(&actors_[p])) {
                    const auto t = nc->iteration();
                    auto msg = nc->take_send(log());
                    broadcast(p, MsgKind::Maa, t, msg.round, std::move(msg.value));
                } else {
                    auto msg = std::get<maa::ClusterMaaProcess>(actors_[p]).take_send(log());
                    broadcast(p, MsgKind::Maa, 0, msg.round, std::move(msg.value));
                }
                break;
            }
            case Want::Wait:
            case Want::Finished: break;
        }
    }

    void deliver(const Message& m) {
        ++trace_.counters.messages_delivered;
        const maa::Point& value = payloads_[m.payload].point;
        log_event(EventKind::Deliver, m.dest, m.sender, m.iteration, m.round, static_cast<std::uint32_t>(m.kind),
                  value.value);
        Actor& a = actors_[m.dest];
        if (auto* sc = std::get_if<sgd::StronglyConvexProcess>(&a); sc && m.kind == MsgKind::Param) {
            sc->on_message(m.iteration, m.sender, value.value);
        } else if (auto* nc = std::get_if<sgd::NonConvexProcess>(&a)) {
            if (m.kind == MsgKind::Grad)
                nc->on_gradient(m.iteration, m.sender, value.value, log());
            else if (m.kind == MsgKind::Maa)
                nc->on_maa_message(m.iteration, {m.round, m.sender, value}, log());
            else
                throw ModelViolation("simulator: parameter message sent to non-convex process");
        } else if (auto* cm = std::get_if<maa::ClusterMaaProcess>(&a); cm && m.kind == MsgKind::Maa) {
            cm->on_message({m.round, m.sender, value}, log());
        } else {
            throw ModelViolation("simulator: message kind does not match the receiving process");
        }
    }

    void drain_journal(ProcessId p, std::vector<sgd::JournalEntry> journal, bool strongly_convex) {
        using K = sgd::JournalEntry::Kind;
        for (auto& e : journal) {
            if (e.kind == K::IterationDone) {
                trace_.snapshots.at(e.iteration)[p] = e.value;
                if (sgd_cfg && sgd_cfg->variant == sgd::Variant::NonConvex)
                    maa_rounds_done_[p] += maa::cluster_params(sgd::contraction_target(*sgd_cfg, e.iteration),
                                                               sgd_cfg->rule, topo_.m())
                                               .rounds;
            }
            if (!opts_.journal) continue;
            AggregationRecord r;
            r.seq = trace_.counters.events;
            r.process = p;
            r.iteration = e.iteration;
            r.round = e.round;
            if (e.kind == K::IterationDone) {
                if (!strongly_convex) continue;
                r.kind = AggregationRecord::Kind::ParamAverage;
            } else if (e.kind == K::GradientAveraged) {
                r.kind = AggregationRecord::Kind::GradientAverage;
            } else {
                r.kind = AggregationRecord::Kind::MaaRound;
            }
            r.senders = std::move(e.senders);
            r.tags = std::move(e.tags);
            r.value = std::move(e.value);
            trace_.aggregations.push_back(std::move(r));
        }
    }

    void after_event(ProcessId p) {
        Actor& a = actors_[p];
        if (auto* sc = std::get_if<sgd::StronglyConvexProcess>(&a)) {
            if (sc->has_journal()) drain_journal(p, sc->take_journal(), true);
        } else if (auto* nc = std::get_if<sgd::NonConvexProcess>(&a)) {
            if (nc->has_journal()) drain_journal(p, nc->take_journal(), false);
        } else if (auto* cm = std::get_if<maa::ClusterMaaProcess>(&a)) {
            if (cm->round() > last_iter_[p]) {
                trace_.snapshots.at(cm->round() - 1)[p] = cm->value().value;
                maa_rounds_done_[p] = cm->round() - 1;
                if (opts_.journal) {
                    AggregationRecord r;
                    r.seq = trace_.counters.events;
                    r.kind = AggregationRecord::Kind::MaaRound;
                    r.process = p;
                    r.round = static_cast<std::uint32_t>(cm->round() - 1);
                    r.senders = cm->last_quorum();
                    r.tags.assign(r.senders.size(), r.round);
                    r.value = cm->value().value;
                    trace_.aggregations.push_back(std::move(r));
                }
            }
        }
        const Want w = want(p);
        if (!finished_[p] && w == Want::Finished) {
            finished_[p] = true;
            record_output(p);
        }
        const std::size_t it = iteration(p);
        if (it != last_iter_[p]) {
            last_iter_[p] = it;
            update_spread();
        }
        if (!maybe_crash(p)) schedule_local(p, w);
    }

    void record_output(ProcessId p) {
        std::visit(overloaded{[&](const sgd::StronglyConvexProcess& a) { trace_.outputs[p] = a.output(); },
                              [&](const sgd::NonConvexProcess& a) { trace_.outputs[p] = a.output(); },
                              [&](const maa::ClusterMaaProcess& a) {
                                  trace_.outputs[p] = a.output().value;
                                  trace_.output_nodes[p] = a.output().node;
                              },
                              [&](const maa::SmmaaProcess& a) {
                                  trace_.outputs[p] = a.output().value;
                                  trace_.output_nodes[p] = a.output().node;
                              }},
                   actors_[p]);
        log_event(EventKind::Output, p, p, static_cast<std::uint32_t>(iteration(p)), 0, 0, *trace_.outputs[p]);
    }

    void update_spread() {
        std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0;
        for (ProcessId q = 0; q < actors_.size(); ++q) {
            if (crashed_[q] || finished_[q]) continue;
            lo = std::min(lo, last_iter_[q]);
            hi = std::max(hi, last_iter_[q]);
        }
        if (hi >= lo)
            trace_.max_iteration_spread = std::max(trace_.max_iteration_spread, static_cast<std::uint32_t>(hi - lo));
    }

    const Topology& topo_;
    const Schedule& sched_;
    const TraceOptions& opts_;
    RunTrace& trace_;
    Rng rng_;
    std::uint64_t d_max_;
    std::uint64_t local_max_;
    std::vector<Rng> noise_;
    std::vector<Actor> actors_;
    CalendarQueue queue_;
    std::vector<Message> msgs_;
    std::vector<std::uint32_t> free_;
    std::vector<Payload> payloads_;
    std::vector<std::uint32_t> payload_free_;
    std::vector<std::uint32_t> deferred_;
    std::unordered_map<std::uint64_t, Bank> banks_;
    // Last bank each process touched; element addresses survive rehashing.
    std::vector<Bank*> bank_cache_;
    std::vector<std::uint64_t> bank_cache_key_;
    std::vector<std::vector<Crash>> triggers_;
    bool any_triggers_ = false;
    std::vector<std::uint8_t> side_;
    bool partition_active_ = false;
    std::vector<std::uint8_t> crashed_;
    std::vector<std::uint8_t> local_pending_;
    std::vector<std::uint8_t> finished_;
    std::vector<std::uint64_t> steps_;
    std::vector<std::size_t> last_iter_;
    std::vector<std::uint64_t> maa_rounds_done_;
    std::uint64_t now_ = 0;
};

void validate_schedule(const Schedule& s) {
    if (s.d_max == 0) throw ConfigError("schedule.d_max", "d_max must be >= 1");
    if (s.local_max == 0) throw ConfigError("schedule.local_max", "local_max must be >= 1");
    if (s.event_budget == 0) throw ConfigError("schedule.event_budget", "event budget must be positive");
}

RunTrace run_sgd(const Topology& topo, const FaultPlan& faults, const Schedule& schedule, const sgd::SgdConfig& cfg,
                 const oracle::Oracle& oracle, const TraceOptions& options) {
    const bool nonconvex = cfg.variant == sgd::Variant::NonConvex;
    validate(topo, faults, nonconvex && cfg.assume_cluster_majority);
    sgd::validate(cfg, oracle, topo.n(), faults.max_crashes());
    if (cfg.T >= (1ULL << 28)) throw ConfigError("algorithm.T", "T too large");

    RunTrace trace;
    trace.dim = oracle.dim();
    trace.iterations = cfg.T;
    trace.quorum_N = cfg.N;
    trace.exact_quorum = !nonconvex;
    trace.quorum_clusters = nonconvex ? cfg.cluster_quorum.value_or(topo.m() / 2 + 1) : 0;
    trace.snapshots.assign(cfg.T + 1, std::vector<std::optional<Vector>>(topo.n()));
    for (auto& s : trace.snapshots[0]) s = cfg.x1;

    Engine engine(topo, faults, schedule, options, trace);
    engine.sgd_cfg = &cfg;
    for (ProcessId p = 0; p < topo.n(); ++p) {
        if (nonconvex) {
            auto& proc = std::get<sgd::NonConvexProcess>(engine.actors().emplace_back(
                std::in_place_type<sgd::NonConvexProcess>, p, topo.slot(p), topo.members(topo.cluster(p)).size(),
                topo.cluster_map(), topo.m(), cfg, oracle));
            proc.set_journal_maa_rounds(options.maa_rounds && options.journal);
        } else {
            engine.actors().emplace_back(std::in_place_type<sgd::StronglyConvexProcess>, p, cfg, oracle);
        }
    }
    engine.execute();
    engine.finish();
    return trace;
}

}  // namespace

RunTrace run(const Topology& topo, const FaultPlan& faults, const Schedule& schedule, const StandaloneMaa& cfg,
             const TraceOptions& options) {
    validate_schedule(schedule);
    validate(topo, faults, false);
    if (cfg.inputs.size() != topo.n())
        throw ConfigError("algorithm.inputs", "expected " + std::to_string(topo.n()) + " inputs, got " +
                                                  std::to_string(cfg.inputs.size()));
    try {
        require_point_set(cfg.inputs, "MAA inputs");
    } catch (const UsageError& e) {
        throw ConfigError("algorithm.inputs", e.what());
    }
    if (!cfg.rounds && !(cfg.q > 0.0 && cfg.q < 1.0)) throw ConfigError("algorithm.q", "q must lie in (0,1)");
    if (cfg.rounds && *cfg.rounds == 0) throw ConfigError("algorithm.rounds", "rounds must be positive");
    if (cfg.quorum_clusters && (*cfg.quorum_clusters == 0 || *cfg.quorum_clusters > topo.m()))
        throw ConfigError("algorithm.quorum_clusters", "quorum must lie in [1, m]");

    RunTrace trace;
    trace.dim = cfg.inputs.front().dim();
    Engine engine(topo, faults, schedule, options, trace);
    maa::WitnessLog* log = engine.log();
    std::vector<maa::Point> points;
    for (ProcessId p = 0; p < topo.n(); ++p) {
        const maa::NodeId node = log ? log->add_input(p, cfg.inputs[p]) : maa::kNoNode;
        trace.input_nodes.push_back(node);
        points.push_back({cfg.inputs[p], node});
    }

    if (cfg.level == maa::Level::SharedMemory) {
        const std::size_t R = cfg.rounds.value_or(
            maa::required_rounds(cfg.q, maa::context_for(maa::Level::SharedMemory, cfg.rule)));
        trace.iterations = R;
        trace.snapshots.assign(R + 1, std::vector<std::optional<Vector>>(topo.n()));
        for (ProcessId p = 0; p < topo.n(); ++p)
            engine.actors().emplace_back(std::in_place_type<maa::SmmaaProcess>, topo.slot(p),
                                         topo.members(topo.cluster(p)).size(), R, cfg.rule, p, points[p]);
    } else {
        auto params = maa::cluster_params(cfg.rounds ? 0.5 : cfg.q, cfg.rule, topo.m());
        if (cfg.rounds) params.rounds = *cfg.rounds;
        if (cfg.quorum_clusters) params.quorum_clusters = *cfg.quorum_clusters;
        trace.iterations = params.rounds;
        trace.quorum_clusters = params.quorum_clusters;
        trace.snapshots.assign(params.rounds + 1, std::vector<std::optional<Vector>>(topo.n()));
        for (ProcessId p = 0; p < topo.n(); ++p) {
            trace.snapshots[0][p] = cfg.inputs[p];
            engine.actors().emplace_back(std::in_place_type<maa::ClusterMaaProcess>, p, topo.slot(p),
                                         topo.members(topo.cluster(p)).size(), topo.cluster_map(), params, points[p]);
        }
    }
    engine.execute();
    engine.finish();
    return trace;
}

RunTrace run(const Topology& topo, const FaultPlan& faults, const Schedule& schedule, const Algorithm& algorithm,
             const oracle::Oracle& oracle, const TraceOptions& options) {
    validate_schedule(schedule);
    if (const auto* maa_cfg = std::get_if<StandaloneMaa>(&algorithm)) return run(topo, faults, schedule, *maa_cfg, options);
    return run_sgd(topo, faults, schedule, std::get<sgd::SgdConfig>(algorithm), oracle, options);
}

// --------------------------------------------------------------------------
// Export

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

nlohmann::json vec_json(const std::optional<Vector>& v) {
    if (!v) return nullptr;
    return nlohmann::json(v->to_std());
}

}  // namespace

void export_trace(const RunTrace& trace, std::ostream& out) {
    using nlohmann::json;
    json header = {{"format", "asgd-trace"},
                   {"version", 1},
                   {"n", trace.n},
                   {"dim", trace.dim},
                   {"iterations", trace.iterations},
                   {"status", trace.ok() ? "completed" : "liveness_violation"},
                   {"diagnosis", trace.diagnosis},
                   {"events", trace.events.size()}};
    out << header.dump() << '\n';
    for (const auto& e : trace.events) {
        json j = {{"seq", e.seq},       {"tick", e.tick},   {"kind", to_string(e.kind)},
                  {"proc", e.process},  {"peer", e.peer},   {"it", e.iteration},
                  {"round", e.round},   {"aux", e.aux},     {"digest", hex64(e.digest)}};
        out << j.dump() << '\n';
    }
    for (std::size_t i = 0; i < trace.outputs.size(); ++i) {
        json j = {{"output", i},
                  {"crashed", i < trace.crashed.size() && trace.crashed[i]},
                  {"value", vec_json(trace.outputs[i])}};
        out << j.dump() << '\n';
    }
    const auto& c = trace.counters;
    json counters = {{"counters",
                      {{"events", c.events},
                       {"computes", c.computes},
                       {"messages_sent", c.messages_sent},
                       {"messages_delivered", c.messages_delivered},
                       {"messages_dropped", c.messages_dropped},
                       {"messages_deferred", c.messages_deferred},
                       {"register_writes", c.register_writes},
                       {"register_reads", c.register_reads},
                       {"maa_rounds", c.maa_rounds}}}};
    out << counters.dump() << '\n';
}

std::string export_trace(const RunTrace& trace) {
    std::ostringstream os;
    export_trace(trace, os);
    return os.str();
}

// --------------------------------------------------------------------------
// Witnesses

std::vector<ConvexityWitness> extract_convexity_witness(const RunTrace& trace) {
    std::vector<ConvexityWitness> out;
    const auto& log = trace.witness;
    for (std::size_t i = 0; i < trace.outputs.size(); ++i) {
        if (!trace.outputs[i]) continue;
        const maa::NodeId root = i < trace.output_nodes.size() ? trace.output_nodes[i] : maa::kNoNode;
        if (!log.contains(root))
            throw UsageError("extract_convexity_witness: output of process " + std::to_string(i) +
                             " has no recorded witness node");
        ConvexityWitness w;
        w.process = static_cast<ProcessId>(i);
        w.output = root;
        // Iterative post-order over the midpoint DAG.
        std::set<maa::NodeId> visited;
        std::vector<std::pair<maa::NodeId, bool>> stack{{root, false}};
        while (!stack.empty()) {
            auto [id, expanded] = stack.back();
            stack.pop_back();
            const auto& node = log.node(id);
            if (node.left == maa::kNoNode) continue;
            if (expanded) {
                w.chain.push_back({id, node.left, node.right, node.value});
                continue;
            }
            if (!visited.insert(id).second) continue;
            if (!log.contains(node.left) || !log.contains(node.right) || node.left >= id || node.right >= id)
                throw UsageError("extract_convexity_witness: dangling parent of node " + std::to_string(id));
            stack.push_back({id, true});
            stack.push_back({node.right, false});
            stack.push_back({node.left, false});
        }
        out.push_back(std::move(w));
    }
    return out;
}

bool replay_witness(const RunTrace& trace, const ConvexityWitness& w, const Vector& expected) {
    const auto& log = trace.witness;
    if (!log.contains(w.output)) return false;
    std::unordered_map<maa::NodeId, Vector> value;
    auto get = [&](maa::NodeId id) -> const Vector* {
        if (auto it = value.find(id); it != value.end()) return &it->second;
        if (!log.contains(id)) return nullptr;
        const auto& node = log.node(id);
        if (node.left != maa::kNoNode) return nullptr;  // midpoint not yet replayed
        return &value.emplace(id, node.value).first->second;
    };
    for (const auto& step : w.chain) {
        const Vector* l = get(step.left);
        const Vector* r = get(step.right);
        if (!l || !r || l->dim() != r->dim()) return false;
        Vector m = midpoint(*l, *r);
        if (!same_bits(m, step.value)) return false;
        value.insert_or_assign(step.node, std::move(m));
    }
    const Vector* out = get(w.output);
    return out && same_bits(*out, expected);
}

// --------------------------------------------------------------------------
// Audits

const std::vector<std::string>& audit_properties() {
    static const std::vector<std::string> names{"stale_filtering",   "vt_monotone",        "quorum_composition",
                                                "convexity_witness", "equal_parameters",   "register_consistency",
                                                "outputs_present"};
    return names;
}

bool AuditReport::passed() const noexcept {
    return std::all_of(findings.begin(), findings.end(), [](const auto& f) { return f.passed; });
}

namespace {

void fail_with(AuditFinding& f, std::uint64_t seq, const std::string& detail) {
    if (f.passed) f.detail = detail;
    f.passed = false;
    if (f.events.size() < 16) f.events.push_back(seq);
}

AuditFinding audit_stale(const RunTrace& t) {
    AuditFinding f{"stale_filtering", true, {}, {}};
    for (const auto& r : t.aggregations) {
        const std::uint32_t want = r.kind == AggregationRecord::Kind::MaaRound ? r.round : r.iteration;
        for (auto tag : r.tags)
            if (tag != want)
                fail_with(f, r.seq, "process " + std::to_string(r.process) + " used a message tagged " +
                                        std::to_string(tag) + " in step " + std::to_string(want));
    }
    return f;
}

AuditFinding audit_vt(const RunTrace& t) {
    AuditFinding f{"vt_monotone", true, {}, {}};
    for (std::size_t k = 2; k < t.snapshots.size(); ++k)
        for (std::size_t i = 0; i < t.snapshots[k].size(); ++i)
            if (t.snapshots[k][i] && !t.snapshots[k - 1][i])
                fail_with(f, k, "process " + std::to_string(i) + " completed iteration " + std::to_string(k) +
                                    " without iteration " + std::to_string(k - 1));
    return f;
}

AuditFinding audit_quorum(const RunTrace& t) {
    AuditFinding f{"quorum_composition", true, {}, {}};
    for (const auto& r : t.aggregations) {
        std::set<ProcessId> distinct(r.senders.begin(), r.senders.end());
        if (distinct.size() != r.senders.size()) {
            fail_with(f, r.seq, "duplicate sender in aggregation of process " + std::to_string(r.process));
            continue;
        }
        if (r.kind == AggregationRecord::Kind::MaaRound) {
            std::set<ClusterId> clusters;
            for (ProcessId s : r.senders) clusters.insert(s < t.cluster_of.size() ? t.cluster_of[s] : 0);
            if (clusters.size() < t.quorum_clusters)
                fail_with(f, r.seq, "MAA round " + std::to_string(r.round) + " of process " +
                                        std::to_string(r.process) + " used " + std::to_string(clusters.size()) +
                                        " clusters, quorum " + std::to_string(t.quorum_clusters));
        } else if (r.kind != AggregationRecord::Kind::SmmaaRound) {
            const bool bad = t.exact_quorum ? r.senders.size() != t.quorum_N : r.senders.size() < t.quorum_N;
            if (bad)
                fail_with(f, r.seq, "iteration " + std::to_string(r.iteration) + " of process " +
                                        std::to_string(r.process) + " averaged " + std::to_string(r.senders.size()) +
                                        " values, N = " + std::to_string(t.quorum_N));
        }
    }
    return f;
}

AuditFinding audit_witness(const RunTrace& t) {
    AuditFinding f{"convexity_witness", true, {}, {}};
    try {
        for (const auto& w : extract_convexity_witness(t))
            if (!replay_witness(t, w, *t.outputs[w.process]))
                fail_with(f, w.output, "witness of process " + std::to_string(w.process) + " does not replay");
    } catch (const UsageError& e) {
        fail_with(f, 0, e.what());
    }
    return f;
}

AuditFinding audit_equal(const RunTrace& t) {
    AuditFinding f{"equal_parameters", true, {}, {}};
    for (std::size_t k = 0; k < t.snapshots.size(); ++k) {
        const Vector* ref = nullptr;
        for (const auto& v : t.snapshots[k]) {
            if (!v) continue;
            if (!ref)
                ref = &*v;
            else if (!same_bits(*ref, *v))
                fail_with(f, k, "parameters differ at iteration " + std::to_string(k + 1));
        }
    }
    return f;
}

AuditFinding audit_registers(const RunTrace& t) {
    AuditFinding f{"register_consistency", true, {}, {}};
    std::map<std::tuple<ClusterId, std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t>, Vector> cells;
    for (const auto& r : t.registers) {
        const auto key = std::make_tuple(r.cluster, r.addr.instance, r.addr.maa_round, r.addr.sm_round, r.addr.slot);
        auto it = cells.find(key);
        if (r.is_write) {
            if (it != cells.end())
                fail_with(f, r.seq, "cell written twice");
            else if (r.value)
                cells.emplace(key, *r.value);
            continue;
        }
        const bool present = it != cells.end();
        if (present != r.value.has_value() || (present && !same_bits(it->second, *r.value)))
            fail_with(f, r.seq, "read by process " + std::to_string(r.process) +
                                    " does not match the preceding writes");
    }
    return f;
}

AuditFinding audit_outputs(const RunTrace& t) {
    AuditFinding f{"outputs_present", true, {}, {}};
    for (std::size_t i = 0; i < t.outputs.size(); ++i)
        if (!(i < t.crashed.size() && t.crashed[i]) && !t.outputs[i])
            fail_with(f, i, "nonfaulty process " + std::to_string(i) + " has no output");
    return f;
}

}  // namespace

AuditReport audit(const RunTrace& trace, std::span<const std::string> properties) {
    const auto& known = audit_properties();
    for (const auto& p : properties)
        if (std::find(known.begin(), known.end(), p) == known.end())
            throw UsageError("audit: unknown property '" + p + "'");
    AuditReport report;
    for (const auto& p : properties) {
        if (p == "stale_filtering") report.findings.push_back(audit_stale(trace));
        else if (p == "vt_monotone") report.findings.push_back(audit_vt(trace));
        else if (p == "quorum_composition") report.findings.push_back(audit_quorum(trace));
        else if (p == "convexity_witness") report.findings.push_back(audit_witness(trace));
        else if (p == "equal_parameters") report.findings.push_back(audit_equal(trace));
        else if (p == "register_consistency") report.findings.push_back(audit_registers(trace));
        else report.findings.push_back(audit_outputs(trace));
    }
    return report;
}

}  // namespace asgd::sim
