#pragma once

// Deterministic discrete-event simulator of the cluster-based model.
//
// n processes in m disjoint clusters. Each cluster owns single-writer
// register banks; any two processes exchange messages over reliable
// asynchronous links. Every register access, local computation and message
// delivery is one scheduler event. Events carry an integer tick (messages
// take U[1, d_max] ticks, local steps U[1, local_max]) and a random tie-break
// key; the queue always runs the smallest (tick, key). Given the seed the
// whole run is reproducible.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "asgd/maa.hpp"
#include "asgd/oracle.hpp"
#include "asgd/process.hpp"
#include "asgd/sgd.hpp"
#include "asgd/vecmath.hpp"

namespace asgd::sim {

class Topology {
public:
    /// Clusters listed explicitly; must partition [0, n).
    static Topology from_clusters(std::vector<std::vector<ProcessId>> clusters);
    /// n processes split into m contiguous clusters whose sizes differ by at most one.
    static Topology even(std::size_t n, std::size_t m);

    std::size_t n() const noexcept { return cluster_of_.size(); }
    std::size_t m() const noexcept { return clusters_.size(); }
    ClusterId cluster(ProcessId p) const { return cluster_of_.at(p); }
    std::size_t slot(ProcessId p) const { return slot_of_.at(p); }
    const std::vector<ProcessId>& members(ClusterId c) const { return clusters_.at(c); }
    const std::vector<std::vector<ProcessId>>& clusters() const noexcept { return clusters_; }
    std::span<const ClusterId> cluster_map() const noexcept { return cluster_of_; }

    /// cluster(V) for a set of processes.
    std::vector<ClusterId> clusters_of(std::span<const ProcessId> procs) const;

private:
    std::vector<std::vector<ProcessId>> clusters_;
    std::vector<ClusterId> cluster_of_;
    std::vector<std::size_t> slot_of_;
};

struct Crash {
    enum class Trigger : std::uint8_t { AtEvent, AtIteration };
    ProcessId process = 0;
    Trigger trigger = Trigger::AtEvent;
    /// AtEvent: crash before the process's k-th event (0 = never starts).
    /// AtIteration: crash upon reaching iteration t.
    std::uint64_t value = 0;
};

/// Messages between `a` and `b` are held back until nothing else can happen.
struct Partition {
    std::vector<ProcessId> a;
    std::vector<ProcessId> b;
};

struct FaultPlan {
    std::vector<Crash> crashes;
    std::optional<Partition> partition;
    /// Declared crash budgets f and f_c; default to what the crash list induces.
    std::optional<std::size_t> f;
    std::optional<std::size_t> f_c;

    std::size_t max_crashes() const noexcept;
};

/// Clusters all of whose members appear in the crash list.
std::size_t crashed_cluster_count(const Topology& topo, const FaultPlan& plan);

/// Checks ids, |crashes| <= f, and (when asked) f_c <= floor((m-1)/2).
/// Throws ConfigError with a "faults.*" path.
void validate(const Topology& topo, const FaultPlan& plan, bool assert_cluster_majority);

/// Adds a partition after checking cluster(A) and cluster(B) are disjoint.
/// Throws UsageError on overlap.
FaultPlan inject_partition(const Topology& topo, FaultPlan plan, Partition partition);

struct Schedule {
    std::uint64_t seed = 1;
    std::uint32_t d_max = 4;
    std::uint32_t local_max = 2;
    std::uint64_t event_budget = 10'000'000;
};

/// One stand-alone MAA instance (no SGD around it).
struct StandaloneMaa {
    maa::Level level = maa::Level::Cluster;
    maa::Rule rule = maa::Rule::MidExtremes;
    double q = 0.5;
    std::vector<Vector> inputs;  // one per process
    std::optional<std::size_t> quorum_clusters;
    /// Overrides R computed from q (used to run a fixed number of rounds).
    std::optional<std::size_t> rounds;
};

using Algorithm = std::variant<sgd::SgdConfig, StandaloneMaa>;

struct TraceOptions {
    bool events = false;        // full event log
    bool journal = true;        // aggregation records
    bool maa_rounds = false;    // per-round MAA values inside SGD runs
    bool witness = false;       // midpoint DAG for convexity witnesses
    bool registers = false;     // register write/read log
};

enum class EventKind : std::uint8_t { Crash, Compute, Send, Deliver, Drop, Defer, Release, Write, Read, Output };
const char* to_string(EventKind k) noexcept;

enum class MsgKind : std::uint8_t { Param, Grad, Maa };

struct TraceEvent {
    std::uint64_t seq = 0;
    std::uint64_t tick = 0;
    EventKind kind = EventKind::Compute;
    ProcessId process = 0;
    ProcessId peer = 0;
    std::uint32_t iteration = 0;
    std::uint32_t round = 0;
    std::uint32_t aux = 0;  // message kind, register slot, ...
    std::uint64_t digest = 0;
};

struct AggregationRecord {
    enum class Kind : std::uint8_t { ParamAverage, GradientAverage, MaaRound, SmmaaRound };
    std::uint64_t seq = 0;
    Kind kind = Kind::ParamAverage;
    ProcessId process = 0;
    std::uint32_t iteration = 0;
    std::uint32_t round = 0;
    std::vector<ProcessId> senders;
    std::vector<std::uint32_t> tags;
    Vector value;
};

struct RegisterRecord {
    std::uint64_t seq = 0;
    bool is_write = false;
    ClusterId cluster = 0;
    ProcessId process = 0;
    RegisterAddr addr;
    std::optional<Vector> value;  // written value, or what the read returned
};

struct Counters {
    std::uint64_t events = 0;
    std::uint64_t computes = 0;
    std::uint64_t messages_sent = 0;
    std::uint64_t messages_delivered = 0;
    std::uint64_t messages_dropped = 0;
    std::uint64_t messages_deferred = 0;
    std::uint64_t register_writes = 0;
    std::uint64_t register_reads = 0;
    std::uint64_t maa_rounds = 0;  // max MAA rounds completed by a process
};

enum class Status : std::uint8_t { Completed, LivenessViolation };

struct RunTrace {
    Status status = Status::Completed;
    std::string diagnosis;
    std::size_t n = 0;
    std::size_t dim = 0;
    std::size_t iterations = 0;  // T for SGD, R for stand-alone MAA
    std::vector<TraceEvent> events;
    std::vector<std::optional<Vector>> outputs;
    std::vector<maa::NodeId> output_nodes;
    std::vector<maa::NodeId> input_nodes;
    /// snapshots[k][i]: SGD x_{k+1}^i (k = 0..T), stand-alone MAA x_{k+1}^i (k = 0..R).
    std::vector<std::vector<std::optional<Vector>>> snapshots;
    std::vector<AggregationRecord> aggregations;
    std::vector<RegisterRecord> registers;
    maa::WitnessLog witness;
    std::vector<bool> crashed;
    std::vector<ClusterId> cluster_of;
    /// Quorum rules the run used, for audits: N for SGD averaging (exact for
    /// the strongly convex variant), clusters per MAA round.
    std::size_t quorum_N = 0;
    bool exact_quorum = false;
    std::size_t quorum_clusters = 0;
    Counters counters;
    /// Largest gap between iterations of two live, unfinished processes.
    std::uint32_t max_iteration_spread = 0;

    bool ok() const noexcept { return status == Status::Completed; }
    std::vector<ProcessId> survivors() const;
};

RunTrace run(const Topology& topo, const FaultPlan& faults, const Schedule& schedule, const Algorithm& algorithm,
             const oracle::Oracle& oracle, const TraceOptions& options = {});

/// Stand-alone MAA runs need no oracle.
RunTrace run(const Topology& topo, const FaultPlan& faults, const Schedule& schedule, const StandaloneMaa& maa,
             const TraceOptions& options = {});

/// Line-delimited export: a header record, one record per event, then the
/// outputs. Format "asgd-trace", version 1.
void export_trace(const RunTrace& trace, std::ostream& out);
std::string export_trace(const RunTrace& trace);

/// FNV-1a over the coordinates' bit patterns.
std::uint64_t digest(const Vector& v) noexcept;

// --------------------------------------------------------------------------
// Trace audits

struct AuditFinding {
    std::string property;
    bool passed = true;
    std::string detail;
    std::vector<std::uint64_t> events;  // offending event sequence numbers
};

struct AuditReport {
    std::vector<AuditFinding> findings;
    bool passed() const noexcept;
};

/// Known properties: "stale_filtering", "vt_monotone", "quorum_composition",
/// "convexity_witness", "equal_parameters", "register_consistency",
/// "outputs_present". Throws UsageError for anything else.
AuditReport audit(const RunTrace& trace, std::span<const std::string> properties);

const std::vector<std::string>& audit_properties();

// --------------------------------------------------------------------------
// Convexity witnesses

struct WitnessStep {
    maa::NodeId node = maa::kNoNode;
    maa::NodeId left = maa::kNoNode;
    maa::NodeId right = maa::kNoNode;
    Vector value;
};

struct ConvexityWitness {
    ProcessId process = 0;
    maa::NodeId output = maa::kNoNode;
    /// Midpoint steps in dependency order; the last one produces the output.
    std::vector<WitnessStep> chain;
};

/// One witness per produced output. Throws UsageError for traces recorded
/// without witnesses or with dangling node references.
std::vector<ConvexityWitness> extract_convexity_witness(const RunTrace& trace);

/// Recomputes every step from the input leaves; true iff each recomputed
/// midpoint equals the recorded value bit for bit and the chain ends at `expected`.
bool replay_witness(const RunTrace& trace, const ConvexityWitness& w, const Vector& expected);

}  // namespace asgd::sim
