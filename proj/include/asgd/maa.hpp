#pragma once

// Multidimensional approximate agreement.
//
// SmmaaProcess runs the wait-free shared-memory protocol inside one cluster:
// per round, write the own cell of A_r, collect A_r in ascending slot order,
// aggregate the non-empty cells. ClusterMaaProcess wraps it: each round runs
// an SMMAA instance, broadcasts the result and aggregates the round values
// received from a majority of clusters.
//
// Both are single-owner state machines. They never touch shared memory or the
// network themselves; the caller executes the request reported by want().

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "asgd/process.hpp"
#include "asgd/vecmath.hpp"

namespace asgd::maa {

enum class Rule : std::uint8_t { MidExtremes, ApproachExtreme };
enum class Level : std::uint8_t { SharedMemory, Cluster };

enum class RoundContext : std::uint8_t { SMMidExt, SMApproachExt, ClusterMidExt, ClusterApproachExt };

RoundContext context_for(Level level, Rule rule) noexcept;

/// Worst-case per-round squared-diameter factor: 7/8, 31/32, 23/24, 79/80.
double round_factor(RoundContext ctx) noexcept;

/// Rounds needed for q-contraction: ceil(log_{factor} q). Throws UsageError unless 0 < q < 1.
std::size_t required_rounds(double q, RoundContext ctx);

/// SMMAA contraction target used inside cluster MAA: 1/6 for MidExtremes, 1/10 for ApproachExtreme.
double inner_smmaa_target(Rule rule) noexcept;

const char* to_string(Rule r) noexcept;

// --------------------------------------------------------------------------
// Convexity witnesses

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0;

/// A value together with the witness node that produced it (kNoNode when
/// witness recording is off).
struct Point {
    Vector value;
    NodeId node = kNoNode;
};

/// Midpoint DAG over MAA values. Leaves are protocol inputs; every other node
/// is the midpoint of two earlier nodes.
class WitnessLog {
public:
    struct Node {
        NodeId left = kNoNode;   // kNoNode for inputs
        NodeId right = kNoNode;
        ProcessId origin = 0;    // process that fed the input / computed the midpoint
        Vector value;
    };

    NodeId add_input(ProcessId origin, const Vector& value);
    NodeId add_midpoint(ProcessId origin, NodeId left, NodeId right, const Vector& value);

    bool contains(NodeId id) const noexcept { return id != kNoNode && id <= nodes_.size(); }
    const Node& node(NodeId id) const;
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    std::vector<Node> nodes_;
};

/// Aggregates `set` with the configured rule. `own` is the process's current
/// value (used by ApproachExtreme; ignored by MidExtremes). Records the
/// produced midpoint in `log` when it is non-null.
Point aggregate(Rule rule, std::span<const Point> set, const Point& own, ProcessId self, WitnessLog* log);
Point aggregate(Rule rule, std::span<const Point* const> set, const Point& own, ProcessId self, WitnessLog* log);

// --------------------------------------------------------------------------
// Shared memory

/// Arrays A_1 .. A_{rounds+1} of single-writer cells for one SMMAA instance.
class RoundRegisterBank {
public:
    RoundRegisterBank(std::size_t cluster_size, std::size_t rounds);

    /// Cell A_round[cell] <- value. Only the owner may write, and only once.
    /// Anything else is a ModelViolation.
    void write(std::size_t round, std::size_t cell, std::size_t writer, Point value);

    const std::optional<Point>& read(std::size_t round, std::size_t cell) const;

    std::size_t cluster_size() const noexcept { return cluster_size_; }
    std::size_t rounds() const noexcept { return rounds_; }

private:
    std::size_t index(std::size_t round, std::size_t cell) const;

    std::size_t cluster_size_;
    std::size_t rounds_;
    std::vector<std::optional<Point>> cells_;
};

class SmmaaProcess {
public:
    SmmaaProcess(std::size_t slot, std::size_t cluster_size, std::size_t rounds, Rule rule, ProcessId self,
                 Point input);

    /// Write, Read or Finished.
    Want want() const noexcept;

    /// Round r of the array targeted by the pending Write/Read.
    std::size_t round() const noexcept { return round_; }
    /// Cell targeted by the pending Read.
    std::size_t read_slot() const noexcept { return next_slot_; }
    /// Value for the pending Write (goes to the own cell).
    const Point& pending_write() const noexcept { return current_; }

    void on_write_done(WitnessLog* log);
    /// `cell` is kept by reference until the round's collect completes; register
    /// cells are never overwritten, so a bank reference stays valid.
    void on_read(const std::optional<Point>& cell, WitnessLog* log);

    std::size_t slot() const noexcept { return slot_; }
    std::size_t rounds() const noexcept { return rounds_; }
    bool finished() const noexcept { return phase_ == Phase::Done; }
    /// A_{R+1}[i]; valid once finished.
    const Point& output() const noexcept { return current_; }

private:
    enum class Phase : std::uint8_t { Write, Read, Done };

    void advance_slot() noexcept;
    void finish_collect(WitnessLog* log);

    std::size_t slot_;
    std::size_t cluster_size_;
    std::size_t rounds_;
    Rule rule_;
    ProcessId self_;
    Phase phase_ = Phase::Write;
    std::size_t round_ = 1;
    std::size_t next_slot_ = 0;
    Point current_;
    std::vector<const Point*> collected_;  // nullptr for empty cells
    std::vector<const Point*> scratch_;
};

/// Executes the pending request of `proc` against `bank`. No-op when finished.
void smmaa_step(SmmaaProcess& proc, RoundRegisterBank& bank, WitnessLog* log);

// --------------------------------------------------------------------------
// Cluster level

struct MaaMessage {
    std::size_t round = 0;
    ProcessId sender = 0;
    Point value;
};

struct ClusterMaaParams {
    Rule rule = Rule::MidExtremes;
    std::size_t rounds = 1;          // R
    std::size_t smmaa_rounds = 14;   // rounds of each inner SMMAA instance
    std::size_t quorum_clusters = 1; // floor(m/2)+1 unless overridden
};

/// Builds the standard parameters for target q: R from the cluster factor,
/// inner SMMAA at 1/6 (MidExtremes) or 1/10 (ApproachExtreme), majority quorum.
ClusterMaaParams cluster_params(double q, Rule rule, std::size_t clusters);

class ClusterMaaProcess {
public:
    /// `cluster_of` maps every process id to its cluster; it must outlive this object.
    ClusterMaaProcess(ProcessId self, std::size_t slot, std::size_t cluster_size,
                      std::span<const ClusterId> cluster_of, ClusterMaaParams params, Point input);

    /// Write/Read while the inner SMMAA runs, Send once it finished, Wait for
    /// the cluster quorum, Finished after R rounds.
    Want want() const noexcept;

    SmmaaProcess& smmaa() noexcept { return *smmaa_; }
    const SmmaaProcess& smmaa() const noexcept { return *smmaa_; }

    /// Performs the pending Send: returns the round message to broadcast to
    /// every other process. The own copy is delivered immediately.
    MaaMessage take_send(WitnessLog* log);

    void on_message(const MaaMessage& msg, WitnessLog* log);

    /// Current round r (1-based); R+1 once finished.
    std::size_t round() const noexcept { return round_; }
    /// x_r^i for the current round, or the output once finished.
    const Point& value() const noexcept { return current_; }
    const Point& output() const noexcept { return current_; }
    bool finished() const noexcept { return finished_; }
    const ClusterMaaParams& params() const noexcept { return params_; }

    /// Senders whose round-r values entered the last aggregation.
    const std::vector<ProcessId>& last_quorum() const noexcept { return last_quorum_; }

    /// Human-readable blocking reason for liveness diagnostics.
    std::string waiting_for() const;

private:
    void start_round();
    void try_complete_round(WitnessLog* log);
    std::size_t clusters_heard() const;

    ProcessId self_;
    std::size_t slot_;
    std::size_t cluster_size_;
    std::span<const ClusterId> cluster_of_;
    ClusterMaaParams params_;
    std::size_t round_ = 1;
    bool sent_ = false;
    bool finished_ = false;
    Point current_;
    Point smmaa_out_;
    std::optional<SmmaaProcess> smmaa_;
    std::size_t clusters_ = 0;
    // Current-round values indexed by sender; later rounds wait in future_.
    std::vector<std::optional<Point>> received_;
    std::vector<MaaMessage> future_;
    std::vector<ProcessId> last_quorum_;
};

}  // namespace asgd::maa
