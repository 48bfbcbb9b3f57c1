#pragma once

// Per-process state machines of the two distributed SGD algorithms.
//
// StronglyConvexProcess: compute y = x - eta g, broadcast <t, y>, average the
// first N round-t parameters received (own included once it arrives).
//
// NonConvexProcess: broadcast <t, g>, average every round-t gradient held
// once at least N are present, step, then run cluster MAA on the result.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asgd/maa.hpp"
#include "asgd/oracle.hpp"
#include "asgd/process.hpp"
#include "asgd/rng.hpp"
#include "asgd/schedule.hpp"
#include "asgd/vecmath.hpp"

namespace asgd::sgd {

enum class Variant : std::uint8_t { StronglyConvex, NonConvex };

const char* to_string(Variant v) noexcept;

struct SgdConfig {
    Variant variant = Variant::StronglyConvex;
    std::size_t T = 1;
    std::size_t N = 1;
    Vector x1;
    LrSchedule schedule = Constant{0.1};
    /// q_t per iteration (index t-1). Empty means q_t = eta_t / 4.
    std::vector<double> q_schedule;
    /// Output iteration for the non-convex variant, in [1, T].
    std::size_t tau = 1;
    maa::Rule rule = maa::Rule::MidExtremes;
    /// The scenario promises f_c <= floor((m-1)/2); checked against the fault plan.
    bool assume_cluster_majority = true;
    /// Clusters an MAA round waits for; floor(m/2)+1 when unset.
    std::optional<std::size_t> cluster_quorum;
    /// Reject learning rates outside the ranges the convergence analysis assumes.
    bool enforce_step_bounds = true;
};

/// q_t for iteration t (1-based).
double contraction_target(const SgdConfig& cfg, std::size_t t);

/// Field-level validation against the oracle and the progress condition
/// N <= n - f. Throws ConfigError naming the field ("algorithm.N", ...).
void validate(const SgdConfig& cfg, const oracle::Oracle& oracle, std::size_t n, std::size_t f);

/// (x_t - x_next) / eta. Throws UsageError when eta <= 0.
Vector effective_gradient(const Vector& x_t, const Vector& x_next, double eta);

/// Notable transitions, drained by the driver for tracing.
struct JournalEntry {
    enum class Kind : std::uint8_t { IterationDone, GradientAveraged, MaaRoundDone };
    Kind kind = Kind::IterationDone;
    std::uint32_t iteration = 0;   // t
    std::uint32_t round = 0;       // MAA round for MaaRoundDone
    Vector value;                  // x_{t+1}, g_t or x_{r+1}
    std::vector<ProcessId> senders;
    std::vector<std::uint32_t> tags;  // iteration/round tag of each message used
};

class StronglyConvexProcess {
public:
    StronglyConvexProcess(ProcessId self, const SgdConfig& cfg, const oracle::Oracle& oracle);

    Want want() const noexcept;
    std::size_t iteration() const noexcept { return t_; }
    const Vector& x() const noexcept { return x_; }
    bool finished() const noexcept { return t_ > cfg_->T; }
    const Vector& output() const noexcept { return x_; }

    /// LocalCompute: draws a gradient, steps, returns the value to broadcast
    /// as <t, y>. The own copy is delivered before returning.
    Vector compute(Rng& rng);

    void on_message(std::size_t iteration, ProcessId sender, const Vector& y);

    bool has_journal() const noexcept { return !journal_.empty(); }
    std::vector<JournalEntry> take_journal() { return std::exchange(journal_, {}); }
    std::string waiting_for() const;

private:
    void try_complete();

    ProcessId self_;
    const SgdConfig* cfg_;
    const oracle::Oracle* oracle_;
    std::size_t t_ = 1;
    bool computed_ = false;
    Vector x_;
    // iteration -> first N messages in arrival order
    std::map<std::size_t, std::vector<std::pair<ProcessId, Vector>>> inbox_;
    std::vector<JournalEntry> journal_;
};

class NonConvexProcess {
public:
    /// `cluster_of` maps process ids to clusters and must outlive the process.
    NonConvexProcess(ProcessId self, std::size_t slot, std::size_t cluster_size,
                     std::span<const ClusterId> cluster_of, std::size_t clusters, const SgdConfig& cfg,
                     const oracle::Oracle& oracle);

    /// Compute, Wait, Finished, or the embedded MAA's Write/Read/Send.
    Want want() const noexcept;
    std::size_t iteration() const noexcept { return t_; }
    const Vector& x() const noexcept { return x_; }
    bool finished() const noexcept { return t_ > cfg_->T; }
    /// x_tau once finished.
    const Vector& output() const noexcept { return x_tau_; }

    /// LocalCompute: draws a gradient and returns it for broadcast as <t, g>.
    /// The own copy is delivered before returning.
    Vector compute(Rng& rng, maa::WitnessLog* log = nullptr);
    void on_gradient(std::size_t iteration, ProcessId sender, const Vector& g, maa::WitnessLog* log);
    void on_maa_message(std::size_t instance, const maa::MaaMessage& msg, maa::WitnessLog* log);

    /// Embedded MAA for the current iteration; valid while want() is Write/Read/Send.
    maa::ClusterMaaProcess& maa() { return *maa_; }
    /// Performs the MAA Send step; returns the round message for the current instance.
    maa::MaaMessage take_send(maa::WitnessLog* log);
    /// Register access completed (callers drive maa().smmaa() directly, then call this).
    void after_register_step(maa::WitnessLog* log);

    void set_journal_maa_rounds(bool on) noexcept { journal_rounds_ = on; }
    bool has_journal() const noexcept { return !journal_.empty(); }
    std::vector<JournalEntry> take_journal() { return std::exchange(journal_, {}); }
    std::string waiting_for() const;

private:
    enum class Phase : std::uint8_t { Compute, WaitGrads, Maa, Done };

    void try_average(maa::WitnessLog* log);
    void after_maa_progress(maa::WitnessLog* log);

    ProcessId self_;
    std::size_t slot_;
    std::size_t cluster_size_;
    std::span<const ClusterId> cluster_of_;
    std::size_t clusters_;
    const SgdConfig* cfg_;
    const oracle::Oracle* oracle_;
    std::size_t t_ = 1;
    Phase phase_ = Phase::Compute;
    Vector x_;
    Vector x_tau_;
    std::map<std::size_t, std::map<ProcessId, Vector>> gradients_;
    std::map<std::size_t, std::vector<maa::MaaMessage>> maa_buffer_;
    std::optional<maa::ClusterMaaProcess> maa_;
    std::size_t maa_round_seen_ = 1;
    bool journal_rounds_ = false;
    std::vector<JournalEntry> journal_;
};

}  // namespace asgd::sgd
