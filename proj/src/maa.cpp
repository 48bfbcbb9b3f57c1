#include "asgd/maa.hpp"

#include <cmath>
#include <algorithm>
#include <string>

#include "asgd/error.hpp"

namespace asgd {

const char* to_string(Want w) noexcept {
    switch (w) {
        case Want::Wait: return "wait";
        case Want::Compute: return "compute";
        case Want::Write: return "write";
        case Want::Read: return "read";
        case Want::Send: return "send";
        case Want::Finished: return "finished";
    }
    return "?";
}

}  // namespace asgd

namespace asgd::maa {

RoundContext context_for(Level level, Rule rule) noexcept {
    if (level == Level::SharedMemory)
        return rule == Rule::MidExtremes ? RoundContext::SMMidExt : RoundContext::SMApproachExt;
    return rule == Rule::MidExtremes ? RoundContext::ClusterMidExt : RoundContext::ClusterApproachExt;
}

double round_factor(RoundContext ctx) noexcept {
    switch (ctx) {
        case RoundContext::SMMidExt: return 7.0 / 8.0;
        case RoundContext::SMApproachExt: return 31.0 / 32.0;
        case RoundContext::ClusterMidExt: return 23.0 / 24.0;
        case RoundContext::ClusterApproachExt: return 79.0 / 80.0;
    }
    return 1.0;
}

std::size_t required_rounds(double q, RoundContext ctx) {
    if (!(q > 0.0 && q < 1.0)) throw UsageError("required_rounds: q must lie in (0,1), got " + std::to_string(q));
    const double factor = round_factor(ctx);
    double rounds = std::ceil(std::log(q) / std::log(factor));
    // log(q)/log(factor) can land a hair above an exact integer; take the
    // smallest R with factor^R <= q.
    while (rounds > 1.0 && std::pow(factor, rounds - 1.0) <= q) rounds -= 1.0;
    while (std::pow(factor, rounds) > q) rounds += 1.0;
    return static_cast<std::size_t>(std::max(rounds, 1.0));
}

double inner_smmaa_target(Rule rule) noexcept {
    return rule == Rule::MidExtremes ? 1.0 / 6.0 : 1.0 / 10.0;
}

const char* to_string(Rule r) noexcept {
    return r == Rule::MidExtremes ? "mid_extremes" : "approach_extreme";
}

// --------------------------------------------------------------------------

NodeId WitnessLog::add_input(ProcessId origin, const Vector& value) {
    nodes_.push_back({kNoNode, kNoNode, origin, value});
    return static_cast<NodeId>(nodes_.size());
}

NodeId WitnessLog::add_midpoint(ProcessId origin, NodeId left, NodeId right, const Vector& value) {
    if (!contains(left) || !contains(right)) throw UsageError("WitnessLog: midpoint of unknown node");
    nodes_.push_back({left, right, origin, value});
    return static_cast<NodeId>(nodes_.size());
}

const WitnessLog::Node& WitnessLog::node(NodeId id) const {
    if (!contains(id)) throw UsageError("WitnessLog: unknown node " + std::to_string(id));
    return nodes_[id - 1];
}

namespace {

// Same scan order and strict comparisons as extreme_pair / farthest_index.
template <class Get>
Point aggregate_impl(Rule rule, std::size_t n, Get at, const Point& own, ProcessId self, WitnessLog* log) {
    if (n == 0) throw UsageError("aggregate: empty point set");
    const Point* a = nullptr;
    const Point* b = nullptr;
    if (rule == Rule::MidExtremes) {
        std::size_t bi = 0, bj = 0;
        double best = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d2 = distance_sq(at(i).value, at(j).value);
                if (d2 > best) {
                    best = d2;
                    bi = i;
                    bj = j;
                }
            }
        a = &at(bi);
        b = &at(bj);
    } else {
        std::size_t bi = 0;
        double best = distance_sq(at(0).value, own.value);
        for (std::size_t i = 1; i < n; ++i) {
            const double d2 = distance_sq(at(i).value, own.value);
            if (d2 > best) {
                best = d2;
                bi = i;
            }
        }
        a = &own;
        b = &at(bi);
    }
    Point out{midpoint(a->value, b->value), kNoNode};
    if (log != nullptr) out.node = log->add_midpoint(self, a->node, b->node, out.value);
    return out;
}

}  // namespace

Point aggregate(Rule rule, std::span<const Point> set, const Point& own, ProcessId self, WitnessLog* log) {
    return aggregate_impl(rule, set.size(), [&](std::size_t i) -> const Point& { return set[i]; }, own, self, log);
}

Point aggregate(Rule rule, std::span<const Point* const> set, const Point& own, ProcessId self, WitnessLog* log) {
    return aggregate_impl(rule, set.size(), [&](std::size_t i) -> const Point& { return *set[i]; }, own, self, log);
}

// --------------------------------------------------------------------------

RoundRegisterBank::RoundRegisterBank(std::size_t cluster_size, std::size_t rounds)
    : cluster_size_(cluster_size), rounds_(rounds), cells_(cluster_size * (rounds + 1)) {
    if (cluster_size == 0) throw UsageError("RoundRegisterBank: empty cluster");
}

std::size_t RoundRegisterBank::index(std::size_t round, std::size_t cell) const {
    if (round < 1 || round > rounds_ + 1 || cell >= cluster_size_)
        throw ModelViolation("register A_" + std::to_string(round) + "[" + std::to_string(cell) +
                             "] does not exist");
    return (round - 1) * cluster_size_ + cell;
}

void RoundRegisterBank::write(std::size_t round, std::size_t cell, std::size_t writer, Point value) {
    if (cell != writer)
        throw ModelViolation("process in slot " + std::to_string(writer) + " wrote foreign cell " +
                             std::to_string(cell));
    auto& slot = cells_[index(round, cell)];
    if (slot) throw ModelViolation("cell A_" + std::to_string(round) + "[" + std::to_string(cell) + "] written twice");
    slot = std::move(value);
}

const std::optional<Point>& RoundRegisterBank::read(std::size_t round, std::size_t cell) const {
    return cells_[index(round, cell)];
}

// --------------------------------------------------------------------------

SmmaaProcess::SmmaaProcess(std::size_t slot, std::size_t cluster_size, std::size_t rounds, Rule rule,
                           ProcessId self, Point input)
    : slot_(slot), cluster_size_(cluster_size), rounds_(rounds), rule_(rule), self_(self),
      current_(std::move(input)), collected_(cluster_size, nullptr) {
    if (slot >= cluster_size) throw UsageError("SmmaaProcess: slot outside cluster");
    if (rounds == 0) throw UsageError("SmmaaProcess: needs at least one round");
}

Want SmmaaProcess::want() const noexcept {
    switch (phase_) {
        case Phase::Write: return Want::Write;
        case Phase::Read: return Want::Read;
        case Phase::Done: return Want::Finished;
    }
    return Want::Finished;
}

void SmmaaProcess::on_write_done(WitnessLog* log) {
    if (phase_ != Phase::Write) throw ModelViolation("SMMAA: unexpected write completion");
    if (round_ == rounds_ + 1) {
        phase_ = Phase::Done;
        return;
    }
    // The own cell of A_r always holds the value just written; reading it back
    // is not a separate step.
    std::fill(collected_.begin(), collected_.end(), nullptr);
    collected_[slot_] = &current_;
    phase_ = Phase::Read;
    next_slot_ = 0;
    advance_slot();
    if (next_slot_ >= cluster_size_) finish_collect(log);  // singleton cluster
}

void SmmaaProcess::advance_slot() noexcept {
    while (next_slot_ < cluster_size_ && next_slot_ == slot_) ++next_slot_;
}

void SmmaaProcess::on_read(const std::optional<Point>& cell, WitnessLog* log) {
    if (phase_ != Phase::Read) throw ModelViolation("SMMAA: unexpected read completion");
    collected_[next_slot_] = cell ? &*cell : nullptr;
    ++next_slot_;
    advance_slot();
    if (next_slot_ >= cluster_size_) finish_collect(log);
}

void SmmaaProcess::finish_collect(WitnessLog* log) {
    scratch_.clear();
    for (const Point* c : collected_)
        if (c) scratch_.push_back(c);
    current_ = aggregate(rule_, std::span<const Point* const>(scratch_), current_, self_, log);
    ++round_;
    phase_ = Phase::Write;
}

void smmaa_step(SmmaaProcess& proc, RoundRegisterBank& bank, WitnessLog* log) {
    switch (proc.want()) {
        case Want::Write:
            bank.write(proc.round(), proc.slot(), proc.slot(), proc.pending_write());
            proc.on_write_done(log);
            break;
        case Want::Read:
            proc.on_read(bank.read(proc.round(), proc.read_slot()), log);
            break;
        default:
            break;
    }
}

// --------------------------------------------------------------------------

ClusterMaaParams cluster_params(double q, Rule rule, std::size_t clusters) {
    if (clusters == 0) throw UsageError("cluster_params: no clusters");
    ClusterMaaParams p;
    p.rule = rule;
    p.rounds = required_rounds(q, context_for(Level::Cluster, rule));
    p.smmaa_rounds = required_rounds(inner_smmaa_target(rule), context_for(Level::SharedMemory, rule));
    p.quorum_clusters = clusters / 2 + 1;
    return p;
}

ClusterMaaProcess::ClusterMaaProcess(ProcessId self, std::size_t slot, std::size_t cluster_size,
                                     std::span<const ClusterId> cluster_of, ClusterMaaParams params, Point input)
    : self_(self), slot_(slot), cluster_size_(cluster_size), cluster_of_(cluster_of), params_(params),
      current_(std::move(input)), received_(cluster_of.size()) {
    if (params_.rounds == 0) throw UsageError("ClusterMaaProcess: needs at least one round");
    if (params_.quorum_clusters == 0) throw UsageError("ClusterMaaProcess: quorum must be positive");
    if (self >= cluster_of.size()) throw UsageError("ClusterMaaProcess: process id outside topology");
    for (ClusterId c : cluster_of) clusters_ = std::max<std::size_t>(clusters_, c + 1);
    start_round();
}

void ClusterMaaProcess::start_round() {
    sent_ = false;
    smmaa_.emplace(slot_, cluster_size_, params_.smmaa_rounds, params_.rule, self_, current_);
}

Want ClusterMaaProcess::want() const noexcept {
    if (finished_) return Want::Finished;
    if (sent_) return Want::Wait;
    if (smmaa_->finished()) return Want::Send;
    return smmaa_->want();
}

MaaMessage ClusterMaaProcess::take_send(WitnessLog* log) {
    if (want() != Want::Send) throw ModelViolation("cluster MAA: send requested before SMMAA finished");
    smmaa_out_ = smmaa_->output();
    sent_ = true;
    MaaMessage msg{round_, self_, smmaa_out_};
    received_[self_] = smmaa_out_;
    try_complete_round(log);
    return msg;
}

void ClusterMaaProcess::on_message(const MaaMessage& msg, WitnessLog* log) {
    if (finished_ || msg.round < round_) return;  // stale round
    if (msg.sender >= cluster_of_.size()) throw ModelViolation("cluster MAA: message from unknown process");
    if (msg.round > round_) {
        future_.push_back(msg);
        return;
    }
    auto& cell = received_[msg.sender];
    if (!cell) cell = msg.value;
    try_complete_round(log);
}

std::size_t ClusterMaaProcess::clusters_heard() const {
    std::vector<bool> seen(clusters_, false);
    std::size_t count = 0;
    for (std::size_t p = 0; p < received_.size(); ++p)
        if (received_[p] && !seen[cluster_of_[p]]) {
            seen[cluster_of_[p]] = true;
            ++count;
        }
    return count;
}

void ClusterMaaProcess::try_complete_round(WitnessLog* log) {
    if (!sent_) return;
    if (clusters_heard() < params_.quorum_clusters) return;

    // Ascending sender order.
    std::vector<Point> set;
    set.reserve(received_.size());
    last_quorum_.clear();
    for (std::size_t p = 0; p < received_.size(); ++p) {
        if (!received_[p]) continue;
        set.push_back(std::move(*received_[p]));
        last_quorum_.push_back(static_cast<ProcessId>(p));
        received_[p].reset();
    }
    // ApproachExtreme approaches from the own SMMAA output y_r^i.
    current_ = aggregate(params_.rule, set, smmaa_out_, self_, log);
    ++round_;
    if (round_ > params_.rounds) {
        finished_ = true;
        future_.clear();
        return;
    }
    // Values for the new round that arrived early.
    std::size_t keep = 0;
    for (auto& m : future_) {
        if (m.round == round_) {
            auto& cell = received_[m.sender];
            if (!cell) cell = std::move(m.value);
        } else {
            future_[keep++] = std::move(m);
        }
    }
    future_.resize(keep);
    start_round();
}

std::string ClusterMaaProcess::waiting_for() const {
    if (finished_) return "finished";
    if (!sent_) return "running SMMAA round " + std::to_string(round_);
    return "MAA round " + std::to_string(round_) + " holds values from " + std::to_string(clusters_heard()) +
           " cluster(s), needs " + std::to_string(params_.quorum_clusters);
}

}  // namespace asgd::maa
