#include "asgd/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "asgd/error.hpp"

namespace asgd::sgd {

const char* to_string(Variant v) noexcept {
    return v == Variant::StronglyConvex ? "strongly_convex" : "non_convex";
}

double contraction_target(const SgdConfig& cfg, std::size_t t) {
    if (t == 0 || t > cfg.T) throw UsageError("contraction_target: iteration out of range");
    if (!cfg.q_schedule.empty()) return cfg.q_schedule[t - 1];
    return learning_rate(cfg.schedule, t) / 4.0;
}

void validate(const SgdConfig& cfg, const oracle::Oracle& oracle, std::size_t n, std::size_t f) {
    if (cfg.T == 0) throw ConfigError("algorithm.T", "T must be at least 1");
    if (cfg.N == 0) throw ConfigError("algorithm.N", "N must be at least 1");
    if (f > n) throw ConfigError("faults.f", "f exceeds n");
    if (cfg.N > n - f) {
        std::ostringstream os;
        os << "N exceeds n - f (progress condition N <= n - f): N=" << cfg.N << ", n=" << n << ", f=" << f;
        throw ConfigError("algorithm.N", os.str());
    }
    if (cfg.x1.dim() != oracle.dim())
        throw ConfigError("oracle.x1", "x1 has dimension " + std::to_string(cfg.x1.dim()) + ", oracle has " +
                                           std::to_string(oracle.dim()));
    if (!cfg.x1.all_finite()) throw ConfigError("oracle.x1", "x1 must be finite");

    if (const auto* dec = std::get_if<Decreasing>(&cfg.schedule)) {
        if (!(dec->gamma > 0.0)) throw ConfigError("algorithm.schedule.gamma", "gamma must be > 0");
        if (!(dec->beta > 0.0)) throw ConfigError("algorithm.schedule.beta", "beta must be > 0");
    } else if (!(std::get<Constant>(cfg.schedule).eta > 0.0)) {
        throw ConfigError("algorithm.schedule.eta", "eta must be > 0");
    }

    if (cfg.variant == Variant::NonConvex) {
        if (cfg.tau < 1 || cfg.tau > cfg.T) throw ConfigError("algorithm.tau", "tau must lie in [1, T]");
        if (!cfg.q_schedule.empty() && cfg.q_schedule.size() != cfg.T)
            throw ConfigError("algorithm.q_t", "per-iteration q_t list must have T entries");
        for (std::size_t t = 1; t <= cfg.T; ++t) {
            const double q = contraction_target(cfg, t);
            if (!(q > 0.0 && q < 1.0))
                throw ConfigError("algorithm.q_t", "q_t must lie in (0,1) (iteration " + std::to_string(t) + ")");
        }
        if (cfg.cluster_quorum && *cfg.cluster_quorum == 0)
            throw ConfigError("algorithm.cluster_quorum", "cluster quorum must be positive");
    }

    if (!cfg.enforce_step_bounds) return;
    const auto c = oracle.constants();
    const double eta_max = max_learning_rate(cfg.schedule);
    std::ostringstream os;
    if (cfg.variant == Variant::StronglyConvex) {
        if (!c.mu) throw ConfigError("oracle.kind", "strongly convex variant needs a strongly convex oracle");
        if (eta_max > 1.0 / c.L) {
            os << "learning rate " << eta_max << " exceeds 1/L = " << 1.0 / c.L;
            throw ConfigError("algorithm.schedule", os.str());
        }
        if (const auto* dec = std::get_if<Decreasing>(&cfg.schedule); dec && !(dec->beta > 1.0 / *c.mu)) {
            os << "beta must exceed 1/mu = " << 1.0 / *c.mu;
            throw ConfigError("algorithm.schedule.beta", os.str());
        }
    } else if (eta_max > 1.0 / (4.0 * c.L)) {
        os << "learning rate " << eta_max << " exceeds 1/(4L) = " << 1.0 / (4.0 * c.L);
        throw ConfigError("algorithm.schedule", os.str());
    }
}

Vector effective_gradient(const Vector& x_t, const Vector& x_next, double eta) {
    if (!(eta > 0.0)) throw UsageError("effective_gradient: eta must be positive");
    Vector g = x_t - x_next;
    for (double& c : g.coords()) c /= eta;
    return g;
}

namespace {

Vector local_step(const oracle::Oracle& o, const Vector& x, const Vector& g, double eta) {
    Vector y = x;
    for (std::size_t k = 0; k < y.dim(); ++k) y[k] -= eta * g[k];
    o.project(y);
    return y;
}

}  // namespace

// --------------------------------------------------------------------------

StronglyConvexProcess::StronglyConvexProcess(ProcessId self, const SgdConfig& cfg, const oracle::Oracle& oracle)
    : self_(self), cfg_(&cfg), oracle_(&oracle), x_(cfg.x1) {}

Want StronglyConvexProcess::want() const noexcept {
    if (finished()) return Want::Finished;
    return computed_ ? Want::Wait : Want::Compute;
}

Vector StronglyConvexProcess::compute(Rng& rng) {
    if (want() != Want::Compute) throw ModelViolation("strongly convex process: compute out of turn");
    const Vector g = oracle_->stochastic_grad(x_, rng);
    Vector y = local_step(*oracle_, x_, g, learning_rate(cfg_->schedule, t_));
    computed_ = true;
    on_message(t_, self_, y);
    try_complete();  // N other values may already be waiting
    return y;
}

void StronglyConvexProcess::on_message(std::size_t iteration, ProcessId sender, const Vector& y) {
    if (finished() || iteration < t_) return;  // stale
    auto& bucket = inbox_[iteration];
    if (bucket.size() >= cfg_->N) return;      // beyond the first N
    bucket.emplace_back(sender, y);
    if (iteration == t_) try_complete();
}

void StronglyConvexProcess::try_complete() {
    if (!computed_) return;
    auto it = inbox_.find(t_);
    if (it == inbox_.end() || it->second.size() < cfg_->N) return;
    auto& bucket = it->second;
    std::sort(bucket.begin(), bucket.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Vector> values;
    values.reserve(bucket.size());
    JournalEntry entry{JournalEntry::Kind::IterationDone, static_cast<std::uint32_t>(t_), 0, {}, {}, {}};
    for (auto& [sender, y] : bucket) {
        entry.senders.push_back(sender);
        entry.tags.push_back(static_cast<std::uint32_t>(t_));
        values.push_back(std::move(y));
    }
    x_ = mean(values);
    entry.value = x_;
    journal_.push_back(std::move(entry));
    inbox_.erase(it);
    ++t_;
    computed_ = false;
}

std::string StronglyConvexProcess::waiting_for() const {
    if (finished()) return "finished";
    if (!computed_) return "iteration " + std::to_string(t_) + " not computed";
    auto it = inbox_.find(t_);
    const std::size_t have = it == inbox_.end() ? 0 : it->second.size();
    return "iteration " + std::to_string(t_) + " holds " + std::to_string(have) + " of " + std::to_string(cfg_->N) +
           " parameters";
}

// --------------------------------------------------------------------------

NonConvexProcess::NonConvexProcess(ProcessId self, std::size_t slot, std::size_t cluster_size,
                                   std::span<const ClusterId> cluster_of, std::size_t clusters,
                                   const SgdConfig& cfg, const oracle::Oracle& oracle)
    : self_(self), slot_(slot), cluster_size_(cluster_size), cluster_of_(cluster_of), clusters_(clusters),
      cfg_(&cfg), oracle_(&oracle), x_(cfg.x1) {
    if (cfg.tau == 1) x_tau_ = x_;
}

Want NonConvexProcess::want() const noexcept {
    switch (phase_) {
        case Phase::Compute: return Want::Compute;
        case Phase::WaitGrads: return Want::Wait;
        case Phase::Maa: return maa_->want();
        case Phase::Done: return Want::Finished;
    }
    return Want::Finished;
}

Vector NonConvexProcess::compute(Rng& rng, maa::WitnessLog* log) {
    if (phase_ != Phase::Compute) throw ModelViolation("non-convex process: compute out of turn");
    Vector g = oracle_->stochastic_grad(x_, rng);
    phase_ = Phase::WaitGrads;
    gradients_[t_].emplace(self_, g);
    try_average(log);
    after_maa_progress(log);
    return g;
}

void NonConvexProcess::on_gradient(std::size_t iteration, ProcessId sender, const Vector& g, maa::WitnessLog* log) {
    if (phase_ == Phase::Done || iteration < t_) return;
    if (iteration == t_ && phase_ != Phase::Compute && phase_ != Phase::WaitGrads) return;  // already averaged
    gradients_[iteration].emplace(sender, g);
    if (iteration == t_) {
        try_average(log);
        after_maa_progress(log);
    }
}

void NonConvexProcess::try_average(maa::WitnessLog* log) {
    if (phase_ != Phase::WaitGrads) return;
    auto it = gradients_.find(t_);
    if (it == gradients_.end() || it->second.size() < cfg_->N) return;

    JournalEntry entry{JournalEntry::Kind::GradientAveraged, static_cast<std::uint32_t>(t_), 0, {}, {}, {}};
    std::vector<Vector> values;
    values.reserve(it->second.size());
    for (auto& [sender, g] : it->second) {  // ascending sender
        entry.senders.push_back(sender);
        entry.tags.push_back(static_cast<std::uint32_t>(t_));
        values.push_back(std::move(g));
    }
    const Vector g = mean(values);
    gradients_.erase(it);
    Vector y = local_step(*oracle_, x_, g, learning_rate(cfg_->schedule, t_));
    entry.value = g;
    journal_.push_back(std::move(entry));

    auto params = maa::cluster_params(contraction_target(*cfg_, t_), cfg_->rule, clusters_);
    if (cfg_->cluster_quorum) params.quorum_clusters = *cfg_->cluster_quorum;
    const maa::NodeId node = log != nullptr ? log->add_input(self_, y) : maa::kNoNode;
    maa_.emplace(self_, slot_, cluster_size_, cluster_of_, params, maa::Point{std::move(y), node});
    maa_round_seen_ = 1;
    phase_ = Phase::Maa;
}

maa::MaaMessage NonConvexProcess::take_send(maa::WitnessLog* log) {
    if (phase_ != Phase::Maa) throw ModelViolation("non-convex process: send out of turn");
    auto msg = maa_->take_send(log);
    after_maa_progress(log);
    return msg;
}

void NonConvexProcess::after_register_step(maa::WitnessLog* log) {
    after_maa_progress(log);
}

void NonConvexProcess::on_maa_message(std::size_t instance, const maa::MaaMessage& msg, maa::WitnessLog* log) {
    if (phase_ == Phase::Done || instance < t_) return;
    if (instance == t_ && phase_ == Phase::Maa) {
        maa_->on_message(msg, log);
        after_maa_progress(log);
        return;
    }
    maa_buffer_[instance].push_back(msg);
}

void NonConvexProcess::after_maa_progress(maa::WitnessLog* log) {
    if (phase_ != Phase::Maa) return;
    // Messages for this instance that arrived before it started.
    if (auto it = maa_buffer_.find(t_); it != maa_buffer_.end()) {
        auto pending = std::move(it->second);
        maa_buffer_.erase(it);
        for (const auto& m : pending) maa_->on_message(m, log);
    }
    while (journal_rounds_ && maa_round_seen_ < maa_->round()) {
        JournalEntry entry{JournalEntry::Kind::MaaRoundDone, static_cast<std::uint32_t>(t_),
                           static_cast<std::uint32_t>(maa_round_seen_), maa_->value().value, maa_->last_quorum(), {}};
        entry.tags.assign(entry.senders.size(), static_cast<std::uint32_t>(maa_round_seen_));
        journal_.push_back(std::move(entry));
        ++maa_round_seen_;
    }
    if (!maa_->finished()) return;

    x_ = maa_->output().value;
    journal_.push_back({JournalEntry::Kind::IterationDone, static_cast<std::uint32_t>(t_), 0, x_, {}, {}});
    maa_.reset();
    ++t_;
    maa_round_seen_ = 1;
    if (t_ == cfg_->tau) x_tau_ = x_;
    if (t_ > cfg_->T) {
        phase_ = Phase::Done;
        gradients_.clear();
        maa_buffer_.clear();
        return;
    }
    phase_ = Phase::Compute;
}

std::string NonConvexProcess::waiting_for() const {
    switch (phase_) {
        case Phase::Compute: return "iteration " + std::to_string(t_) + " not computed";
        case Phase::WaitGrads: {
            auto it = gradients_.find(t_);
            const std::size_t have = it == gradients_.end() ? 0 : it->second.size();
            return "iteration " + std::to_string(t_) + " holds " + std::to_string(have) + " of " +
                   std::to_string(cfg_->N) + " gradients";
        }
        case Phase::Maa: return "iteration " + std::to_string(t_) + ": " + maa_->waiting_for();
        case Phase::Done: return "finished";
    }
    return "?";
}

}  // namespace asgd::sgd
