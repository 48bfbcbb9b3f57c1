#pragma once

// Vocabulary shared by the per-process state machines and the simulator
// that drives them.

#include <cstdint>
#include <string>

namespace asgd {

using ProcessId = std::uint32_t;
using ClusterId = std::uint32_t;

/// What a state machine wants to do with its next local step.
enum class Want : std::uint8_t {
    Wait,      // blocked until a message arrives
    Compute,   // draw a stochastic gradient and broadcast
    Write,     // write its own register cell
    Read,      // read one register cell of its cluster
    Send,      // broadcast a round value
    Finished,  // produced its output
};

const char* to_string(Want w) noexcept;

/// Location of a single-writer cell in a cluster's shared memory.
/// `instance` is the SGD iteration owning the MAA call (0 for standalone MAA),
/// `maa_round` the cluster-level round (0 for standalone SMMAA),
/// `sm_round` the index r of the array A_r, and `slot` the cell index.
struct RegisterAddr {
    std::uint32_t instance = 0;
    std::uint32_t maa_round = 0;
    std::uint32_t sm_round = 0;
    std::uint32_t slot = 0;

    friend bool operator==(const RegisterAddr&, const RegisterAddr&) = default;
};

}  // namespace asgd
