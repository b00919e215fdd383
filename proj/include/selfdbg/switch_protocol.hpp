#pragma once

#include "selfdbg/target_codec.hpp"
#include "selfdbg/types.hpp"
#include "selfdbg/whitelist.hpp"

#include <sys/types.h>

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>

namespace selfdbg {

// Why the counterpart is in a debug stop.
enum class StopCause : std::uint8_t {
    Fault,        // synchronous SIGSEGV or SIGTRAP raised by an instruction
    Signal,       // any other signal-delivery stop, including sent SIGSEGV
    ExitNotice,   // exit event of the counterpart
    GroupStop,    // job-control stop reported to the tracer
    Other,        // remaining ptrace events
};

std::string_view to_string(StopCause cause) noexcept;

struct SwitchEvent {
    pid_t pid = 0;
    StopCause cause = StopCause::Fault;
    int signal = 0;
    Address faulting_pc = 0;
    FaultKind fault_kind = FaultKind::SegvLoadStore;
    std::optional<Address> fault_address;  // unset for TrapReference
    RegisterSnapshot regs{};
    int exit_status = 0;                   // raw wait status, for ExitNotice
};

struct SwitchRequest {
    InvocationSite site;
    Address target = 0;
    friend bool operator==(const SwitchRequest&, const SwitchRequest&) = default;
};
struct GenuineFault {
    int signal = 0;
    friend bool operator==(const GenuineFault&, const GenuineFault&) = default;
};
struct CounterpartExit {
    int status = 0;
    friend bool operator==(const CounterpartExit&, const CounterpartExit&) = default;
};
struct IgnorableNotice {
    StopCause cause = StopCause::Other;
    friend bool operator==(const IgnorableNotice&, const IgnorableNotice&) = default;
};

using Classification = std::variant<SwitchRequest, GenuineFault, CounterpartExit, IgnorableNotice>;

std::string describe(const Classification& c);

enum class ActionKind : std::uint8_t {
    TransitionCounterpartToCatcher,
    TransferControlTo,
    ForwardSignal,
    DetachAndExit,
    SuppressAndContinue,
};

std::string_view to_string(ActionKind kind) noexcept;

struct Action {
    ActionKind kind = ActionKind::SuppressAndContinue;
    Address target = 0;
    int signal = 0;
    friend bool operator==(const Action&, const Action&) = default;
};

// At most two actions; fixed storage so planning never allocates.
class ActionPlan {
public:
    static constexpr std::size_t kMaxActions = 2;

    void push(const Action& a) noexcept;
    std::size_t size() const noexcept { return count_; }
    const Action& operator[](std::size_t i) const noexcept { return actions_[i]; }
    const Action* begin() const noexcept { return actions_.data(); }
    const Action* end() const noexcept { return actions_.data() + count_; }

    friend bool operator==(const ActionPlan& a, const ActionPlan& b) noexcept {
        return std::equal(a.begin(), a.end(), b.begin(), b.end());
    }

private:
    std::array<Action, kMaxActions> actions_{};
    std::size_t count_ = 0;
};

class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Entries of the identifier table consulted for TrapReference events; index 0
// is the return sentinel, so entries[i] is the entry of fragment i.
using TrapTable = std::span<const Address>;

Classification classify(const SwitchEvent& event, const Whitelist& whitelist, const CodecConfig& codec,
                        TrapTable trap_table) noexcept;
Classification classify(const SwitchEvent& event, const Whitelist& whitelist,
                        const CodecConfig& codec) noexcept;

// Throws ContractViolation when called as Thrower.
ActionPlan plan_for(const Classification& classification, ProcessRole my_role);

}  // namespace selfdbg
