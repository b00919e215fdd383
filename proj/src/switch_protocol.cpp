#include "selfdbg/switch_protocol.hpp"

#include <csignal>
#include <cstdio>

namespace selfdbg {

std::string_view to_string(StopCause cause) noexcept {
    switch (cause) {
        case StopCause::Fault: return "Fault";
        case StopCause::Signal: return "Signal";
        case StopCause::ExitNotice: return "ExitNotice";
        case StopCause::GroupStop: return "GroupStop";
        case StopCause::Other: return "Other";
    }
    return "?";
}

std::string_view to_string(ActionKind kind) noexcept {
    switch (kind) {
        case ActionKind::TransitionCounterpartToCatcher: return "TransitionCounterpartToCatcher";
        case ActionKind::TransferControlTo: return "TransferControlTo";
        case ActionKind::ForwardSignal: return "ForwardSignal";
        case ActionKind::DetachAndExit: return "DetachAndExit";
        case ActionKind::SuppressAndContinue: return "SuppressAndContinue";
    }
    return "?";
}

std::string describe(const Classification& c) {
    char buf[96];
    if (auto* s = std::get_if<SwitchRequest>(&c)) {
        std::snprintf(buf, sizeof buf, "SwitchRequest(site=0x%llx,target=0x%llx)",
                      static_cast<unsigned long long>(s->site.pc), static_cast<unsigned long long>(s->target));
    } else if (auto* g = std::get_if<GenuineFault>(&c)) {
        std::snprintf(buf, sizeof buf, "GenuineFault(%d)", g->signal);
    } else if (auto* e = std::get_if<CounterpartExit>(&c)) {
        std::snprintf(buf, sizeof buf, "CounterpartExit(0x%x)", e->status);
    } else {
        std::snprintf(buf, sizeof buf, "IgnorableNotice(%s)",
                      std::string(to_string(std::get<IgnorableNotice>(c).cause)).c_str());
    }
    return buf;
}

void ActionPlan::push(const Action& a) noexcept {
    if (count_ < kMaxActions) actions_[count_++] = a;
}

Classification classify(const SwitchEvent& event, const Whitelist& whitelist, const CodecConfig& codec,
                        TrapTable trap_table) noexcept {
    switch (event.cause) {
        case StopCause::ExitNotice: return CounterpartExit{event.exit_status};
        case StopCause::GroupStop:
        case StopCause::Other: return IgnorableNotice{event.cause};
        case StopCause::Signal: return GenuineFault{event.signal};
        case StopCause::Fault: break;
    }

    const GenuineFault genuine{event.signal};
    const auto site = whitelist.lookup(event.faulting_pc);
    if (!site || site->fault_kind != event.fault_kind) return genuine;

    if (event.fault_kind == FaultKind::TrapReference) {
        if (event.signal != SIGTRAP) return genuine;
        const std::uint64_t id = event.regs[Reg::Rdi];
        if (id == kReturnIdentifier) return SwitchRequest{*site, kResumePendingTarget};
        if (id >= trap_table.size() || trap_table[id] == 0) return genuine;
        if (!codec.code.contains(trap_table[id])) return genuine;
        return SwitchRequest{*site, trap_table[id]};
    }

    if (event.signal != SIGSEGV || !event.fault_address) return genuine;
    const CodecScheme* scheme = try_select_scheme(event.fault_kind, codec);
    if (scheme == nullptr || scheme->id != site->scheme_id) return genuine;
    const auto target = try_decode_target(*event.fault_address, *scheme, codec.code);
    if (!target) return genuine;
    return SwitchRequest{*site, *target};
}

Classification classify(const SwitchEvent& event, const Whitelist& whitelist,
                        const CodecConfig& codec) noexcept {
    return classify(event, whitelist, codec, TrapTable(codec.trap_table));
}

ActionPlan plan_for(const Classification& classification, ProcessRole my_role) {
    if (my_role != ProcessRole::Catcher) throw ContractViolation("plan_for called by the Thrower");
    ActionPlan plan;
    if (auto* s = std::get_if<SwitchRequest>(&classification)) {
        plan.push({ActionKind::TransitionCounterpartToCatcher, 0, 0});
        plan.push({ActionKind::TransferControlTo, s->target, 0});
    } else if (auto* g = std::get_if<GenuineFault>(&classification)) {
        plan.push({ActionKind::ForwardSignal, 0, g->signal});
    } else if (std::holds_alternative<CounterpartExit>(classification)) {
        plan.push({ActionKind::DetachAndExit, 0, 0});
    } else {
        plan.push({ActionKind::SuppressAndContinue, 0, 0});
    }
    return plan;
}

}  // namespace selfdbg
