#include "sgh/recovery.hpp"

#include <algorithm>

namespace sgh {

const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::transient: return "transient";
        case ErrorKind::contract_violation: return "contract_violation";
        case ErrorKind::auth_error: return "auth_error";
        case ErrorKind::structural: return "structural";
    }
    return "?";
}

const char* to_string(RecoveryAction a) {
    switch (a) {
        case RecoveryAction::local_retry: return "local_retry";
        case RecoveryAction::local_patch: return "local_patch";
        case RecoveryAction::request_replan: return "request_replan";
    }
    return "?";
}

ErrorKind classify_error(const RawFailure& failure) {
    const std::string& t = failure.tag;
    if (t == "transient" || t == "network" || t == "timeout" || t == "rate_limit")
        return ErrorKind::transient;
    if (t.rfind("contract", 0) == 0) return ErrorKind::contract_violation;
    if (t.rfind("auth", 0) == 0) return ErrorKind::auth_error;
    // structural, missing_dependency, invalid_plan and everything unknown.
    return ErrorKind::structural;
}

Json Diagnosis::to_json() const {
    return Json{{"kind", to_string(kind)},
                {"node", node},
                {"cause", cause},
                {"action", to_string(action)},
                {"raw_recommendation", to_string(raw_recommendation)},
                {"confidence", confidence}};
}

namespace {

int level_of(RecoveryAction a) {
    switch (a) {
        case RecoveryAction::local_retry: return 1;
        case RecoveryAction::local_patch: return 2;
        case RecoveryAction::request_replan: return 3;
    }
    return 1;
}

bool all_failed_patched(const ExecutionState& state, bool* any_failed) {
    bool any = false;
    bool all_patched = true;
    for (const auto& [_, rt] : state.runtimes) {
        if (rt.state == NodeState::failed) {
            any = true;
            if (rt.recovery_state < RecoveryState::patched) all_patched = false;
        }
    }
    if (any_failed) *any_failed = any;
    return any && all_patched;
}

}  // namespace

RecoveryAction highest_permitted(const ExecutionState& state, const NodeId& node,
                                 RecoveryAction cap) {
    const NodeRuntime& rt = state.runtime(node);
    RecoveryAction best = RecoveryAction::local_retry;
    if (rt.recovery_state >= RecoveryState::retried && rt.recovery_state < RecoveryState::patched)
        best = RecoveryAction::local_patch;
    if (rt.recovery_state >= RecoveryState::patched && all_failed_patched(state, nullptr))
        best = RecoveryAction::request_replan;
    if (level_of(best) > level_of(cap)) best = cap;
    return best;
}

Diagnosis diagnose(ErrorKind kind, const NodeId& node, const ContextStore& diag,
                   const ExecutionState& state, RecoveryAction cap) {
    PrincipalScope as_diagnoser(Principal::diagnoser);

    Diagnosis d;
    d.kind = kind;
    d.node = node;
    switch (kind) {
        case ErrorKind::transient:
            d.raw_recommendation = RecoveryAction::local_retry;
            d.cause = "transient fault; same attempt is expected to succeed on retry";
            d.confidence = 1.0;
            break;
        case ErrorKind::contract_violation:
            d.raw_recommendation = RecoveryAction::local_patch;
            d.cause = "output repeatedly violates the node contract; configuration suspect";
            d.confidence = 0.8;
            break;
        case ErrorKind::auth_error:
            d.raw_recommendation = RecoveryAction::local_patch;
            d.cause = "authorization rejected; credentials or endpoint configuration suspect";
            d.confidence = 0.8;
            break;
        case ErrorKind::structural:
            d.raw_recommendation = RecoveryAction::request_replan;
            d.cause = "structural defect; the plan itself is suspect";
            d.confidence = 0.6;
            break;
    }
    // Failure histories live in the diagnostic context; touching it here
    // also proves the partition guard holds for the diagnoser principal.
    if (diag.contains("failure_history")) d.cause += " (history consulted)";

    RecoveryAction permitted = highest_permitted(state, node, cap);
    d.action = level_of(d.raw_recommendation) <= level_of(permitted) ? d.raw_recommendation
                                                                     : permitted;
    return d;
}

void attempt_retry(ExecutionState& state, const NodeId& node, std::int64_t clock, Wal* wal) {
    NodeRuntime& rt = state.runtime(node);
    if (rt.state != NodeState::failed_retryable)
        throw EscalationOrderViolation("retry on node '" + node + "' in state " +
                                       to_string(rt.state));
    if (rt.retries_used >= rt.retry_budget) throw BudgetExhausted(node);

    rt.recovery_state = std::max(rt.recovery_state, RecoveryState::retried);
    if (wal) {
        wal->append(RecordKind::recovery_action, clock, state.plan->id(), state.plan->version(),
                    Json{{"node", node},
                         {"applied", "retry"},
                         {"level", 1},
                         {"recovery_state", to_string(rt.recovery_state)}});
    }
    logged_transition(state, node, Trigger::retry, clock, wal);
}

void attempt_patch(ExecutionState& state, const NodeId& node, const NodeConfig& new_config,
                   std::int64_t clock, Wal* wal) {
    NodeRuntime& rt = state.runtime(node);
    if (rt.state != NodeState::failed_retryable)
        throw EscalationOrderViolation("patch on node '" + node + "' in state " +
                                       to_string(rt.state));
    if (rt.recovery_state < RecoveryState::retried)
        throw EscalationOrderViolation("patch on pristine node '" + node +
                                       "'; level 1 has not been exhausted");
    if (rt.recovery_state >= RecoveryState::patched)
        throw EscalationOrderViolation("node '" + node +
                                       "' was already patched in this plan version");

    const NodeConfig& current = state.effective_config(node);
    if (new_config.join != current.join || new_config.any_of_group != current.any_of_group)
        throw TopologyChangeAttempted("patch for '" + node +
                                      "' changes join semantics or group membership");
    if (new_config.retry_budget <= rt.retries_used)
        throw EscalationOrderViolation("patch for '" + node +
                                       "' leaves no budget for a fresh attempt");

    state.config_overrides[node] = new_config;
    rt.retry_budget = new_config.retry_budget;
    rt.timeout_ms = new_config.timeout_ms;
    rt.recovery_state = RecoveryState::patched;
    if (wal) {
        wal->append(RecordKind::recovery_action, clock, state.plan->id(), state.plan->version(),
                    Json{{"node", node},
                         {"applied", "patch"},
                         {"level", 2},
                         {"recovery_state", to_string(rt.recovery_state)},
                         {"new_config", node_config_to_json(new_config)}});
    }
    // The fresh attempt re-enters through the retry arc; the patched
    // budget has room for it by the precondition above.
    logged_transition(state, node, Trigger::retry, clock, wal);
}

ReplanRequest request_replan(const ExecutionState& state, const std::string& reason) {
    bool any_failed = false;
    bool ok = all_failed_patched(state, &any_failed);
    if (!any_failed)
        throw EscalationOrderViolation("replan requested with no failed nodes");
    if (!ok)
        throw EscalationOrderViolation(
            "replan requested while a failed node has not reached patched");
    return ReplanRequest{reason};
}

}  // namespace sgh
