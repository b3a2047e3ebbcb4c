#include "sgh/lifecycle.hpp"

#include <algorithm>

namespace sgh {

const char* to_string(NodeState s) {
    switch (s) {
        case NodeState::pending: return "pending";
        case NodeState::ready: return "ready";
        case NodeState::running: return "running";
        case NodeState::waiting_human: return "waiting_human";
        case NodeState::blocked: return "blocked";
        case NodeState::executed: return "executed";
        case NodeState::failed_retryable: return "failed_retryable";
        case NodeState::failed: return "failed";
        case NodeState::cancelled: return "cancelled";
        case NodeState::skipped: return "skipped";
    }
    return "?";
}

const char* to_string(Trigger t) {
    switch (t) {
        case Trigger::deps_satisfied: return "deps_satisfied";
        case Trigger::dispatch: return "dispatch";
        case Trigger::dep_lost: return "dep_lost";
        case Trigger::sibling_completed: return "sibling_completed";
        case Trigger::action_success: return "action_success";
        case Trigger::transient_error: return "transient_error";
        case Trigger::structural_error: return "structural_error";
        case Trigger::approval_required: return "approval_required";
        case Trigger::human_approved: return "human_approved";
        case Trigger::human_cancelled: return "human_cancelled";
        case Trigger::human_timeout: return "human_timeout";
        case Trigger::dep_resolved: return "dep_resolved";
        case Trigger::retry: return "retry";
        case Trigger::budget_exhausted: return "budget_exhausted";
        case Trigger::exec_timeout: return "exec_timeout";
    }
    return "?";
}

NodeState node_state_from_string(const std::string& s) {
    for (auto st : kAllStates)
        if (s == to_string(st)) return st;
    throw Error("unknown node state '" + s + "'");
}

Trigger trigger_from_string(const std::string& s) {
    for (auto t : kAllTriggers)
        if (s == to_string(t)) return t;
    throw Error("unknown trigger '" + s + "'");
}

bool is_terminal(NodeState s) {
    return s == NodeState::executed || s == NodeState::failed || s == NodeState::cancelled ||
           s == NodeState::skipped;
}

const char* to_string(RecoveryState s) {
    switch (s) {
        case RecoveryState::pristine: return "pristine";
        case RecoveryState::retried: return "retried";
        case RecoveryState::patched: return "patched";
    }
    return "?";
}

RecoveryState recovery_state_from_string(const std::string& s) {
    if (s == "pristine") return RecoveryState::pristine;
    if (s == "retried") return RecoveryState::retried;
    if (s == "patched") return RecoveryState::patched;
    throw Error("unknown recovery state '" + s + "'");
}

NodeRuntime NodeRuntime::from_config(const NodeId& node, const NodeConfig& cfg,
                                     std::int64_t human_timeout_ms) {
    NodeRuntime rt;
    rt.node = node;
    rt.retry_budget = cfg.retry_budget;
    rt.timeout_ms = cfg.timeout_ms;
    rt.human_timeout_ms = human_timeout_ms;
    return rt;
}

// The legal relation. Rows beyond the base table cover sibling skip of
// pending/running candidates and join-failure propagation into pending
// successors; without them a run cannot drive every node to a terminal
// state once a predecessor fails for good.
const std::vector<TransitionRow>& transition_table() {
    static const std::vector<TransitionRow> table = {
        {NodeState::pending, Trigger::deps_satisfied, NodeState::ready, "join condition holds"},
        {NodeState::pending, Trigger::sibling_completed, NodeState::skipped,
         "an any_of sibling executed"},
        {NodeState::pending, Trigger::structural_error, NodeState::failed,
         "join permanently unsatisfiable"},
        {NodeState::ready, Trigger::dispatch, NodeState::running, "selected by the policy"},
        {NodeState::ready, Trigger::dep_lost, NodeState::blocked,
         "a predecessor left terminal success (unreachable under absorption)"},
        {NodeState::ready, Trigger::sibling_completed, NodeState::skipped,
         "an any_of sibling executed"},
        {NodeState::running, Trigger::action_success, NodeState::executed,
         "output contract satisfied"},
        {NodeState::running, Trigger::transient_error, NodeState::failed_retryable,
         "network, timeout, rate limit"},
        {NodeState::running, Trigger::structural_error, NodeState::failed,
         "missing dependency, invalid plan"},
        {NodeState::running, Trigger::approval_required, NodeState::waiting_human,
         "side-effect level exceeds threshold"},
        {NodeState::running, Trigger::exec_timeout, NodeState::failed, "elapsed time > timeout"},
        {NodeState::running, Trigger::sibling_completed, NodeState::skipped,
         "an any_of sibling executed; in-flight work is cancelled"},
        {NodeState::waiting_human, Trigger::human_approved, NodeState::ready,
         "approved or resumed"},
        {NodeState::waiting_human, Trigger::human_cancelled, NodeState::cancelled,
         "explicit cancel"},
        {NodeState::waiting_human, Trigger::human_timeout, NodeState::cancelled,
         "human timeout elapsed without response"},
        {NodeState::blocked, Trigger::dep_resolved, NodeState::pending,
         "blocking condition cleared"},
        {NodeState::failed_retryable, Trigger::retry, NodeState::pending, "retry budget remains"},
        {NodeState::failed_retryable, Trigger::sibling_completed, NodeState::skipped,
         "an any_of sibling executed"},
        {NodeState::failed_retryable, Trigger::budget_exhausted, NodeState::failed,
         "no retry budget remains"},
    };
    return table;
}

std::optional<NodeState> legal_target(NodeState from, Trigger trigger) {
    for (const auto& row : transition_table())
        if (row.from == from && row.trigger == trigger) return row.to;
    return std::nullopt;
}

NodeRuntime transition(NodeRuntime rt, Trigger trigger, std::int64_t clock) {
    if (is_terminal(rt.state)) throw TerminalStateMutation(rt.node, to_string(rt.state));

    auto target = legal_target(rt.state, trigger);
    if (!target) throw IllegalTransition(to_string(rt.state), to_string(trigger));

    // Guards from the table's condition column.
    switch (trigger) {
        case Trigger::retry:
            if (rt.retries_used >= rt.retry_budget)
                throw IllegalTransition(to_string(rt.state), "retry with no budget remaining");
            break;
        case Trigger::budget_exhausted:
            if (rt.retries_used < rt.retry_budget)
                throw IllegalTransition(to_string(rt.state),
                                        "budget_exhausted with budget remaining");
            break;
        case Trigger::action_success:
            if (!rt.contract_passed)
                throw IllegalTransition(to_string(rt.state),
                                        "action_success without a contract-pass stamp");
            break;
        default:
            break;
    }

    switch (trigger) {
        case Trigger::dispatch:
            rt.started_at = clock;
            rt.deadline = clock + rt.timeout_ms;
            break;
        case Trigger::approval_required:
            rt.human_deadline = clock + rt.human_timeout_ms;
            rt.started_at.reset();
            rt.deadline.reset();
            break;
        case Trigger::human_approved:
            rt.human_deadline.reset();
            rt.approved = true;
            break;
        case Trigger::retry:
            rt.retries_used += 1;
            rt.contract_passed = false;
            rt.started_at.reset();
            rt.deadline.reset();
            break;
        default:
            break;
    }

    rt.state = *target;
    if (is_terminal(rt.state) || rt.state == NodeState::pending || rt.state == NodeState::ready) {
        if (trigger != Trigger::human_approved || rt.state != NodeState::ready) {
            rt.started_at.reset();
            rt.deadline.reset();
        }
    }
    if (is_terminal(rt.state)) rt.human_deadline.reset();
    return rt;
}

std::optional<Trigger> check_deadlines(const NodeRuntime& rt, std::int64_t clock) {
    if (rt.state == NodeState::running && rt.deadline && clock > *rt.deadline)
        return Trigger::exec_timeout;
    if (rt.state == NodeState::waiting_human && rt.human_deadline && clock > *rt.human_deadline)
        return Trigger::human_timeout;
    return std::nullopt;
}

}  // namespace sgh
