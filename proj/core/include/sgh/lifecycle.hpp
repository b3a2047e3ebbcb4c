#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgh/errors.hpp"
#include "sgh/plan.hpp"

namespace sgh {

enum class NodeState {
    pending,
    ready,
    running,
    waiting_human,
    blocked,
    executed,
    failed_retryable,
    failed,
    cancelled,
    skipped,
};

enum class Trigger {
    deps_satisfied,
    dispatch,
    dep_lost,
    sibling_completed,
    action_success,
    transient_error,
    structural_error,
    approval_required,
    human_approved,
    human_cancelled,
    human_timeout,
    dep_resolved,
    retry,
    budget_exhausted,
    exec_timeout,
};

inline constexpr std::array<NodeState, 10> kAllStates = {
    NodeState::pending,          NodeState::ready,   NodeState::running,
    NodeState::waiting_human,    NodeState::blocked, NodeState::executed,
    NodeState::failed_retryable, NodeState::failed,  NodeState::cancelled,
    NodeState::skipped,
};

inline constexpr std::array<Trigger, 15> kAllTriggers = {
    Trigger::deps_satisfied,  Trigger::dispatch,          Trigger::dep_lost,
    Trigger::sibling_completed, Trigger::action_success,  Trigger::transient_error,
    Trigger::structural_error,  Trigger::approval_required, Trigger::human_approved,
    Trigger::human_cancelled,   Trigger::human_timeout,   Trigger::dep_resolved,
    Trigger::retry,             Trigger::budget_exhausted, Trigger::exec_timeout,
};

const char* to_string(NodeState s);
const char* to_string(Trigger t);
NodeState node_state_from_string(const std::string& s);
Trigger trigger_from_string(const std::string& s);

bool is_terminal(NodeState s);

/// Number of non-terminal states; the bounded-termination budget is
/// |V| * this value, counted as distinct (node, state) occupancies.
inline constexpr int kNonTerminalStates = 6;

enum class RecoveryState { pristine, retried, patched };
const char* to_string(RecoveryState s);
RecoveryState recovery_state_from_string(const std::string& s);

/// Per-node mutable lifecycle record. Budget and timeout are copies of
/// the node's effective configuration; a patch refreshes them.
struct NodeRuntime {
    NodeId node;
    NodeState state = NodeState::pending;
    int retries_used = 0;
    std::optional<std::int64_t> started_at;
    std::optional<std::int64_t> deadline;
    std::optional<std::int64_t> human_deadline;
    RecoveryState recovery_state = RecoveryState::pristine;
    bool contract_passed = false;  // stamped by the scheduler before action_success
    bool approved = false;         // a granted approval survives re-dispatch
    int retry_budget = 0;
    std::int64_t timeout_ms = 30000;
    std::int64_t human_timeout_ms = 60000;

    static NodeRuntime from_config(const NodeId& node, const NodeConfig& cfg,
                                   std::int64_t human_timeout_ms);

    bool operator==(const NodeRuntime&) const = default;
};

struct TransitionRow {
    NodeState from;
    Trigger trigger;
    NodeState to;
    std::string condition;
};

/// The complete legal-transition relation. (from, trigger) keys are unique.
const std::vector<TransitionRow>& transition_table();

/// Target state for (from, trigger), or nullopt when illegal.
std::optional<NodeState> legal_target(NodeState from, Trigger trigger);

/// Applies one trigger. Throws TerminalStateMutation for any trigger on a
/// terminal state, IllegalTransition when the (from, trigger) pair is not
/// in the table or its guard fails (retry budget, contract gate).
NodeRuntime transition(NodeRuntime rt, Trigger trigger, std::int64_t clock);

/// Deadline scan: exec_timeout for running past deadline, human_timeout
/// for waiting_human past human_deadline. Both comparisons are strict.
std::optional<Trigger> check_deadlines(const NodeRuntime& rt, std::int64_t clock);

}  // namespace sgh
