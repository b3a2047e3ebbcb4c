#pragma once

#include <optional>
#include <string>

#include "sgh/context.hpp"
#include "sgh/persistence.hpp"
#include "sgh/state.hpp"

namespace sgh {

enum class ErrorKind { transient, contract_violation, auth_error, structural };
const char* to_string(ErrorKind k);

enum class RecoveryAction { local_retry, local_patch, request_replan };
const char* to_string(RecoveryAction a);

/// Deterministic rule-table classification of raw executor failures.
/// Unknown tags map to structural, the conservative choice.
ErrorKind classify_error(const RawFailure& failure);

struct Diagnosis {
    ErrorKind kind;
    NodeId node;
    std::string cause;
    RecoveryAction action;            // downgraded to the highest permitted level
    RecoveryAction raw_recommendation;  // before ladder downgrades
    double confidence = 1.0;

    Json to_json() const;
};

/// Highest recovery level the escalation ladder currently permits for
/// `node`: patch needs a prior retry (and at most one patch per plan
/// version); replan needs every terminally failed node to be patched.
RecoveryAction highest_permitted(const ExecutionState& state, const NodeId& node,
                                 RecoveryAction cap);

/// Rule-based diagnoser. Reads only the diagnostic context; the
/// recommendation is downgraded level by level until permitted, never
/// skipping levels. `cap` bounds the levels enabled for this run.
Diagnosis diagnose(ErrorKind kind, const NodeId& node, const ContextStore& diag,
                   const ExecutionState& state,
                   RecoveryAction cap = RecoveryAction::request_replan);

/// Level 1: re-enter pending, consuming one retry. Throws BudgetExhausted
/// when no budget remains (the caller then applies budget_exhausted).
void attempt_retry(ExecutionState& state, const NodeId& node, std::int64_t clock, Wal* wal);

/// Level 2: replace the node's configuration (never topology) and re-enter
/// pending with a fresh attempt. Requires recovery_state >= retried and at
/// most one patch per node per plan version.
void attempt_patch(ExecutionState& state, const NodeId& node, const NodeConfig& new_config,
                   std::int64_t clock, Wal* wal);

struct ReplanRequest {
    std::string reason;
};

/// Level 3: validates the escalation precondition (at least one failed
/// node, all of them patched) and returns the request for the driver.
ReplanRequest request_replan(const ExecutionState& state, const std::string& reason);

}  // namespace sgh
