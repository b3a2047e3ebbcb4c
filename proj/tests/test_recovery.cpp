#include "sgh/recovery.hpp"

#include <gtest/gtest.h>

#include <random>

#include "support/fixtures.hpp"

using namespace sgh;
using sgh::test::basic_config;
using sgh::test::chain;

namespace {

ExecutionState make_state(PlanStructure s, const std::string& id = "p") {
    return ExecutionState::fresh(
        std::make_shared<Plan>(Plan::from_structure(id, 1, std::move(s))), 60000);
}

// Drives a node into failed_retryable through legal transitions.
void fail_retryable(ExecutionState& state, const NodeId& n) {
    auto& rt = state.runtime(n);
    rt = transition(rt, Trigger::deps_satisfied, 0);
    rt = transition(rt, Trigger::dispatch, 0);
    rt = transition(rt, Trigger::transient_error, 1);
}

void fail_terminal(ExecutionState& state, const NodeId& n) {
    auto& rt = state.runtime(n);
    rt = transition(rt, Trigger::deps_satisfied, 0);
    rt = transition(rt, Trigger::dispatch, 0);
    rt = transition(rt, Trigger::structural_error, 1);
}

ContextStore diag_store() {
    ContextStore d(ContextScope::diag);
    d.put("failure_history", Json::array());
    return d;
}

}  // namespace

TEST(Classify, RuleTable) {
    EXPECT_EQ(classify_error({"network", ""}), ErrorKind::transient);
    EXPECT_EQ(classify_error({"timeout", ""}), ErrorKind::transient);
    EXPECT_EQ(classify_error({"rate_limit", ""}), ErrorKind::transient);
    EXPECT_EQ(classify_error({"transient", ""}), ErrorKind::transient);
    EXPECT_EQ(classify_error({"contract", "field missing"}), ErrorKind::contract_violation);
    EXPECT_EQ(classify_error({"contract_violation", ""}), ErrorKind::contract_violation);
    EXPECT_EQ(classify_error({"auth", ""}), ErrorKind::auth_error);
    EXPECT_EQ(classify_error({"auth_expired", ""}), ErrorKind::auth_error);
    EXPECT_EQ(classify_error({"structural", ""}), ErrorKind::structural);
    EXPECT_EQ(classify_error({"missing_dependency", ""}), ErrorKind::structural);
}

TEST(Classify, UnknownFallsThroughToStructural) {
    EXPECT_EQ(classify_error({"weird-new-failure-mode", ""}), ErrorKind::structural);
    EXPECT_EQ(classify_error({"", ""}), ErrorKind::structural);
}

TEST(Diagnose, TransientOnPristineIsRetry) {
    auto state = make_state(chain({"a", "b"}));
    fail_retryable(state, "a");
    auto diag = diagnose(ErrorKind::transient, "a", diag_store(), state);
    EXPECT_EQ(diag.action, RecoveryAction::local_retry);
    EXPECT_EQ(diag.raw_recommendation, RecoveryAction::local_retry);
    EXPECT_DOUBLE_EQ(diag.confidence, 1.0);
}

TEST(Diagnose, StructuralOnPristineDowngradesToRetry) {
    auto state = make_state(chain({"a", "b"}));
    fail_retryable(state, "a");
    auto diag = diagnose(ErrorKind::structural, "a", diag_store(), state);
    EXPECT_EQ(diag.raw_recommendation, RecoveryAction::request_replan);
    EXPECT_EQ(diag.action, RecoveryAction::local_retry);  // cannot skip levels
    EXPECT_DOUBLE_EQ(diag.confidence, 0.6);
}

TEST(Diagnose, ContractViolationOnRetriedIsPatch) {
    auto state = make_state(chain({"a", "b"}));
    fail_retryable(state, "a");
    state.runtime("a").recovery_state = RecoveryState::retried;
    auto diag = diagnose(ErrorKind::contract_violation, "a", diag_store(), state);
    EXPECT_EQ(diag.action, RecoveryAction::local_patch);
    EXPECT_DOUBLE_EQ(diag.confidence, 0.8);
}

TEST(Diagnose, GroupCapBoundsTheLevel) {
    auto state = make_state(chain({"a", "b"}));
    fail_retryable(state, "a");
    state.runtime("a").recovery_state = RecoveryState::retried;
    auto diag = diagnose(ErrorKind::contract_violation, "a", diag_store(), state,
                         RecoveryAction::local_retry);
    EXPECT_EQ(diag.action, RecoveryAction::local_retry);
}

TEST(Diagnose, ReadsOnlyDiagContext) {
    auto state = make_state(chain({"a"}));
    fail_retryable(state, "a");
    ContextStore exec(ContextScope::exec);
    exec.put("inputs", 1);
    auto d = diag_store();
    diagnose(ErrorKind::transient, "a", d, state);
    EXPECT_EQ(exec.read_count(), 0u);
    EXPECT_GT(d.read_count(), 0u);

    // The guard itself: a diagnoser principal touching exec context throws.
    PrincipalScope as_diagnoser(Principal::diagnoser);
    EXPECT_THROW(exec.get("inputs"), ContextViolation);
}

TEST(Retry, PristineBecomesRetriedAndPending) {
    auto state = make_state(chain({"a", "b"}));
    fail_retryable(state, "a");
    attempt_retry(state, "a", 10, nullptr);
    EXPECT_EQ(state.runtime("a").state, NodeState::pending);
    EXPECT_EQ(state.runtime("a").recovery_state, RecoveryState::retried);
    EXPECT_EQ(state.runtime("a").retries_used, 1);
}

TEST(Retry, ZeroBudgetThrowsBudgetExhausted) {
    PlanStructure s = chain({"a"});
    s.config["a"].retry_budget = 0;
    auto state = make_state(std::move(s));
    fail_retryable(state, "a");
    EXPECT_THROW(attempt_retry(state, "a", 0, nullptr), BudgetExhausted);
}

TEST(Retry, BudgetTwoAllowsExactlyThreeAttempts) {
    PlanStructure s = chain({"a"});
    s.config["a"].retry_budget = 2;
    auto state = make_state(std::move(s));

    int attempts = 0;
    fail_retryable(state, "a");  // attempt 1 failed
    attempts = 1;
    while (true) {
        try {
            attempt_retry(state, "a", 0, nullptr);
        } catch (const BudgetExhausted&) {
            auto& rt = state.runtime("a");
            rt = transition(rt, Trigger::budget_exhausted, 0);
            break;
        }
        auto& rt = state.runtime("a");
        rt = transition(rt, Trigger::deps_satisfied, 0);
        rt = transition(rt, Trigger::dispatch, 0);
        rt = transition(rt, Trigger::transient_error, 1);
        attempts += 1;
    }
    EXPECT_EQ(attempts, 3);  // initial + two retries
    EXPECT_EQ(state.runtime("a").state, NodeState::failed);
    EXPECT_EQ(state.runtime("a").recovery_state, RecoveryState::retried);
}

TEST(Patch, PristineNodeRejected) {
    auto state = make_state(chain({"a", "b"}));
    fail_retryable(state, "a");
    NodeConfig cfg = state.effective_config("a");
    cfg.retry_budget += 1;
    EXPECT_THROW(attempt_patch(state, "a", cfg, 0, nullptr), EscalationOrderViolation);
}

TEST(Patch, RetriedNodeAccepted) {
    auto state = make_state(chain({"a", "b"}));
    fail_retryable(state, "a");
    attempt_retry(state, "a", 0, nullptr);
    // fails again
    auto& rt = state.runtime("a");
    rt = transition(rt, Trigger::deps_satisfied, 0);
    rt = transition(rt, Trigger::dispatch, 0);
    rt = transition(rt, Trigger::transient_error, 1);

    NodeConfig cfg = state.effective_config("a");
    cfg.retry_budget += 1;
    cfg.timeout_ms = 2222;
    attempt_patch(state, "a", cfg, 5, nullptr);

    EXPECT_EQ(state.runtime("a").state, NodeState::pending);
    EXPECT_EQ(state.runtime("a").recovery_state, RecoveryState::patched);
    EXPECT_EQ(state.effective_config("a").timeout_ms, 2222);
    EXPECT_EQ(state.plan->config("a").timeout_ms, 1000);  // plan value untouched
}

TEST(Patch, TopologyChangeRejected) {
    auto state = make_state(chain({"a", "b"}));
    fail_retryable(state, "a");
    state.runtime("a").recovery_state = RecoveryState::retried;

    NodeConfig cfg = state.effective_config("a");
    cfg.any_of_group = "sneaky";
    cfg.retry_budget += 1;
    EXPECT_THROW(attempt_patch(state, "a", cfg, 0, nullptr), TopologyChangeAttempted);

    cfg = state.effective_config("a");
    cfg.join = JoinMode::any_of;
    cfg.retry_budget += 1;
    EXPECT_THROW(attempt_patch(state, "a", cfg, 0, nullptr), TopologyChangeAttempted);
}

TEST(Patch, OnePatchPerPlanVersion) {
    auto state = make_state(chain({"a", "b"}));
    fail_retryable(state, "a");
    state.runtime("a").recovery_state = RecoveryState::retried;
    NodeConfig cfg = state.effective_config("a");
    cfg.retry_budget += 1;
    attempt_patch(state, "a", cfg, 0, nullptr);

    fail_retryable(state, "a");  // pending -> ... -> failed_retryable again
    cfg.retry_budget += 1;
    EXPECT_THROW(attempt_patch(state, "a", cfg, 0, nullptr), EscalationOrderViolation);
}

TEST(Replan, NoFailedNodesRejected) {
    auto state = make_state(chain({"a", "b"}));
    EXPECT_THROW(request_replan(state, "nothing wrong"), EscalationOrderViolation);
}

TEST(Replan, UnpatchedFailedNodeBlocks) {
    auto state = make_state(chain({"a", "b"}));
    fail_terminal(state, "a");  // failed while pristine
    EXPECT_THROW(request_replan(state, "locked"), EscalationOrderViolation);
}

TEST(Replan, AllFailedPatchedAccepted) {
    auto state = make_state(chain({"a", "b"}));
    fail_terminal(state, "a");
    state.runtime("a").recovery_state = RecoveryState::patched;
    auto req = request_replan(state, "exhausted local options");
    EXPECT_EQ(req.reason, "exhausted local options");
}

TEST(Escalation, FuzzNoViolationEscapesTheApi) {
    // Random action sequences against random node states; the API must
    // reject every out-of-order call and recovery_state must only move
    // forward.
    std::mt19937_64 rng(2024);
    for (int round = 0; round < 500; ++round) {
        auto state = make_state(chain({"a", "b", "c"}));
        std::map<NodeId, std::vector<std::string>> applied;
        for (int step = 0; step < 12; ++step) {
            NodeId n = std::vector<NodeId>{"a", "b", "c"}[rng() % 3];
            auto& rt = state.runtime(n);
            RecoveryState before = rt.recovery_state;
            int op = static_cast<int>(rng() % 4);
            try {
                switch (op) {
                    case 0:
                        if (rt.state == NodeState::pending) fail_retryable(state, n);
                        break;
                    case 1:
                        attempt_retry(state, n, step, nullptr);
                        applied[n].push_back("retry");
                        break;
                    case 2: {
                        NodeConfig cfg = state.effective_config(n);
                        cfg.retry_budget = rt.retries_used + 1;
                        attempt_patch(state, n, cfg, step, nullptr);
                        applied[n].push_back("patch");
                        break;
                    }
                    case 3:
                        request_replan(state, "fuzz");
                        applied[n].push_back("replan");
                        break;
                }
            } catch (const EscalationOrderViolation&) {
            } catch (const BudgetExhausted&) {
            } catch (const TerminalStateMutation&) {
            } catch (const IllegalTransition&) {
            }
            EXPECT_GE(rt.recovery_state, before) << "recovery state moved backwards";
        }
        // A patch may only appear after a retry on the same node.
        for (const auto& [n, actions] : applied) {
            bool seen_retry = false;
            for (const auto& a : actions) {
                if (a == "retry") seen_retry = true;
                if (a == "patch") EXPECT_TRUE(seen_retry) << "patch before retry on " << n;
            }
        }
    }
}
