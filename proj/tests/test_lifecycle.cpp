#include "sgh/lifecycle.hpp"

#include <gtest/gtest.h>

#include "support/transition_fixture.hpp"

using namespace sgh;
using sgh::test::Arc;

namespace {

NodeRuntime runtime_in(NodeState s, int budget = 2, int retries_used = 0) {
    NodeRuntime rt;
    rt.node = "n";
    rt.state = s;
    rt.retry_budget = budget;
    rt.retries_used = retries_used;
    rt.timeout_ms = 100;
    rt.human_timeout_ms = 500;
    rt.contract_passed = true;  // satisfy the action_success gate in sweeps
    return rt;
}

}  // namespace

TEST(Terminality, MatchesTheTerminalSet) {
    EXPECT_TRUE(is_terminal(NodeState::executed));
    EXPECT_TRUE(is_terminal(NodeState::failed));
    EXPECT_TRUE(is_terminal(NodeState::cancelled));
    EXPECT_TRUE(is_terminal(NodeState::skipped));
    EXPECT_FALSE(is_terminal(NodeState::pending));
    EXPECT_FALSE(is_terminal(NodeState::ready));
    EXPECT_FALSE(is_terminal(NodeState::running));
    EXPECT_FALSE(is_terminal(NodeState::waiting_human));
    EXPECT_FALSE(is_terminal(NodeState::blocked));
    EXPECT_FALSE(is_terminal(NodeState::failed_retryable));
}

TEST(TransitionTable, BasicRows) {
    auto rt = transition(runtime_in(NodeState::pending), Trigger::deps_satisfied, 0);
    EXPECT_EQ(rt.state, NodeState::ready);

    rt = transition(rt, Trigger::dispatch, 10);
    EXPECT_EQ(rt.state, NodeState::running);
    EXPECT_EQ(*rt.started_at, 10);
    EXPECT_EQ(*rt.deadline, 110);

    rt = transition(rt, Trigger::action_success, 20);
    EXPECT_EQ(rt.state, NodeState::executed);
}

TEST(TransitionTable, RetryConsumesBudgetAndResetsTimers) {
    auto rt = runtime_in(NodeState::failed_retryable, /*budget=*/2, /*used=*/0);
    rt = transition(rt, Trigger::retry, 5);
    EXPECT_EQ(rt.state, NodeState::pending);
    EXPECT_EQ(rt.retries_used, 1);
    EXPECT_FALSE(rt.started_at.has_value());
    EXPECT_FALSE(rt.contract_passed);
}

TEST(TransitionTable, RetryWithoutBudgetIsIllegal) {
    auto rt = runtime_in(NodeState::failed_retryable, /*budget=*/1, /*used=*/1);
    EXPECT_THROW(transition(rt, Trigger::retry, 0), IllegalTransition);
}

TEST(TransitionTable, BudgetExhaustedNeedsEmptyBudget) {
    auto spare = runtime_in(NodeState::failed_retryable, 2, 0);
    EXPECT_THROW(transition(spare, Trigger::budget_exhausted, 0), IllegalTransition);

    auto spent = runtime_in(NodeState::failed_retryable, 2, 2);
    EXPECT_EQ(transition(spent, Trigger::budget_exhausted, 0).state, NodeState::failed);
}

TEST(TransitionTable, ActionSuccessGatedByContractStamp) {
    auto rt = runtime_in(NodeState::running);
    rt.contract_passed = false;
    EXPECT_THROW(transition(rt, Trigger::action_success, 0), IllegalTransition);
    rt.contract_passed = true;
    EXPECT_EQ(transition(rt, Trigger::action_success, 0).state, NodeState::executed);
}

TEST(TransitionTable, TerminalStatesAreAbsorbing) {
    for (NodeState s : {NodeState::executed, NodeState::failed, NodeState::cancelled,
                        NodeState::skipped}) {
        for (Trigger t : kAllTriggers) {
            EXPECT_THROW(transition(runtime_in(s), t, 0), TerminalStateMutation)
                << to_string(s) << " on " << to_string(t);
        }
    }
}

TEST(TransitionTable, ExactlyTheFixtureRelationIsLegal) {
    // Brute force over the full (state, trigger) cross product against the
    // hand-transcribed fixture.
    auto fixture = sgh::test::full_table_fixture();
    std::set<Arc> implemented;
    for (NodeState from : kAllStates) {
        for (Trigger t : kAllTriggers) {
            if (auto to = legal_target(from, t)) implemented.insert({from, t, *to});
        }
    }
    EXPECT_EQ(implemented, fixture);

    // Behavioral agreement: transition() succeeds exactly on fixture arcs
    // (with guards satisfied), throws everywhere else.
    for (NodeState from : kAllStates) {
        for (Trigger t : kAllTriggers) {
            NodeRuntime rt = runtime_in(from);
            if (t == Trigger::budget_exhausted) rt.retries_used = rt.retry_budget;
            bool legal = false;
            NodeState to{};
            for (const auto& [f, trig, target] : fixture) {
                if (f == from && trig == t) {
                    legal = true;
                    to = target;
                }
            }
            if (is_terminal(from)) {
                EXPECT_THROW(transition(rt, t, 0), TerminalStateMutation);
            } else if (legal) {
                EXPECT_EQ(transition(rt, t, 0).state, to)
                    << to_string(from) << " --" << to_string(t) << "--> ";
            } else {
                EXPECT_THROW(transition(rt, t, 0), IllegalTransition)
                    << to_string(from) << " --" << to_string(t) << "-->";
            }
        }
    }
}

TEST(TransitionTable, UniqueTargetsPerStateTriggerPair) {
    std::set<std::pair<NodeState, Trigger>> keys;
    for (const auto& row : transition_table()) {
        EXPECT_TRUE(keys.insert({row.from, row.trigger}).second)
            << "duplicate key " << to_string(row.from) << "/" << to_string(row.trigger);
        EXPECT_FALSE(is_terminal(row.from));
    }
}

TEST(Deadlines, ExecTimeoutIsStrict) {
    NodeRuntime rt = runtime_in(NodeState::running);
    rt.started_at = 0;
    rt.deadline = 100;
    EXPECT_FALSE(check_deadlines(rt, 99).has_value());
    EXPECT_FALSE(check_deadlines(rt, 100).has_value());  // equality does not fire
    ASSERT_TRUE(check_deadlines(rt, 101).has_value());
    EXPECT_EQ(*check_deadlines(rt, 101), Trigger::exec_timeout);
}

TEST(Deadlines, HumanTimeout) {
    NodeRuntime rt = runtime_in(NodeState::waiting_human);
    rt.human_deadline = 500;
    EXPECT_FALSE(check_deadlines(rt, 500).has_value());
    ASSERT_TRUE(check_deadlines(rt, 501).has_value());
    EXPECT_EQ(*check_deadlines(rt, 501), Trigger::human_timeout);
}

TEST(Deadlines, NothingForOtherStates) {
    NodeRuntime rt = runtime_in(NodeState::pending);
    rt.deadline = 1;
    rt.human_deadline = 1;
    EXPECT_FALSE(check_deadlines(rt, 100).has_value());
}

TEST(Deadlines, ExecTimeoutTransitionsToFailed) {
    NodeRuntime rt = runtime_in(NodeState::running);
    rt.started_at = 0;
    rt.deadline = 100;
    auto after = transition(rt, Trigger::exec_timeout, 101);
    EXPECT_EQ(after.state, NodeState::failed);
}

TEST(ApprovalFlow, RoundTripKeepsApprovalSticky) {
    auto rt = runtime_in(NodeState::running);
    rt = transition(rt, Trigger::approval_required, 10);
    EXPECT_EQ(rt.state, NodeState::waiting_human);
    EXPECT_EQ(*rt.human_deadline, 510);
    rt = transition(rt, Trigger::human_approved, 20);
    EXPECT_EQ(rt.state, NodeState::ready);
    EXPECT_TRUE(rt.approved);
    EXPECT_FALSE(rt.human_deadline.has_value());
}

TEST(AttemptBound, AtMostBudgetPlusOneAttempts) {
    // b failures and retries, then exhaustion: exactly b+1 attempts.
    const int budget = 3;
    NodeRuntime rt = runtime_in(NodeState::pending, budget);
    rt.contract_passed = false;
    int attempts = 0;
    while (true) {
        rt = transition(rt, Trigger::deps_satisfied, 0);
        rt = transition(rt, Trigger::dispatch, 0);
        attempts += 1;
        rt = transition(rt, Trigger::transient_error, 1);
        if (rt.retries_used < rt.retry_budget) {
            rt = transition(rt, Trigger::retry, 2);
        } else {
            rt = transition(rt, Trigger::budget_exhausted, 2);
            break;
        }
    }
    EXPECT_EQ(attempts, budget + 1);
    EXPECT_EQ(rt.state, NodeState::failed);
}
