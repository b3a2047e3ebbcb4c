#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sgh/clock.hpp"
#include "sgh/context.hpp"
#include "sgh/executor.hpp"
#include "sgh/persistence.hpp"
#include "sgh/recovery.hpp"
#include "sgh/state.hpp"

namespace sgh {

/// Dispatchable nodes at a state snapshot, ascending by NodeId.
struct ReadySet {
    std::vector<NodeId> members;
    int round = 0;

    bool contains(const NodeId& n) const;
};

/// The outcome space for node execution.
struct Outcome {
    enum class Kind { success, failure, retry, escalate };
    Kind kind = Kind::success;
    Json payload;        // success
    RawFailure failure;  // failure
};

/// Full recomputation of the ready set: nodes in pending/ready whose join
/// holds and whose any_of group (if any) is not already satisfied. Pure
/// function of the snapshot.
ReadySet compute_ready_set(const ExecutionState& state);

/// Same result as compute_ready_set, touching only edges incident to the
/// newly terminal nodes.
ReadySet update_ready_set_incremental(const ExecutionState& state, const ReadySet& previous,
                                      const std::set<NodeId>& newly_terminal);

/// Selects every ready member in ascending NodeId order, except that a
/// high_write any_of candidate never starts while a group sibling is
/// running or selected in the same wave. Transitions selections to
/// running.
std::vector<NodeId> dispatch(ExecutionState& state, const ReadySet& ready, std::int64_t clock,
                             Wal* wal);

/// Applies one node outcome: contract gate, lifecycle transition, any_of
/// sibling skip, join-failure propagation, doom cascade. Outcomes for
/// already-terminal nodes are recorded as late_outcome and ignored.
/// Returns the nodes that newly entered a terminal state.
std::set<NodeId> apply_outcome(ExecutionState& state, const NodeId& node, const Outcome& outcome,
                               std::int64_t clock, Wal* wal,
                               const PredicateRegistry& predicates = PredicateRegistry::builtin());

struct ApprovalDecision {
    bool approve = true;
    std::int64_t at_ms = 0;  // absolute virtual time of the response
};

struct EngineOptions {
    std::int64_t human_timeout_ms = 60000;
    int snapshot_every = 50;
    /// Highest recovery level enabled for this run.
    RecoveryAction recovery_cap = RecoveryAction::request_replan;
    bool recovery_enabled = true;
    /// Nodes at or above this side-effect level require human approval.
    std::optional<SideEffect> approval_threshold;
    /// Supplies the approval decision when a node enters waiting_human;
    /// nullopt means nobody answers and the human timeout resolves it.
    std::function<std::optional<ApprovalDecision>(const NodeId&, std::int64_t now)>
        approval_provider;
    /// Supplies a corrected configuration for a level-2 patch.
    std::function<std::optional<NodeConfig>(const NodeId&, const Diagnosis&,
                                            const ExecutionState&)>
        patch_provider;
    /// Supplies the replacement structure when a replan is requested.
    std::function<std::optional<PlanStructure>(const std::string& reason, const ExecutionState&)>
        replan_provider;
    int max_replans = 1;
};

struct RunResult {
    enum class Status { completed, replan_requested };
    Status status = Status::completed;
    ExecutionState state;
    std::string replan_reason;

    bool success = false;
    std::optional<std::string> failure_note;
    std::vector<int> round_cardinalities;  // |U| per dispatching round, all versions
    int rounds = 0;
    int dispatch_count = 0;
    int transitions_applied = 0;   // raw lifecycle transitions
    int occupancy_entries = 0;     // distinct (node, non-terminal state) entries
    int plan_versions = 1;
    std::map<std::string, int> recovery_counts;  // retry / patch / replan
    int late_outcomes = 0;
    int dep_lost_count = 0;  // the vacuous arc; stays zero
};

/// Discrete-event execution engine. Node executions overlap on the
/// simulated timeline; their outcomes come back through a single ordered
/// event queue, so state mutation is serialized and deterministic.
class Engine {
public:
    Engine(std::shared_ptr<const Plan> plan, Executor& executor, Clock& clock, Wal& wal,
           EngineOptions options = {});

    /// Runs the current plan version until all nodes are terminal or a
    /// replan is requested.
    RunResult run_version();

    /// Runs to completion, deriving new plan versions through the replan
    /// provider when the recovery layer requests one.
    RunResult run();

    const ExecutionState& state() const { return state_; }

private:
    struct Event {
        std::int64_t time;
        std::uint64_t order;
        NodeId node;
        int attempt = 0;
        bool is_approval = false;
        bool approve = true;
        AttemptResult result;
    };

    static bool event_after(const Event& a, const Event& b);
    void log_initial_commitment(const std::string& reason);
    void push_event(Event ev);
    void start_execution(const NodeId& node);
    void note_terminal(const std::set<NodeId>& newly_terminal);
    void process_event(const Event& ev);
    void fire_due_deadlines();
    void drain_events_until_now();
    std::optional<std::int64_t> next_deadline_time() const;
    bool wave_unresolved() const;
    void rejoin_or_skip(const NodeId& node);
    void recovery_pass();
    std::optional<ReplanRequest> consider_replan();
    void count_transitions();
    void enforce_transition_budget();
    bool plan_contract_satisfied(std::string* note) const;

    std::shared_ptr<const Plan> plan_;
    Executor& executor_;
    Clock& clock_;
    Wal& wal_;
    EngineOptions options_;

    ExecutionState state_;
    ContextPartition contexts_;
    ReadySet ready_;
    std::vector<Event> events_;  // min-heap by (time, order)
    std::uint64_t event_order_ = 0;
    std::map<NodeId, int> attempt_serial_;
    std::set<NodeId> in_flight_;  // dispatched, outcome not yet applied
    std::map<NodeId, ErrorKind> last_failure_;
    RunResult result_;
    std::uint64_t start_seq_ = 0;  // records before this seq belong to other runs
    int version_start_transitions_ = 0;
    std::uint64_t events_popped_ = 0;
    std::set<std::pair<NodeId, NodeState>> occupancy_;
};

/// Convenience wrapper matching the operation-level surface: constructs
/// an engine and runs the plan to completion.
RunResult run_to_completion(std::shared_ptr<const Plan> plan, Executor& executor, Clock& clock,
                            Wal& wal, EngineOptions options = {});

}  // namespace sgh
