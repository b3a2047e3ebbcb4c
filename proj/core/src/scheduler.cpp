#include "sgh/scheduler.hpp"

#include <algorithm>

namespace sgh {

// -- ExecutionState -----------------------------------------------------------

ExecutionState ExecutionState::fresh(std::shared_ptr<const Plan> plan,
                                     std::int64_t human_timeout_ms) {
    ExecutionState s;
    s.plan = std::move(plan);
    for (const auto& n : s.plan->nodes())
        s.runtimes[n] = NodeRuntime::from_config(n, s.plan->config(n), human_timeout_ms);
    return s;
}

const NodeConfig& ExecutionState::effective_config(const NodeId& node) const {
    auto it = config_overrides.find(node);
    if (it != config_overrides.end()) return it->second;
    return plan->config(node);
}

const NodeRuntime& ExecutionState::runtime(const NodeId& node) const {
    auto it = runtimes.find(node);
    if (it == runtimes.end()) throw Error("no runtime for node '" + node + "'");
    return it->second;
}

NodeRuntime& ExecutionState::runtime(const NodeId& node) {
    auto it = runtimes.find(node);
    if (it == runtimes.end()) throw Error("no runtime for node '" + node + "'");
    return it->second;
}

bool ExecutionState::all_terminal() const {
    for (const auto& [_, rt] : runtimes)
        if (!is_terminal(rt.state)) return false;
    return true;
}

bool ExecutionState::group_satisfied(const std::string& group) const {
    auto it = plan->any_of_groups().find(group);
    if (it == plan->any_of_groups().end()) return false;
    for (const auto& m : it->second)
        if (runtime(m).state == NodeState::executed) return true;
    return false;
}

bool ExecutionState::predecessor_satisfied(const NodeId& pred) const {
    const NodeRuntime& rt = runtime(pred);
    if (rt.state == NodeState::executed) return true;
    if (rt.state == NodeState::skipped) {
        auto g = plan->group_of(pred);
        return g && group_satisfied(*g);
    }
    return false;
}

bool ExecutionState::join_holds(const NodeId& node) const {
    const auto& preds = plan->predecessors(node);
    if (plan->config(node).join == JoinMode::any_of) {
        for (const auto& p : preds)
            if (runtime(p).state == NodeState::executed) return true;
        return false;
    }
    for (const auto& p : preds)
        if (!predecessor_satisfied(p)) return false;
    return true;
}

bool ExecutionState::join_doomed(const NodeId& node) const {
    const auto& preds = plan->predecessors(node);
    if (plan->config(node).join == JoinMode::any_of) {
        bool all_dead = !preds.empty();
        for (const auto& p : preds) {
            NodeState s = runtime(p).state;
            if (s != NodeState::failed && s != NodeState::cancelled) {
                all_dead = false;
                break;
            }
        }
        return all_dead;
    }
    for (const auto& p : preds) {
        NodeState s = runtime(p).state;
        if (s == NodeState::failed || s == NodeState::cancelled) return true;
        // A skipped predecessor outside a satisfied group can never satisfy
        // an all_of join again.
        if (s == NodeState::skipped && !predecessor_satisfied(p)) return true;
    }
    return false;
}

// -- ready set ----------------------------------------------------------------

bool ReadySet::contains(const NodeId& n) const {
    return std::binary_search(members.begin(), members.end(), n);
}

namespace {

bool eligible(const ExecutionState& state, const NodeId& node) {
    const NodeRuntime& rt = state.runtime(node);
    if (rt.state != NodeState::pending && rt.state != NodeState::ready) return false;
    if (!state.join_holds(node)) return false;
    // A candidate whose group is already satisfied is owed a skip, not a
    // dispatch.
    auto g = state.plan->group_of(node);
    if (g && state.group_satisfied(*g)) return false;
    return true;
}

}  // namespace

ReadySet compute_ready_set(const ExecutionState& state) {
    ReadySet rs;
    rs.round = state.round;
    for (const auto& n : state.plan->nodes())
        if (eligible(state, n)) rs.members.push_back(n);
    return rs;  // plan nodes are stored sorted ascending
}

ReadySet update_ready_set_incremental(const ExecutionState& state, const ReadySet& previous,
                                      const std::set<NodeId>& newly_terminal) {
    if (newly_terminal.empty()) {
        ReadySet rs = previous;
        rs.round = state.round;
        return rs;
    }

    std::set<NodeId> members(previous.members.begin(), previous.members.end());
    for (const auto& t : newly_terminal) members.erase(t);

    // Candidates that may have changed eligibility: successors of the
    // newly terminal nodes, plus - when a terminal node belongs to an
    // any_of group - its siblings and the group's join successors.
    std::set<NodeId> affected;
    for (const auto& t : newly_terminal) {
        for (const auto& s : state.plan->successors(t)) affected.insert(s);
        auto g = state.plan->group_of(t);
        if (g) {
            auto it = state.plan->any_of_groups().find(*g);
            if (it != state.plan->any_of_groups().end()) {
                for (const auto& sib : it->second) {
                    affected.insert(sib);
                    for (const auto& s : state.plan->successors(sib)) affected.insert(s);
                }
            }
        }
    }
    for (const auto& n : affected) {
        if (eligible(state, n))
            members.insert(n);
        else
            members.erase(n);
    }

    ReadySet rs;
    rs.round = state.round;
    rs.members.assign(members.begin(), members.end());
    return rs;
}

// -- dispatch -----------------------------------------------------------------

std::vector<NodeId> dispatch(ExecutionState& state, const ReadySet& ready, std::int64_t clock,
                             Wal* wal) {
    std::vector<NodeId> selected;
    std::set<std::string> groups_selected;

    for (const auto& n : ready.members) {
        const NodeConfig& cfg = state.effective_config(n);
        if (cfg.side_effect == SideEffect::high_write && cfg.any_of_group) {
            bool sibling_busy = groups_selected.count(*cfg.any_of_group) > 0;
            if (!sibling_busy) {
                for (const auto& sib : state.plan->any_of_groups().at(*cfg.any_of_group)) {
                    if (sib != n && state.runtime(sib).state == NodeState::running) {
                        sibling_busy = true;
                        break;
                    }
                }
            }
            if (sibling_busy) continue;  // waits; non-speculative execution
        }

        if (!state.join_holds(n)) continue;  // re-checked at dispatch time
        if (state.runtime(n).state == NodeState::pending)
            logged_transition(state, n, Trigger::deps_satisfied, clock, wal);
        logged_transition(state, n, Trigger::dispatch, clock, wal);
        if (wal) {
            wal->append(RecordKind::dispatch, clock, state.plan->id(), state.plan->version(),
                        Json{{"node", n}});
        }
        if (cfg.any_of_group) groups_selected.insert(*cfg.any_of_group);
        selected.push_back(n);
    }
    return selected;
}

// -- terminal propagation -----------------------------------------------------

namespace {

// Sibling skip and join-failure propagation from a batch of fresh
// terminal nodes. Returns every node that is newly terminal, seeds
// included.
std::set<NodeId> propagate_terminal(ExecutionState& state, std::set<NodeId> worklist,
                                    std::int64_t clock, Wal* wal) {
    std::set<NodeId> all_new(worklist.begin(), worklist.end());
    while (!worklist.empty()) {
        NodeId n = *worklist.begin();
        worklist.erase(worklist.begin());
        NodeState s = state.runtime(n).state;

        if (s == NodeState::executed) {
            if (auto g = state.plan->group_of(n)) {
                for (const auto& sib : state.plan->any_of_groups().at(*g)) {
                    if (sib == n) continue;
                    NodeState ss = state.runtime(sib).state;
                    if (ss == NodeState::pending || ss == NodeState::ready ||
                        ss == NodeState::running || ss == NodeState::failed_retryable) {
                        logged_transition(state, sib, Trigger::sibling_completed, clock, wal);
                        all_new.insert(sib);
                        worklist.insert(sib);
                    }
                }
            }
        }

        // Dead joins downstream of any terminal event.
        for (const auto& succ : state.plan->successors(n)) {
            if (state.runtime(succ).state != NodeState::pending) continue;
            if (state.join_doomed(succ)) {
                logged_transition(state, succ, Trigger::structural_error, clock, wal);
                all_new.insert(succ);
                worklist.insert(succ);
            }
        }
    }
    return all_new;
}

}  // namespace

// -- apply_outcome ------------------------------------------------------------

std::set<NodeId> apply_outcome(ExecutionState& state, const NodeId& node, const Outcome& outcome,
                               std::int64_t clock, Wal* wal,
                               const PredicateRegistry& predicates) {
    NodeRuntime& rt = state.runtime(node);
    const std::string& plan_id = state.plan->id();
    int version = state.plan->version();

    if (is_terminal(rt.state)) {
        // Race between completion and sibling skip: the skip is
        // authoritative, the outcome is recorded and otherwise ignored.
        if (wal) {
            wal->append(RecordKind::late_outcome, clock, plan_id, version,
                        Json{{"node", node},
                             {"kind", outcome.kind == Outcome::Kind::success ? "success" : "failure"},
                             {"state", to_string(rt.state)}});
        }
        return {};
    }

    std::set<NodeId> newly;

    if (outcome.kind == Outcome::Kind::success) {
        const OutputContract& contract = state.effective_config(node).contract;
        auto results = validate_contract(outcome.payload, contract, predicates);
        bool passed = all_pass(results);
        if (wal) {
            Json rules = Json::array();
            for (const auto& r : results)
                rules.push_back({{"rule", r.rule}, {"pass", r.pass}, {"message", r.message}});
            wal->append(RecordKind::contract_report, clock, plan_id, version,
                        Json{{"node", node},
                             {"passed", passed},
                             {"method", to_string(contract.method)},
                             {"results", rules}});
        }

        if (passed) {
            rt.contract_passed = true;
            NodeOutput output;
            output.payload = outcome.payload;
            output.produced_at = clock;
            output.validation = results;
            output.validation_method = contract.method;
            if (wal) {
                Json rules = Json::array();
                for (const auto& r : results)
                    rules.push_back({{"rule", r.rule}, {"pass", r.pass}, {"message", r.message}});
                wal->append(RecordKind::outcome, clock, plan_id, version,
                            Json{{"node", node},
                                 {"kind", "success"},
                                 {"contract_passed", true},
                                 {"output",
                                  Json{{"payload", output.payload},
                                       {"produced_at", output.produced_at},
                                       {"validation", rules},
                                       {"method", to_string(output.validation_method)}}}});
            }
            logged_transition(state, node, Trigger::action_success, clock, wal);
            state.outputs[node] = std::move(output);
            newly =
                propagate_terminal(state, std::set<NodeId>{node}, clock, wal);
            return newly;
        }

        // Output produced but the contract gate rejected it: classified a
        // contract violation, the node stays retryable.
        if (wal) {
            wal->append(RecordKind::outcome, clock, plan_id, version,
                        Json{{"node", node}, {"kind", "success"}, {"contract_passed", false}});
        }
        logged_transition(state, node, Trigger::transient_error, clock, wal);
        return {};
    }

    ErrorKind kind = classify_error(outcome.failure);
    if (wal) {
        wal->append(RecordKind::outcome, clock, plan_id, version,
                    Json{{"node", node},
                         {"kind", "failure"},
                         {"error_kind", to_string(kind)},
                         {"tag", outcome.failure.tag},
                         {"detail", outcome.failure.detail}});
    }
    Trigger trigger = kind == ErrorKind::structural ? Trigger::structural_error
                                                    : Trigger::transient_error;
    NodeState target = logged_transition(state, node, trigger, clock, wal);
    if (is_terminal(target))
        newly = propagate_terminal(state, std::set<NodeId>{node}, clock, wal);
    return newly;
}

// -- Engine -------------------------------------------------------------------

bool Engine::event_after(const Event& a, const Event& b) {
    return std::tie(a.time, a.order) > std::tie(b.time, b.order);
}

void Engine::push_event(Event ev) {
    events_.push_back(std::move(ev));
    std::push_heap(events_.begin(), events_.end(), event_after);
}

Engine::Engine(std::shared_ptr<const Plan> plan, Executor& executor, Clock& clock, Wal& wal,
               EngineOptions options)
    : plan_(std::move(plan)), executor_(executor), clock_(clock), wal_(wal),
      options_(std::move(options)) {
    wal_.set_snapshot_every(options_.snapshot_every);
    start_seq_ = wal_.last_seq();
    state_ = ExecutionState::fresh(plan_, options_.human_timeout_ms);
    contexts_.exec.put("plan_id", plan_->id());
    contexts_.diag.put("failure_history", Json::array());
    log_initial_commitment("initial_commitment");
    ready_ = compute_ready_set(state_);
}

void Engine::log_initial_commitment(const std::string& reason) {
    wal_.append(RecordKind::replan, clock_.now_ms(), plan_->id(), plan_->version(),
                Json{{"old_version", plan_->version() - 1},
                     {"new_version", plan_->version()},
                     {"reason", reason},
                     {"human_timeout_ms", options_.human_timeout_ms},
                     {"plan", plan_to_json(*plan_)}});
    version_start_transitions_ = wal_.count(RecordKind::transition);
}

void Engine::start_execution(const NodeId& node) {
    const NodeConfig& cfg = state_.effective_config(node);
    NodeRuntime& rt = state_.runtime(node);

    // Approval gate before the action itself runs.
    bool needs_approval = options_.approval_threshold &&
                          cfg.side_effect >= *options_.approval_threshold && !rt.approved;
    if (needs_approval) {
        logged_transition(state_, node, Trigger::approval_required, clock_.now_ms(), &wal_);
        if (options_.approval_provider) {
            if (auto decision = options_.approval_provider(node, clock_.now_ms())) {
                Event ev;
                ev.time = std::max(decision->at_ms, clock_.now_ms());
                ev.order = event_order_++;
                ev.node = node;
                ev.is_approval = true;
                ev.approve = decision->approve;
                push_event(std::move(ev));
            }
        }
        return;
    }

    Json inputs = Json::object();
    for (const auto& p : plan_->predecessors(node)) {
        auto it = state_.outputs.find(p);
        if (it != state_.outputs.end()) inputs[p] = it->second.payload;
    }

    PendingExecution pending = executor_.start(node, cfg, contexts_.exec, inputs, clock_.now_ms());
    attempt_serial_[node] += 1;
    if (pending.completes_at) {
        Event ev;
        ev.time = *pending.completes_at;
        ev.order = event_order_++;
        ev.node = node;
        ev.attempt = attempt_serial_[node];
        ev.result = std::move(pending.result);
        push_event(std::move(ev));
    }
    // A hang leaves no completion event; the node's deadline resolves it.
}

void Engine::note_terminal(const std::set<NodeId>& newly_terminal) {
    if (newly_terminal.empty()) return;
    ready_ = update_ready_set_incremental(state_, ready_, newly_terminal);
    wal_.note_terminal_events(static_cast<int>(newly_terminal.size()), state_);
}

void Engine::rejoin_or_skip(const NodeId& node) {
    // A node back in pending/ready whose group was satisfied in the
    // meantime is owed a skip; otherwise it rejoins the ready set.
    auto g = state_.plan->group_of(node);
    if (g && state_.group_satisfied(*g)) {
        logged_transition(state_, node, Trigger::sibling_completed, clock_.now_ms(), &wal_);
        note_terminal({node});
        return;
    }
    if (state_.join_holds(node) && !ready_.contains(node)) {
        ready_.members.insert(
            std::upper_bound(ready_.members.begin(), ready_.members.end(), node), node);
    }
}

void Engine::process_event(const Event& ev) {
    if (ev.is_approval) {
        NodeRuntime& rt = state_.runtime(ev.node);
        if (rt.state != NodeState::waiting_human) return;  // already cancelled/timed out
        if (ev.approve) {
            logged_transition(state_, ev.node, Trigger::human_approved, clock_.now_ms(), &wal_);
            rejoin_or_skip(ev.node);
        } else {
            logged_transition(state_, ev.node, Trigger::human_cancelled, clock_.now_ms(), &wal_);
            auto newly = propagate_terminal(state_, {ev.node}, clock_.now_ms(), &wal_);
            note_terminal(newly);
        }
        return;
    }

    const NodeRuntime& rt = state_.runtime(ev.node);
    bool stale = ev.attempt != attempt_serial_[ev.node] || rt.state != NodeState::running;
    if (stale) {
        if (is_terminal(rt.state)) {
            wal_.append(RecordKind::late_outcome, clock_.now_ms(), plan_->id(), plan_->version(),
                        Json{{"node", ev.node},
                             {"kind", ev.result.kind == AttemptResult::Kind::output ? "success"
                                                                                    : "failure"},
                             {"state", to_string(rt.state)}});
            result_.late_outcomes += 1;
        }
        return;
    }

    Outcome outcome;
    if (ev.result.kind == AttemptResult::Kind::output) {
        outcome.kind = Outcome::Kind::success;
        outcome.payload = ev.result.payload;
    } else {
        outcome.kind = Outcome::Kind::failure;
        outcome.failure = ev.result.failure;
    }
    auto newly = apply_outcome(state_, ev.node, outcome, clock_.now_ms(), &wal_);

    NodeState after = state_.runtime(ev.node).state;
    if (after == NodeState::failed_retryable || after == NodeState::failed) {
        last_failure_[ev.node] = outcome.kind == Outcome::Kind::success
                                     ? ErrorKind::contract_violation
                                     : classify_error(outcome.failure);
        Json history = contexts_.diag.get("failure_history");
        history.push_back(Json{{"node", ev.node},
                               {"kind", to_string(last_failure_[ev.node])},
                               {"clock", clock_.now_ms()}});
        contexts_.diag.put("failure_history", std::move(history));
    }
    note_terminal(newly);
}

std::optional<std::int64_t> Engine::next_deadline_time() const {
    std::optional<std::int64_t> next;
    for (const auto& [_, rt] : state_.runtimes) {
        std::optional<std::int64_t> d;
        if (rt.state == NodeState::running && rt.deadline) d = *rt.deadline + 1;
        if (rt.state == NodeState::waiting_human && rt.human_deadline)
            d = *rt.human_deadline + 1;
        if (d && (!next || *d < *next)) next = d;
    }
    return next;
}

void Engine::fire_due_deadlines() {
    std::int64_t now = clock_.now_ms();
    for (const auto& n : plan_->nodes()) {
        auto trig = check_deadlines(state_.runtime(n), now);
        if (!trig) continue;
        logged_transition(state_, n, *trig, now, &wal_);
        if (*trig == Trigger::exec_timeout) last_failure_[n] = ErrorKind::transient;
        auto newly = propagate_terminal(state_, {n}, now, &wal_);
        note_terminal(newly);
    }
}

bool Engine::wave_unresolved() const {
    for (const auto& [_, rt] : state_.runtimes)
        if (rt.state == NodeState::running) return true;
    return false;
}

void Engine::recovery_pass() {
    // Deterministic ascending pass over nodes that failed in this wave.
    for (const auto& n : plan_->nodes()) {
        if (state_.runtime(n).state != NodeState::failed_retryable) continue;

        ErrorKind kind = last_failure_.count(n) ? last_failure_[n] : ErrorKind::transient;
        RecoveryAction cap = options_.recovery_cap == RecoveryAction::request_replan
                                 ? RecoveryAction::local_patch
                                 : options_.recovery_cap;
        Diagnosis diag = diagnose(kind, n, contexts_.diag, state_, cap);
        std::string applied = "none";

        try {
            if (diag.action == RecoveryAction::local_patch && options_.patch_provider) {
                if (auto cfg = options_.patch_provider(n, diag, state_)) {
                    attempt_patch(state_, n, *cfg, clock_.now_ms(), &wal_);
                    applied = "patch";
                }
            }
            if (applied == "none") {
                attempt_retry(state_, n, clock_.now_ms(), &wal_);
                applied = "retry";
            }
        } catch (const BudgetExhausted&) {
            logged_transition(state_, n, Trigger::budget_exhausted, clock_.now_ms(), &wal_);
            auto newly = propagate_terminal(state_, {n}, clock_.now_ms(), &wal_);
            note_terminal(newly);
            applied = "exhausted";
        }

        wal_.append(RecordKind::recovery_action, clock_.now_ms(), plan_->id(), plan_->version(),
                    Json{{"node", n},
                         {"diagnosis", diag.to_json()},
                         {"applied", applied}});

        if (applied == "retry" || applied == "patch") rejoin_or_skip(n);
    }
}

std::optional<ReplanRequest> Engine::consider_replan() {
    if (options_.recovery_cap != RecoveryAction::request_replan) return std::nullopt;
    bool any_failed = false;
    for (const auto& [n, rt] : state_.runtimes) {
        if (rt.state == NodeState::failed) any_failed = true;
    }
    if (!any_failed) return std::nullopt;
    try {
        auto req = request_replan(state_, "failed nodes exhausted local recovery");
        wal_.append(RecordKind::recovery_action, clock_.now_ms(), plan_->id(), plan_->version(),
                    Json{{"applied", "replan_requested"}, {"reason", req.reason}});
        return req;
    } catch (const EscalationOrderViolation&) {
        // Some failed node never reached patched; level 3 stays locked.
        return std::nullopt;
    }
}

void Engine::enforce_transition_budget() {
    // Generous hard cap derived from attempt bounds; a correct engine
    // cannot hit it, a runaway loop will.
    long cap = 0;
    for (const auto& n : plan_->nodes())
        cap += 5L * (state_.effective_config(n).retry_budget + 2) + 15;
    long applied = wal_.count(RecordKind::transition) - version_start_transitions_;
    if (applied > cap)
        throw TransitionBudgetExceeded(std::to_string(applied) + " transitions against cap " +
                                       std::to_string(cap));
}

bool Engine::plan_contract_satisfied(std::string* note) const {
    auto exits = plan_->exit_nodes();
    if (exits.size() == 1) {
        const NodeId& e = exits.front();
        if (state_.runtime(e).state != NodeState::executed) {
            *note = "exit node '" + e + "' ended " + to_string(state_.runtime(e).state);
            return false;
        }
        auto it = state_.outputs.find(e);
        auto results = validate_contract(it->second.payload, plan_->plan_contract());
        if (!all_pass(results)) {
            *note = "plan contract rejected the exit output";
            return false;
        }
        return true;
    }
    // Multi-exit plan-contract semantics are deliberately not defined;
    // success means every exit ended in terminal success.
    for (const auto& e : exits) {
        if (!state_.predecessor_satisfied(e)) {
            *note = "exit node '" + e + "' ended " + to_string(state_.runtime(e).state);
            return false;
        }
    }
    *note = "plan contract unchecked: multiple exit nodes";
    return true;
}

void Engine::drain_events_until_now() {
    while (!events_.empty() && events_.front().time <= clock_.now_ms()) {
        std::pop_heap(events_.begin(), events_.end(), event_after);
        Event ev = std::move(events_.back());
        events_.pop_back();
        events_popped_ += 1;
        process_event(ev);
    }
}

RunResult Engine::run_version() {
    while (!state_.all_terminal()) {
        int transitions_before = wal_.count(RecordKind::transition);
        std::uint64_t popped_before = events_popped_;

        if (!ready_.members.empty()) {
            state_.round += 1;
            ready_.round = state_.round;
            wal_.append(RecordKind::round_boundary, clock_.now_ms(), plan_->id(),
                        plan_->version(),
                        Json{{"round", state_.round},
                             {"members", ready_.members},
                             {"cardinality", ready_.members.size()}});
            result_.round_cardinalities.push_back(static_cast<int>(ready_.members.size()));

            auto selected = dispatch(state_, ready_, clock_.now_ms(), &wal_);
            if (selected.empty())
                throw ProgressViolation("non-empty ready set produced an empty dispatch wave");
            // Dispatched (including approval-parked) nodes leave the set.
            std::vector<NodeId> rest;
            for (const auto& m : ready_.members)
                if (!std::binary_search(selected.begin(), selected.end(), m)) rest.push_back(m);
            ready_.members = std::move(rest);

            for (const auto& n : selected) start_execution(n);

            // Collect the whole wave before the next scheduling decision.
            while (wave_unresolved()) {
                std::optional<std::int64_t> next_time;
                if (!events_.empty()) next_time = events_.front().time;
                if (auto d = next_deadline_time(); d && (!next_time || *d < *next_time))
                    next_time = d;
                if (!next_time)
                    throw ProgressViolation("running nodes with no pending event or deadline");
                clock_.advance_to(*next_time);
                drain_events_until_now();
                fire_due_deadlines();
            }

            recovery_pass();
            if (auto req = consider_replan()) {
                result_.status = RunResult::Status::replan_requested;
                result_.replan_reason = req->reason;
                break;
            }
        } else {
            // Nothing dispatchable: resolve parked approvals or their
            // timeouts before the next scheduling decision.
            std::optional<std::int64_t> next_time;
            if (!events_.empty()) next_time = events_.front().time;
            if (auto d = next_deadline_time(); d && (!next_time || *d < *next_time))
                next_time = d;
            if (!next_time)
                throw ProgressViolation("non-terminal nodes with nothing to wait for");
            clock_.advance_to(*next_time);
            drain_events_until_now();
            fire_due_deadlines();
        }

        enforce_transition_budget();
        bool progressed = wal_.count(RecordKind::transition) != transitions_before ||
                          events_popped_ != popped_before;
        if (!progressed)
            throw ProgressViolation("scheduler iteration applied no transition");
    }

    count_transitions();
    if (result_.status != RunResult::Status::replan_requested) {
        std::string note;
        result_.success = plan_contract_satisfied(&note);
        if (!note.empty()) result_.failure_note = note;
    }
    result_.state = state_;
    return result_;
}

void Engine::count_transitions() {
    result_.rounds = 0;
    result_.dispatch_count = 0;
    result_.transitions_applied = 0;
    result_.late_outcomes = 0;
    result_.dep_lost_count = 0;
    result_.recovery_counts.clear();
    occupancy_.clear();
    for (const auto& r : wal_.records()) {
        if (r.seq <= start_seq_) continue;
        switch (r.kind) {
            case RecordKind::round_boundary:
                result_.rounds += 1;
                break;
            case RecordKind::dispatch:
                result_.dispatch_count += 1;
                break;
            case RecordKind::transition: {
                result_.transitions_applied += 1;
                NodeState to = node_state_from_string(r.body.at("to").get<std::string>());
                if (!is_terminal(to))
                    occupancy_.insert({r.body.at("node").get<std::string>(), to});
                if (r.body.at("trigger") == "dep_lost") result_.dep_lost_count += 1;
                break;
            }
            case RecordKind::recovery_action:
                result_.recovery_counts[r.body.at("applied").get<std::string>()] += 1;
                break;
            case RecordKind::late_outcome:
                result_.late_outcomes += 1;
                break;
            case RecordKind::replan:
            case RecordKind::outcome:
            case RecordKind::contract_report:
                break;
        }
    }
    result_.occupancy_entries = static_cast<int>(occupancy_.size());
}

RunResult Engine::run() {
    int replans_used = 0;
    while (true) {
        RunResult r = run_version();
        if (r.status != RunResult::Status::replan_requested) {
            r.plan_versions = plan_->version();
            return r;
        }
        if (!options_.replan_provider || replans_used >= options_.max_replans) {
            r.plan_versions = plan_->version();
            r.failure_note = "replan requested but no further plan version is available";
            return r;
        }
        auto structure = options_.replan_provider(r.replan_reason, state_);
        if (!structure) {
            r.plan_versions = plan_->version();
            r.failure_note = "replan requested but the provider supplied no structure";
            return r;
        }
        Plan next = derive_replan(*plan_, std::move(*structure), r.replan_reason);
        replans_used += 1;
        plan_ = std::make_shared<const Plan>(std::move(next));
        state_ = ExecutionState::fresh(plan_, options_.human_timeout_ms);
        events_.clear();
        attempt_serial_.clear();
        last_failure_.clear();
        result_.status = RunResult::Status::completed;
        result_.replan_reason.clear();
        log_initial_commitment(r.replan_reason);
        ready_ = compute_ready_set(state_);
    }
}

RunResult run_to_completion(std::shared_ptr<const Plan> plan, Executor& executor, Clock& clock,
                            Wal& wal, EngineOptions options) {
    Engine engine(std::move(plan), executor, clock, wal, std::move(options));
    return engine.run();
}

}  // namespace sgh
