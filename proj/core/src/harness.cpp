#include "sgh/harness.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace sgh {

const char* to_string(Group g) {
    switch (g) {
        case Group::G0: return "G0";
        case Group::G1: return "G1";
        case Group::G2: return "G2";
        case Group::G3: return "G3";
        case Group::G4: return "G4";
        case Group::G5: return "G5";
        case Group::G6: return "G6";
    }
    return "?";
}

Group group_from_string(const std::string& s) {
    for (Group g : {Group::G0, Group::G1, Group::G2, Group::G3, Group::G4, Group::G5, Group::G6})
        if (s == to_string(g)) return g;
    throw Error("unknown group '" + s + "'");
}

const char* to_string(Tier t) {
    switch (t) {
        case Tier::simple: return "simple";
        case Tier::medium: return "medium";
        case Tier::complex: return "complex";
    }
    return "?";
}

Tier tier_from_string(const std::string& s) {
    if (s == "simple") return Tier::simple;
    if (s == "medium") return Tier::medium;
    if (s == "complex") return Tier::complex;
    throw Error("unknown tier '" + s + "'");
}

const char* to_string(PerfMetric m) {
    switch (m) {
        case PerfMetric::success_rate: return "success_rate";
        case PerfMetric::contract_rate: return "contract_rate";
        case PerfMetric::speed: return "speed";
    }
    return "?";
}

GroupConfig GroupConfig::standard(Group g) {
    GroupConfig c;
    c.group = g;
    switch (g) {
        case Group::G0:  // SOTA loop: richer prompts emulated as a lower error rate
            c.scheduler = SchedulerKind::loop;
            c.recovery = RecoveryLevels::none;
            c.planner = PlannerKind::none;
            c.chooser_error_rate = 0.02;
            break;
        case Group::G1:
            c.scheduler = SchedulerKind::loop;
            c.recovery = RecoveryLevels::none;
            c.planner = PlannerKind::none;
            c.chooser_error_rate = 0.18;
            break;
        case Group::G2:
            c.scheduler = SchedulerKind::loop;
            c.recovery = RecoveryLevels::none;
            c.planner = PlannerKind::scripted;
            c.chooser_error_rate = 0.05;
            break;
        case Group::G3:
            c.scheduler = SchedulerKind::loop;
            c.recovery = RecoveryLevels::none;
            c.planner = PlannerKind::scripted_scaffold;
            c.chooser_error_rate = 0.0;
            break;
        case Group::G4:
            c.scheduler = SchedulerKind::graph;
            c.recovery = RecoveryLevels::retry;
            c.planner = PlannerKind::scripted;
            break;
        case Group::G5:
            c.scheduler = SchedulerKind::graph;
            c.recovery = RecoveryLevels::retry_patch;
            c.planner = PlannerKind::scripted;
            break;
        case Group::G6:
            c.scheduler = SchedulerKind::graph;
            c.recovery = RecoveryLevels::retry_patch_replan;
            c.planner = PlannerKind::scripted;
            break;
    }
    return c;
}

Plan TaskSpec::make_plan() const { return Plan::from_structure(id, 1, structure); }

bool TaskSpec::solvable_at(RecoveryLevels levels) const {
    if (needs_replan) return levels == RecoveryLevels::retry_patch_replan;
    if (needs_patch)
        return levels == RecoveryLevels::retry_patch ||
               levels == RecoveryLevels::retry_patch_replan;
    if (has_faults) return levels != RecoveryLevels::none;
    return true;
}

// -- metrics ------------------------------------------------------------------

RunMetrics metrics_from_trace(const std::vector<TraceRecord>& records, bool success) {
    RunMetrics m;
    m.success = success;
    std::set<NodeId> executed;
    std::int64_t t0 = records.empty() ? 0 : records.front().clock;
    std::int64_t t1 = t0;
    for (const auto& r : records) {
        t1 = std::max(t1, r.clock);
        switch (r.kind) {
            case RecordKind::round_boundary:
                m.rounds += 1;
                m.ready_cardinalities.push_back(r.body.at("cardinality").get<int>());
                break;
            case RecordKind::dispatch:
                m.dispatch_count += 1;
                break;
            case RecordKind::outcome:
                if (r.body.at("kind") == "success" && r.body.value("contract_passed", false))
                    executed.insert(r.body.at("node").get<std::string>());
                break;
            case RecordKind::recovery_action:
                m.recovery_actions[r.body.at("applied").get<std::string>()] += 1;
                break;
            case RecordKind::replan:
                m.plan_versions = r.body.at("new_version").get<int>();
                m.nodes_total = static_cast<int>(r.body.at("plan").at("nodes").size());
                break;
            default:
                break;
        }
    }
    m.nodes_executed = static_cast<int>(executed.size());
    m.sim_time_ms = t1 - t0;
    return m;
}

// -- loop simulation ----------------------------------------------------------

namespace {

struct LoopSim {
    const GroupConfig& cfg;
    const TaskSpec& task;
    Plan plan;
    std::vector<NodeId> order;
    std::mt19937_64 rng;
    ScriptedExecutor exec;
    ContextStore store{ContextScope::exec};
    Wal* wal;

    std::set<NodeId> done;
    std::set<NodeId> abandoned;
    std::map<NodeId, int> attempts;
    std::map<NodeId, int> consecutive_fails;
    int turns = 0;
    int dispatches = 0;
    std::int64_t sim_time = 0;
    bool dead_end = false;

    LoopSim(const GroupConfig& cfg, const TaskSpec& task, std::uint64_t seed, Wal* wal)
        : cfg(cfg),
          task(task),
          plan(task.make_plan()),
          order(topological_order(plan)),
          rng(seed ^ 0x10057ULL),
          exec(ActionRegistry::standard_mocks(), task.faults, task.durations_ms),
          wal(wal) {}

    bool group_satisfied(const NodeId& n) const {
        auto g = plan.group_of(n);
        if (!g) return false;
        for (const auto& m : plan.any_of_groups().at(*g))
            if (done.count(m)) return true;
        return false;
    }

    bool pred_ok(const NodeId& p) const { return done.count(p) > 0 || group_satisfied(p); }

    bool step_settled(const NodeId& n) const {
        return done.count(n) || group_satisfied(n);
    }

    std::optional<NodeId> next_target() const {
        for (const auto& n : order) {
            if (step_settled(n) || abandoned.count(n)) continue;
            const auto& preds = plan.predecessors(n);
            if (plan.config(n).join == JoinMode::any_of) {
                bool any = false;
                for (const auto& p : preds) any = any || done.count(p);
                if (!any) continue;
            } else {
                bool all = true;
                for (const auto& p : preds) all = all && pred_ok(p);
                if (!all) continue;
            }
            return n;
        }
        return std::nullopt;
    }

    bool sibling_available(const NodeId& n) const {
        auto g = plan.group_of(n);
        if (!g) return false;
        for (const auto& m : plan.any_of_groups().at(*g))
            if (m != n && !abandoned.count(m) && !done.count(m)) return true;
        return false;
    }

    bool budgeted() const {
        return cfg.planner != PlannerKind::none;  // G2/G3 honor per-node budgets
    }

    void record_turn(const NodeId& target, bool wasted) {
        if (!wal) return;
        wal->append(RecordKind::round_boundary, sim_time, plan.id(), 1,
                    Json{{"round", turns},
                         {"members", Json::array({target})},
                         {"cardinality", 1},
                         {"wasted", wasted}});
    }

    void run(int cap) {
        while (turns < cap && !dead_end) {
            auto target = next_target();
            if (!target) break;
            turns += 1;

            bool wasted = std::uniform_real_distribution<double>(0.0, 1.0)(rng) <
                          cfg.chooser_error_rate;
            record_turn(*target, wasted);
            if (wasted) {
                sim_time += 1;
                continue;
            }
            execute(*target);
        }
    }

    void execute(const NodeId& n) {
        const NodeConfig& node_cfg = plan.config(n);
        dispatches += 1;
        attempts[n] += 1;
        if (wal)
            wal->append(RecordKind::dispatch, sim_time, plan.id(), 1, Json{{"node", n}});

        PendingExecution pending = exec.start(n, node_cfg, store, Json::object(), sim_time);
        bool ok = false;
        bool contract_passed = false;
        if (pending.result.kind == AttemptResult::Kind::hang || !pending.completes_at) {
            sim_time += node_cfg.timeout_ms;  // stalls until the turn's timeout
        } else {
            sim_time = *pending.completes_at;
            if (pending.result.kind == AttemptResult::Kind::output) {
                contract_passed = all_pass(
                    validate_contract(pending.result.payload, node_cfg.contract));
                ok = contract_passed;
            }
        }
        if (wal) {
            wal->append(RecordKind::outcome, sim_time, plan.id(), 1,
                        Json{{"node", n},
                             {"kind", pending.result.kind == AttemptResult::Kind::output
                                          ? "success"
                                          : "failure"},
                             {"contract_passed", contract_passed}});
        }

        if (ok) {
            done.insert(n);
            consecutive_fails[n] = 0;
            return;
        }
        consecutive_fails[n] += 1;

        if (budgeted()) {
            if (attempts[n] >= node_cfg.retry_budget + 1) {
                if (sibling_available(n)) {
                    abandoned.insert(n);
                    // A planner-loop replan costs a turn; the scaffold
                    // variant switches within the plan for free.
                    if (cfg.planner == PlannerKind::scripted) turns += 1;
                } else {
                    dead_end = true;
                }
            }
        } else {
            // Context continuation: keep grinding, switch alternatives
            // only after repeated failures.
            if (consecutive_fails[n] >= 3 && sibling_available(n)) abandoned.insert(n);
        }
    }

    bool complete() const {
        for (const auto& n : order)
            if (!step_settled(n)) return false;
        return true;
    }
};

}  // namespace

RunMetrics simulate_loop(const GroupConfig& cfg, const TaskSpec& task, std::uint64_t seed,
                         Wal* wal) {
    LoopSim sim(cfg, task, seed, wal);
    int cap = 4 * static_cast<int>(sim.plan.nodes().size());
    if (wal) {
        wal->append(RecordKind::replan, 0, sim.plan.id(), 1,
                    Json{{"old_version", 0},
                         {"new_version", 1},
                         {"reason", "initial_commitment"},
                         {"plan", plan_to_json(sim.plan)}});
    }
    sim.run(cap);

    RunMetrics m;
    m.success = sim.complete();
    m.rounds = sim.turns;
    m.sim_time_ms = sim.sim_time;
    m.dispatch_count = sim.dispatches;
    m.plan_versions = 1;
    m.ready_cardinalities.assign(static_cast<std::size_t>(sim.turns), 1);
    m.nodes_executed = static_cast<int>(sim.done.size());
    m.nodes_total = static_cast<int>(sim.plan.nodes().size());
    int loop_retries = sim.dispatches - static_cast<int>(sim.attempts.size());
    if (loop_retries > 0) m.recovery_actions["loop_retry"] = loop_retries;
    return m;
}

// -- engine runs --------------------------------------------------------------

namespace {

RecoveryAction cap_for(RecoveryLevels levels) {
    switch (levels) {
        case RecoveryLevels::none:
        case RecoveryLevels::retry: return RecoveryAction::local_retry;
        case RecoveryLevels::retry_patch: return RecoveryAction::local_patch;
        case RecoveryLevels::retry_patch_replan: return RecoveryAction::request_replan;
    }
    return RecoveryAction::local_retry;
}

}  // namespace

RunMetrics run_engine_task(const GroupConfig& cfg, const TaskSpec& task, std::uint64_t seed,
                           Wal* wal) {
    (void)seed;  // engine runs are fully determined by plan + script
    auto plan = std::make_shared<const Plan>(task.make_plan());
    ScriptedExecutor executor(ActionRegistry::standard_mocks(), task.faults, task.durations_ms);
    VirtualClock clock;

    EngineOptions options;
    options.snapshot_every = 0;
    options.recovery_cap = cap_for(cfg.recovery);
    if (!task.patch_configs.empty()) {
        options.patch_provider = [&task](const NodeId& n, const Diagnosis&,
                                         const ExecutionState&) -> std::optional<NodeConfig> {
            auto it = task.patch_configs.find(n);
            if (it == task.patch_configs.end()) return std::nullopt;
            return it->second;
        };
    }
    if (task.replan_structure) {
        options.replan_provider = [&task](const std::string&,
                                          const ExecutionState&) -> std::optional<PlanStructure> {
            return *task.replan_structure;
        };
    }

    Wal local = Wal::in_memory();
    Wal& sink = wal ? *wal : local;
    RunResult result = run_to_completion(plan, executor, clock, sink, options);

    RunMetrics m;
    m.success = result.success;
    m.rounds = result.rounds;
    m.sim_time_ms = clock.now_ms();
    m.dispatch_count = result.dispatch_count;
    m.recovery_actions = result.recovery_counts;
    m.plan_versions = result.plan_versions;
    m.ready_cardinalities = result.round_cardinalities;
    for (const auto& [_, rt] : result.state.runtimes)
        if (rt.state == NodeState::executed) m.nodes_executed += 1;
    m.nodes_total = static_cast<int>(result.state.plan->nodes().size());
    return m;
}

RunMetrics run_task(const GroupConfig& cfg, const TaskSpec& task, std::uint64_t seed, Wal* wal) {
    if (cfg.scheduler == SchedulerKind::loop) return simulate_loop(cfg, task, seed, wal);
    return run_engine_task(cfg, task, seed, wal);
}

// -- aggregation --------------------------------------------------------------

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    a ^= b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2);
    return a;
}

}  // namespace

AggregatedMetrics run_group(const GroupConfig& cfg, const std::vector<TaskSpec>& tasks,
                            int repetitions, std::uint64_t seed) {
    AggregatedMetrics agg;
    agg.group = cfg.group;
    agg.tasks = static_cast<int>(tasks.size());
    agg.repetitions = repetitions;
    agg.config_hash = controlled_variables_hash(tasks);
    if (tasks.empty() || repetitions <= 0) return agg;

    std::vector<std::vector<RunMetrics>> by_task(tasks.size());
    for (auto& v : by_task) v.resize(static_cast<std::size_t>(repetitions));

    for (int rep = 0; rep < repetitions; ++rep) {
        // Task order shuffled per repetition (order-effect mitigation).
        std::vector<std::size_t> idx(tasks.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::mt19937_64 order_rng(mix(seed, static_cast<std::uint64_t>(rep) + 0xabcdULL));
        std::shuffle(idx.begin(), idx.end(), order_rng);

        for (std::size_t i : idx) {
            std::uint64_t run_seed = mix(mix(seed, tasks[i].seed), static_cast<std::uint64_t>(rep));
            by_task[i][static_cast<std::size_t>(rep)] = run_task(cfg, tasks[i], run_seed);
        }
    }

    double successes = 0, sum_rounds = 0, sum_sq_rounds = 0, sum_dispatch = 0, contract = 0;
    int n = 0;
    for (std::size_t i = 0; i < by_task.size(); ++i) {
        for (const auto& m : by_task[i]) {
            agg.per_run.push_back(m);
            successes += m.success ? 1 : 0;
            sum_rounds += m.rounds;
            sum_sq_rounds += static_cast<double>(m.rounds) * m.rounds;
            sum_dispatch += m.dispatch_count;
            contract += m.nodes_total > 0
                            ? static_cast<double>(m.nodes_executed) / m.nodes_total
                            : 0.0;
            n += 1;
        }
    }
    agg.success_rate = successes / n;
    agg.mean_rounds = sum_rounds / n;
    double var = sum_sq_rounds / n - agg.mean_rounds * agg.mean_rounds;
    agg.sd_rounds = var > 0 ? std::sqrt(var) : 0.0;
    agg.mean_dispatches = sum_dispatch / n;
    agg.contract_rate = contract / n;
    return agg;
}

// -- gains --------------------------------------------------------------------

Json GainReport::to_json() const {
    Json perf_json = Json::object();
    for (const auto& [g, p] : perf) perf_json[to_string(g)] = p;
    Json j{{"perf", perf_json},
           {"g_plan", g_plan},
           {"g_scaffold", g_scaffold},
           {"g_graph", g_graph},
           {"g_patch", g_patch},
           {"g_replan", g_replan},
           {"g_total", g_total}};
    if (info_vs_structure) j["info_vs_structure"] = *info_vs_structure;
    if (total_vs_g0) j["total_vs_g0"] = *total_vs_g0;
    return j;
}

GainReport compute_gains(const std::map<Group, double>& perf) {
    for (Group g : {Group::G1, Group::G2, Group::G3, Group::G4, Group::G5, Group::G6})
        if (!perf.count(g)) throw MissingGroup(to_string(g));

    GainReport r;
    r.perf = perf;
    r.g_plan = perf.at(Group::G2) - perf.at(Group::G1);
    r.g_scaffold = perf.at(Group::G3) - perf.at(Group::G2);
    r.g_graph = perf.at(Group::G4) - perf.at(Group::G3);
    r.g_patch = perf.at(Group::G5) - perf.at(Group::G4);
    r.g_replan = perf.at(Group::G6) - perf.at(Group::G5);
    r.g_total = r.g_plan + r.g_scaffold + r.g_graph + r.g_patch + r.g_replan;
    if (perf.count(Group::G0)) {
        r.info_vs_structure = perf.at(Group::G1) - perf.at(Group::G0);
        r.total_vs_g0 = perf.at(Group::G6) - perf.at(Group::G0);
    }
    return r;
}

// -- task generation ----------------------------------------------------------

namespace {

std::string node_name(int i) {
    std::string s = std::to_string(i);
    return "n" + std::string(2 - std::min<std::size_t>(2, s.size()), '0') + s;
}

NodeConfig base_config(std::mt19937_64& rng) {
    NodeConfig cfg;
    cfg.action = "ok";
    cfg.retry_budget = 1 + static_cast<int>(rng() % 2);
    cfg.timeout_ms = 120;
    cfg.side_effect = SideEffect::read_only;
    cfg.contract.method = ValidationMethod::syntactic;
    cfg.contract.rules = {{ValidationRule::Kind::field_present, "result", "", {}, ""}};
    return cfg;
}

enum class FaultFamily { none, transient, patch, replan, hang_race };

FaultFamily pick_family(Tier tier, std::mt19937_64& rng) {
    int roll = static_cast<int>(rng() % 100);
    switch (tier) {
        case Tier::simple:
            return roll < 65 ? FaultFamily::none : FaultFamily::transient;
        case Tier::medium:
            if (roll < 35) return FaultFamily::none;
            if (roll < 60) return FaultFamily::transient;
            if (roll < 75) return FaultFamily::patch;
            if (roll < 88) return FaultFamily::replan;
            return FaultFamily::hang_race;
        case Tier::complex:
            if (roll < 20) return FaultFamily::none;
            if (roll < 45) return FaultFamily::transient;
            if (roll < 70) return FaultFamily::patch;
            if (roll < 90) return FaultFamily::replan;
            return FaultFamily::hang_race;
    }
    return FaultFamily::none;
}

}  // namespace

std::vector<TaskSpec> generate_tasks(Tier tier, int count, std::uint64_t seed) {
    std::vector<TaskSpec> tasks;
    tasks.reserve(static_cast<std::size_t>(count));
    std::mt19937_64 rng(mix(seed, static_cast<std::uint64_t>(tier) + 0x7a5cULL));

    for (int t = 0; t < count; ++t) {
        TaskSpec task;
        task.tier = tier;
        task.seed = rng();
        std::ostringstream id;
        id << "task-" << to_string(tier) << "-" << t;
        task.id = id.str();

        PlanStructure s;
        int next_id = 0;
        auto add_node = [&](const NodeConfig& cfg) {
            NodeId n = node_name(next_id++);
            s.nodes.push_back(n);
            s.config[n] = cfg;
            return n;
        };

        std::vector<NodeId> group_members;  // one any_of group per generated fork
        if (tier == Tier::simple) {
            int len = 1 + static_cast<int>(rng() % 3);
            NodeId prev;
            for (int i = 0; i < len; ++i) {
                NodeId n = add_node(base_config(rng));
                if (!prev.empty()) s.edges.emplace_back(prev, n);
                prev = n;
            }
        } else {
            int target_nodes = tier == Tier::medium ? 4 + static_cast<int>(rng() % 5)
                                                    : 9 + static_cast<int>(rng() % 6);
            // Entry, a parallel fan, one any_of fork, then a single exit.
            NodeId entry = add_node(base_config(rng));
            std::vector<NodeId> mid;
            int fan = std::max(2, (target_nodes - 4) / 2);
            for (int i = 0; i < fan; ++i) {
                NodeId n = add_node(base_config(rng));
                s.edges.emplace_back(entry, n);
                mid.push_back(n);
            }
            // any_of fork off the first mid node.
            NodeConfig cand = base_config(rng);
            cand.any_of_group = "alt0";
            NodeId c1 = add_node(cand);
            NodeId c2 = add_node(cand);
            s.edges.emplace_back(mid.front(), c1);
            s.edges.emplace_back(mid.front(), c2);
            group_members = {c1, c2};
            NodeConfig joiner = base_config(rng);
            joiner.join = JoinMode::any_of;
            NodeId join_node = add_node(joiner);
            s.edges.emplace_back(c1, join_node);
            s.edges.emplace_back(c2, join_node);

            std::vector<NodeId> tail = {join_node};
            for (auto it = mid.begin() + 1; it != mid.end(); ++it) tail.push_back(*it);
            while (next_id < target_nodes - 1) {
                NodeConfig cfg = base_config(rng);
                NodeId n = add_node(cfg);
                NodeId parent = tail[rng() % tail.size()];
                s.edges.emplace_back(parent, n);
                tail.push_back(n);
            }
            NodeId exit = add_node(base_config(rng));
            // Everything with no successor yet feeds the exit.
            std::set<NodeId> with_succ;
            for (const auto& [from, to] : s.edges) with_succ.insert(from);
            for (const auto& n : s.nodes)
                if (n != exit && !with_succ.count(n)) s.edges.emplace_back(n, exit);
        }

        s.plan_contract.method = ValidationMethod::syntactic;
        s.plan_contract.rules = {{ValidationRule::Kind::field_present, "result", "", {}, ""}};

        for (const auto& n : s.nodes) task.durations_ms[n] = 1 + static_cast<int>(rng() % 4);

        FaultFamily family = pick_family(tier, rng);
        if ((family == FaultFamily::hang_race || family == FaultFamily::patch ||
             family == FaultFamily::replan) &&
            group_members.empty() && family == FaultFamily::hang_race) {
            family = FaultFamily::transient;  // simple tier has no forks to race
        }
        std::vector<NodeId> fault_pool = s.nodes;

        switch (family) {
            case FaultFamily::none:
                break;
            case FaultFamily::transient: {
                task.has_faults = true;
                int victims = 1 + static_cast<int>(rng() % 2);
                for (int v = 0; v < victims && v < static_cast<int>(fault_pool.size()); ++v) {
                    const NodeId& n = fault_pool[rng() % fault_pool.size()];
                    int k = std::max(1, std::min(s.config[n].retry_budget,
                                                 1 + static_cast<int>(rng() % 2)));
                    for (int f = 0; f < k; ++f)
                        task.faults.add(n, {FaultScript::Entry::Op::fail, std::nullopt,
                                            "transient", std::nullopt});
                }
                break;
            }
            case FaultFamily::patch: {
                task.has_faults = true;
                task.needs_patch = true;
                const NodeId& n = fault_pool[rng() % fault_pool.size()];
                s.config[n].action = "emit_raw";  // payload never matches the contract
                NodeConfig fixed = s.config[n];
                fixed.contract.rules = {{ValidationRule::Kind::field_present, "raw", "", {}, ""}};
                fixed.retry_budget = s.config[n].retry_budget + 1;
                task.patch_configs[n] = fixed;
                break;
            }
            case FaultFamily::replan: {
                task.has_faults = true;
                task.needs_replan = true;
                const NodeId& n = fault_pool[rng() % fault_pool.size()];
                s.config[n].retry_budget = 1;
                // Longer than any loop's step cap so grinding cannot win.
                int entries = 4 * static_cast<int>(s.nodes.size()) + 4;
                for (int f = 0; f < entries; ++f)
                    task.faults.add(n, {FaultScript::Entry::Op::fail, std::nullopt, "auth",
                                        std::nullopt});
                // A pointless patch keeps the ladder honest; the real fix
                // is the next plan version, which swaps the node out.
                NodeConfig stopgap = s.config[n];
                stopgap.retry_budget = 2;
                task.patch_configs[n] = stopgap;

                PlanStructure v2 = s;
                NodeId replacement = n + "r";
                v2.nodes.push_back(replacement);
                v2.nodes.erase(std::find(v2.nodes.begin(), v2.nodes.end(), n));
                NodeConfig fresh = v2.config[n];
                fresh.action = "ok";
                fresh.retry_budget = 1;
                v2.config.erase(n);
                v2.config[replacement] = fresh;
                for (auto& [from, to] : v2.edges) {
                    if (from == n) from = replacement;
                    if (to == n) to = replacement;
                }
                task.replan_structure = std::move(v2);
                break;
            }
            case FaultFamily::hang_race: {
                task.has_faults = true;
                // First candidate stalls; its sibling wins the race and the
                // stalled one is skipped mid-flight.
                task.faults.add(group_members.front(),
                                {FaultScript::Entry::Op::hang, std::nullopt, "",
                                 std::int64_t{400}});
                break;
            }
        }

        task.structure = std::move(s);
        tasks.push_back(std::move(task));
    }
    return tasks;
}

std::uint64_t controlled_variables_hash(const std::vector<TaskSpec>& tasks) {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& t : tasks) {
        feed(t.id);
        feed(plan_to_json(t.make_plan()).dump());
        feed(t.faults.to_json().dump());
        for (const auto& [n, d] : t.durations_ms) {
            feed(n);
            feed(std::to_string(d));
        }
    }
    return h;
}

// -- bench --------------------------------------------------------------------

double perf_of(const AggregatedMetrics& m, PerfMetric metric, int /*step_cap_total*/) {
    switch (metric) {
        case PerfMetric::success_rate:
            return m.success_rate;
        case PerfMetric::contract_rate:
            return m.contract_rate;
        case PerfMetric::speed: {
            if (m.per_run.empty()) return 0.0;
            double acc = 0.0;
            for (const auto& r : m.per_run) {
                int cap = 4 * std::max(1, r.nodes_total);
                double v = 1.0 - static_cast<double>(r.rounds) / cap;
                acc += std::max(0.0, v);
            }
            return acc / static_cast<double>(m.per_run.size());
        }
    }
    return 0.0;
}

Json BenchReport::to_json() const {
    Json groups_json = Json::object();
    for (const auto& [g, m] : groups) {
        Json per_task = Json::array();
        for (const auto& r : m.per_run) {
            per_task.push_back(Json{{"success", r.success},
                                    {"rounds", r.rounds},
                                    {"dispatches", r.dispatch_count},
                                    {"plan_versions", r.plan_versions},
                                    {"nodes_executed", r.nodes_executed},
                                    {"nodes_total", r.nodes_total}});
        }
        groups_json[to_string(g)] = Json{{"success_rate", m.success_rate},
                                         {"mean_rounds", m.mean_rounds},
                                         {"sd_rounds", m.sd_rounds},
                                         {"mean_dispatches", m.mean_dispatches},
                                         {"contract_rate", m.contract_rate},
                                         {"tasks", m.tasks},
                                         {"repetitions", m.repetitions},
                                         {"per_task", per_task}};
    }
    Json j{{"groups", groups_json},
           {"config_hash", config_hash},
           {"metric", to_string(metric)}};
    if (gains) j["gains"] = gains->to_json();
    return j;
}

std::string BenchReport::cardinality_csv() const {
    std::ostringstream os;
    os << "group,cardinality,rounds\n";
    for (const auto& [g, m] : groups) {
        std::map<int, int> histogram;
        for (const auto& r : m.per_run)
            for (int c : r.ready_cardinalities) histogram[c] += 1;
        for (const auto& [c, n] : histogram)
            os << to_string(g) << "," << c << "," << n << "\n";
    }
    return os.str();
}

BenchReport run_bench(const BenchConfig& config) {
    std::vector<TaskSpec> tasks;
    for (Tier tier : config.tiers) {
        auto batch = generate_tasks(tier, config.tasks_per_tier,
                                    mix(config.seed, static_cast<std::uint64_t>(tier)));
        for (auto& t : batch) tasks.push_back(std::move(t));
    }

    BenchReport report;
    report.metric = config.metric;
    report.config_hash = controlled_variables_hash(tasks);
    for (Group g : config.groups) {
        auto agg = run_group(GroupConfig::standard(g), tasks, config.repetitions, config.seed);
        if (agg.config_hash != report.config_hash)
            throw Error("controlled-variable audit failed: group " + std::string(to_string(g)) +
                        " ran a different task set");
        report.groups[g] = std::move(agg);
    }

    bool have_all = true;
    for (Group g : {Group::G1, Group::G2, Group::G3, Group::G4, Group::G5, Group::G6})
        have_all = have_all && report.groups.count(g) > 0;
    if (have_all) {
        std::map<Group, double> perf;
        for (const auto& [g, m] : report.groups) perf[g] = perf_of(m, config.metric, 0);
        report.gains = compute_gains(perf);
    }
    return report;
}

}  // namespace sgh
