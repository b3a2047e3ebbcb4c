#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sgh/scheduler.hpp"

namespace sgh {

enum class Group { G0, G1, G2, G3, G4, G5, G6 };
const char* to_string(Group g);
Group group_from_string(const std::string& s);

enum class SchedulerKind { loop, graph };
enum class RecoveryLevels { none, retry, retry_patch, retry_patch_replan };
enum class PlannerKind { none, scripted, scripted_scaffold };

/// One experimental arm. `chooser_error_rate` is the probability that a
/// loop simulator wastes a turn on a redundant or wrong step, emulating
/// a non-deterministic policy.
struct GroupConfig {
    Group group = Group::G1;
    SchedulerKind scheduler = SchedulerKind::loop;
    RecoveryLevels recovery = RecoveryLevels::none;
    PlannerKind planner = PlannerKind::none;
    double chooser_error_rate = 0.0;

    /// The standard table: G0 SOTA loop, G1 naive loop, G2 planner loop,
    /// G3 structured loop, G4 graph+retry, G5 +patch, G6 +replan.
    static GroupConfig standard(Group g);
};

enum class Tier { simple, medium, complex };
const char* to_string(Tier t);
Tier tier_from_string(const std::string& s);

/// One benchmark task: a validated plan, its fault script, per-node
/// simulated durations, and the scripted remedies that make it solvable
/// at the appropriate recovery level.
struct TaskSpec {
    std::string id;
    Tier tier = Tier::simple;
    PlanStructure structure;
    FaultScript faults;
    std::map<NodeId, std::int64_t> durations_ms;
    std::uint64_t seed = 0;

    bool has_faults = false;
    bool needs_patch = false;
    bool needs_replan = false;
    std::map<NodeId, NodeConfig> patch_configs;
    std::optional<PlanStructure> replan_structure;

    Plan make_plan() const;
    /// Whether a run at the given recovery level can reach success.
    bool solvable_at(RecoveryLevels levels) const;
};

struct RunMetrics {
    bool success = false;
    int rounds = 0;
    std::int64_t sim_time_ms = 0;
    int dispatch_count = 0;
    std::map<std::string, int> recovery_actions;
    int plan_versions = 1;
    std::vector<int> ready_cardinalities;
    int nodes_executed = 0;
    int nodes_total = 0;

    bool operator==(const RunMetrics&) const = default;
};

/// Rebuilds RunMetrics by folding a trace; used to check that live
/// counters match the WAL.
RunMetrics metrics_from_trace(const std::vector<TraceRecord>& records, bool success);

/// Single-ready-unit discrete-event simulation of the loop baselines
/// G0-G3. One turn per step, |U| = 1 throughout, step cap 4x node count.
RunMetrics simulate_loop(const GroupConfig& cfg, const TaskSpec& task, std::uint64_t seed,
                         Wal* wal = nullptr);

/// Runs one task on the graph engine at the group's recovery level.
RunMetrics run_engine_task(const GroupConfig& cfg, const TaskSpec& task, std::uint64_t seed,
                           Wal* wal = nullptr);

/// Dispatches on the group's scheduler kind.
RunMetrics run_task(const GroupConfig& cfg, const TaskSpec& task, std::uint64_t seed,
                    Wal* wal = nullptr);

struct AggregatedMetrics {
    Group group = Group::G1;
    int tasks = 0;
    int repetitions = 0;
    double success_rate = 0.0;
    double mean_rounds = 0.0;
    double sd_rounds = 0.0;
    double mean_dispatches = 0.0;
    double contract_rate = 0.0;  // dispatched attempts whose contract passed
    std::uint64_t config_hash = 0;
    std::vector<RunMetrics> per_run;  // ordered by (task, repetition)
};

/// Runs every (task, repetition) pair for one group. Task order is
/// shuffled per repetition seed; aggregation is a deterministic fold in
/// (task, repetition) order.
AggregatedMetrics run_group(const GroupConfig& cfg, const std::vector<TaskSpec>& tasks,
                            int repetitions, std::uint64_t seed);

struct GainReport {
    std::map<Group, double> perf;
    double g_plan = 0.0;
    double g_scaffold = 0.0;
    double g_graph = 0.0;
    double g_patch = 0.0;
    double g_replan = 0.0;
    double g_total = 0.0;
    std::optional<double> info_vs_structure;  // Perf(G1) - Perf(G0)
    std::optional<double> total_vs_g0;        // Perf(G6) - Perf(G0)

    Json to_json() const;
};

/// Def-style gain decomposition over G1..G6; throws MissingGroup when an
/// arm is absent. G0 contributes the optional baseline comparisons.
GainReport compute_gains(const std::map<Group, double>& perf);

/// Seeded stratified task generation per tier. Every generated plan
/// validates and every fault script is solvable at full recovery.
std::vector<TaskSpec> generate_tasks(Tier tier, int count, std::uint64_t seed);

/// Hash of everything held constant across groups: task set, scripts,
/// budgets, timeouts, caps.
std::uint64_t controlled_variables_hash(const std::vector<TaskSpec>& tasks);

enum class PerfMetric { success_rate, contract_rate, speed };
const char* to_string(PerfMetric m);

struct BenchConfig {
    std::vector<Group> groups;
    std::vector<Tier> tiers;
    int tasks_per_tier = 10;
    int repetitions = 10;
    std::uint64_t seed = 1;
    PerfMetric metric = PerfMetric::success_rate;
};

struct BenchReport {
    std::map<Group, AggregatedMetrics> groups;
    std::optional<GainReport> gains;
    std::uint64_t config_hash = 0;
    PerfMetric metric = PerfMetric::success_rate;

    Json to_json() const;
    std::string cardinality_csv() const;  // per-round |U| histogram per group
};

/// Runs the configured groups over a shared generated task set. Refuses
/// to aggregate unless every group ran the identical controlled set.
BenchReport run_bench(const BenchConfig& config);

double perf_of(const AggregatedMetrics& m, PerfMetric metric, int step_cap_total);

}  // namespace sgh
