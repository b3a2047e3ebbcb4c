// sgh: validate, run, replay and benchmark static-DAG execution plans.

#include <sys/select.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sgh/harness.hpp"
#include "sgh/scheduler.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPlanFailed = 1;
constexpr int kExitParseError = 2;
constexpr int kExitUsage = 64;
constexpr int kExitEngineBug = 70;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw sgh::Error("cannot read '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::uint64_t seed_or_env(std::uint64_t seed, bool seed_set) {
    if (seed_set) return seed;
    if (const char* env = std::getenv("SGH_SEED")) return std::strtoull(env, nullptr, 10);
    return 1;
}

int cmd_validate(const std::string& plan_path, bool json) {
    sgh::Plan plan = sgh::parse_plan(read_file(plan_path));
    auto report = sgh::validate_plan(plan);
    if (json)
        std::cout << report.to_json().dump(2) << "\n";
    else
        std::cout << report.to_text();
    return report.ok ? kExitOk : kExitPlanFailed;
}

// Interactive approval: prompt on the terminal, bounded by the node's
// human timeout. Used only for wall-clock runs without --approve-all.
std::optional<sgh::ApprovalDecision> prompt_approval(const sgh::NodeId& node, std::int64_t now,
                                                     std::int64_t timeout_ms) {
    std::cerr << "node '" << node << "' needs approval; approve? [y/N] (timeout "
              << timeout_ms << " ms) " << std::flush;
    fd_set fds;
    FD_ZERO(&fds);
    FD_SET(STDIN_FILENO, &fds);
    timeval tv{static_cast<time_t>(timeout_ms / 1000),
               static_cast<suseconds_t>((timeout_ms % 1000) * 1000)};
    int rv = select(STDIN_FILENO + 1, &fds, nullptr, nullptr, &tv);
    if (rv <= 0) return std::nullopt;  // no answer: the human timeout fires
    std::string line;
    std::getline(std::cin, line);
    bool yes = !line.empty() && (line[0] == 'y' || line[0] == 'Y');
    return sgh::ApprovalDecision{yes, now};
}

void print_rounds(const sgh::Wal& wal) {
    for (const auto& r : wal.records()) {
        if (r.kind != sgh::RecordKind::round_boundary) continue;
        std::cout << "round " << r.body.at("round").get<int>() << " (v" << r.plan_version
                  << "): ready [";
        bool first = true;
        for (const auto& m : r.body.at("members")) {
            if (!first) std::cout << ", ";
            std::cout << m.get<std::string>();
            first = false;
        }
        std::cout << "] |U|=" << r.body.at("cardinality").get<int>() << "\n";
    }
}

int cmd_run(const std::string& plan_path, const std::string& faults_path,
            const std::string& wal_path, const std::string& replan_path, bool virtual_clock,
            bool approve_all, int snapshot_n, std::int64_t human_timeout_ms, int max_replans,
            bool json) {
    auto plan = std::make_shared<const sgh::Plan>(sgh::parse_plan(read_file(plan_path)));
    auto report = sgh::validate_plan(*plan);
    if (!report.ok) {
        std::cerr << report.to_text();
        return kExitPlanFailed;
    }

    sgh::FaultScript faults;
    if (!faults_path.empty()) faults = sgh::FaultScript::parse(read_file(faults_path));
    sgh::ScriptedExecutor executor(sgh::ActionRegistry::standard_mocks(), std::move(faults));

    std::string wal_file = wal_path.empty() ? plan->id() + ".wal" : wal_path;
    sgh::Wal wal = sgh::Wal::to_file(wal_file);

    sgh::EngineOptions options;
    options.snapshot_every = snapshot_n;
    options.human_timeout_ms = human_timeout_ms;
    options.approval_threshold = sgh::SideEffect::high_write;
    options.max_replans = max_replans;
    if (approve_all) {
        options.approval_provider = [](const sgh::NodeId&, std::int64_t now) {
            return sgh::ApprovalDecision{true, now};
        };
    } else if (!virtual_clock) {
        options.approval_provider = [human_timeout_ms](const sgh::NodeId& node, std::int64_t now) {
            return prompt_approval(node, now, human_timeout_ms);
        };
    }
    if (!replan_path.empty()) {
        auto next = sgh::parse_plan(read_file(replan_path)).structure();
        options.replan_provider = [next](const std::string&, const sgh::ExecutionState&) {
            return std::optional<sgh::PlanStructure>(next);
        };
    }

    sgh::VirtualClock vclock;
    sgh::WallClock wclock;
    sgh::Clock& clock = virtual_clock ? static_cast<sgh::Clock&>(vclock)
                                      : static_cast<sgh::Clock&>(wclock);

    sgh::RunResult result = sgh::run_to_completion(plan, executor, clock, wal, options);

    std::map<std::string, int> state_counts;
    for (const auto& [_, rt] : result.state.runtimes)
        state_counts[sgh::to_string(rt.state)] += 1;

    if (json) {
        sgh::Json cards = result.round_cardinalities;
        sgh::Json j{{"success", result.success},
                    {"status", result.status == sgh::RunResult::Status::completed
                                   ? "completed"
                                   : "replan_requested"},
                    {"rounds", result.rounds},
                    {"round_cardinalities", cards},
                    {"dispatches", result.dispatch_count},
                    {"transitions", result.transitions_applied},
                    {"plan_versions", result.plan_versions},
                    {"recovery", result.recovery_counts},
                    {"states", state_counts},
                    {"wal", wal_file},
                    {"records", wal.last_seq()}};
        if (result.failure_note) j["note"] = *result.failure_note;
        std::cout << j.dump(2) << "\n";
    } else {
        print_rounds(wal);
        std::cout << "run " << (result.success ? "succeeded" : "failed") << ": "
                  << result.rounds << " rounds, cardinalities [";
        for (std::size_t i = 0; i < result.round_cardinalities.size(); ++i)
            std::cout << (i ? "," : "") << result.round_cardinalities[i];
        std::cout << "], " << result.plan_versions << " plan version(s)\n";
        for (const auto& [s, n] : state_counts) std::cout << "  " << s << ": " << n << "\n";
        if (result.failure_note) std::cout << "  note: " << *result.failure_note << "\n";
        std::cout << "wal: " << wal_file << " (" << wal.last_seq() << " records)\n";
    }

    if (result.status == sgh::RunResult::Status::replan_requested) return kExitPlanFailed;
    return result.success ? kExitOk : kExitPlanFailed;
}

int cmd_replay(const std::string& wal_path, std::uint64_t upto, bool upto_set, bool json) {
    std::optional<std::uint64_t> limit;
    if (upto_set) limit = upto;
    sgh::ExecutionState state = sgh::replay(wal_path, limit);
    if (json) {
        std::cout << sgh::serialize_state(state).dump(2) << "\n";
        return kExitOk;
    }
    if (!state.plan) {
        std::cout << "empty log: initial state\n";
        return kExitOk;
    }
    std::cout << "plan " << state.plan->id() << " v" << state.plan->version() << ", round "
              << state.round << "\n";
    for (const auto& [n, rt] : state.runtimes) {
        std::cout << "  " << n << ": " << sgh::to_string(rt.state)
                  << " (retries " << rt.retries_used << ", recovery "
                  << sgh::to_string(rt.recovery_state) << ")\n";
    }
    return kExitOk;
}

int cmd_bench(const std::vector<std::string>& group_names,
              const std::vector<std::string>& tier_names, int count, int reps,
              std::uint64_t seed, const std::string& out_path, const std::string& metric_name,
              bool csv, bool json) {
    sgh::BenchConfig config;
    for (const auto& g : group_names) config.groups.push_back(sgh::group_from_string(g));
    for (const auto& t : tier_names) config.tiers.push_back(sgh::tier_from_string(t));
    config.tasks_per_tier = count;
    config.repetitions = reps;
    config.seed = seed;
    if (metric_name == "success") config.metric = sgh::PerfMetric::success_rate;
    else if (metric_name == "contract") config.metric = sgh::PerfMetric::contract_rate;
    else if (metric_name == "speed") config.metric = sgh::PerfMetric::speed;
    else throw CLI::ValidationError("--metric must be success, contract or speed");

    sgh::BenchReport report = sgh::run_bench(config);

    std::ofstream out(out_path, std::ios::trunc);
    out << report.to_json().dump(2) << "\n";
    if (csv) {
        std::ofstream csv_out(out_path + ".csv", std::ios::trunc);
        csv_out << report.cardinality_csv();
    }

    if (json) {
        std::cout << report.to_json().dump(2) << "\n";
    } else {
        for (const auto& [g, m] : report.groups) {
            std::cout << sgh::to_string(g) << ": success " << m.success_rate << ", rounds "
                      << m.mean_rounds << " +/- " << m.sd_rounds << "\n";
        }
        if (report.gains) {
            const auto& gr = *report.gains;
            std::cout << "gains: plan " << gr.g_plan << ", scaffold " << gr.g_scaffold
                      << ", graph " << gr.g_graph << ", patch " << gr.g_patch << ", replan "
                      << gr.g_replan << ", total " << gr.g_total << "\n";
        }
        std::cout << "report: " << out_path << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"static-DAG execution harness"};
    app.require_subcommand(1);
    bool json = false;
    app.add_flag("--json", json, "machine-readable output");

    auto* validate = app.add_subcommand("validate", "validate a plan document");
    std::string plan_path;
    validate->add_option("plan", plan_path, "plan JSON file")->required();

    auto* run = app.add_subcommand("run", "execute a plan");
    std::string run_plan, faults_path, wal_path, replan_path;
    bool virtual_clock = false, approve_all = false;
    int snapshot_n = 50, max_replans = 1;
    std::int64_t human_timeout_ms = 60000;
    std::uint64_t run_seed = 0;
    run->add_option("plan", run_plan, "plan JSON file")->required();
    run->add_option("--faults", faults_path, "fault script JSON file");
    run->add_option("--wal", wal_path, "write-ahead log path (default <plan-id>.wal)");
    run->add_option("--replan-plan", replan_path, "plan document supplying the replan structure");
    run->add_flag("--virtual-clock", virtual_clock, "simulated time instead of wall time");
    run->add_flag("--approve-all", approve_all, "auto-approve waiting_human nodes");
    run->add_option("--snapshot-n", snapshot_n, "snapshot every N terminal nodes");
    run->add_option("--human-timeout-ms", human_timeout_ms, "waiting_human timeout");
    run->add_option("--max-replans", max_replans, "replan budget");
    run->add_option("--seed", run_seed, "reserved for seeded executors (SGH_SEED fallback)");

    auto* replay_cmd = app.add_subcommand("replay", "rebuild state from a write-ahead log");
    std::string replay_wal;
    std::uint64_t upto = 0;
    replay_cmd->add_option("wal", replay_wal, "WAL file")->required();
    auto* upto_opt = replay_cmd->add_option("--upto", upto, "replay records up to this seq");

    auto* bench = app.add_subcommand("bench", "run the multi-group benchmark");
    std::vector<std::string> groups{"G1", "G2", "G3", "G4", "G5", "G6"};
    std::vector<std::string> tiers{"medium"};
    int count = 10, reps = 10;
    std::uint64_t bench_seed = 0;
    bool bench_seed_set = false;
    std::string out_path = "bench-report.json", metric = "success";
    bool csv = false;
    bench->add_option("--groups", groups, "groups to run")->delimiter(',');
    bench->add_option("--tiers", tiers, "task tiers")->delimiter(',');
    bench->add_option("--count", count, "tasks per tier")->check(CLI::PositiveNumber);
    bench->add_option("--reps", reps, "repetitions per task")->check(CLI::PositiveNumber);
    auto* bench_seed_opt = bench->add_option("--seed", bench_seed, "benchmark seed");
    bench->add_option("--out", out_path, "report output path");
    bench->add_option("--metric", metric, "perf metric: success|contract|speed");
    bench->add_flag("--csv", csv, "also write the per-round cardinality histogram");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }
    (void)run_seed;
    bench_seed_set = bench_seed_opt->count() > 0;

    try {
        if (validate->parsed()) return cmd_validate(plan_path, json);
        if (run->parsed())
            return cmd_run(run_plan, faults_path, wal_path, replan_path, virtual_clock,
                           approve_all, snapshot_n, human_timeout_ms, max_replans, json);
        if (replay_cmd->parsed())
            return cmd_replay(replay_wal, upto, upto_opt->count() > 0, json);
        if (bench->parsed())
            return cmd_bench(groups, tiers, count, reps, seed_or_env(bench_seed, bench_seed_set),
                             out_path, metric, csv, json);
    } catch (const sgh::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParseError;
    } catch (const sgh::CorruptRecord& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParseError;
    } catch (const sgh::SeqGap& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParseError;
    } catch (const sgh::TransitionBudgetExceeded& e) {
        std::cerr << "engine bug: " << e.what() << "\n";
        return kExitEngineBug;
    } catch (const sgh::ProgressViolation& e) {
        std::cerr << "engine bug: " << e.what() << "\n";
        return kExitEngineBug;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const sgh::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPlanFailed;
    }
    return kExitUsage;
}
