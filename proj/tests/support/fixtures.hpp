#pragma once

#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sgh/executor.hpp"
#include "sgh/plan.hpp"

namespace sgh::test {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline std::string data_path(const std::string& name) {
    return std::string(SGH_TEST_DATA_DIR) + "/" + name;
}

/// The ten-node bug-fix plan used as the golden trace.
inline Plan golden_plan() { return parse_plan(read_file(data_path("bugfix_plan.json"))); }

inline FaultScript golden_faults() {
    return FaultScript::parse(read_file(data_path("bugfix_faults.json")));
}

inline OutputContract result_contract() {
    OutputContract c;
    c.method = ValidationMethod::syntactic;
    c.rules = {{ValidationRule::Kind::field_present, "result", "", {}, ""}};
    return c;
}

inline NodeConfig basic_config(const std::string& action = "ok") {
    NodeConfig cfg;
    cfg.action = action;
    cfg.retry_budget = 1;
    cfg.timeout_ms = 1000;
    cfg.contract = result_contract();
    return cfg;
}

/// Linear chain a -> b -> c ... with one config per node.
inline PlanStructure chain(const std::vector<NodeId>& ids) {
    PlanStructure s;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        s.nodes.push_back(ids[i]);
        s.config[ids[i]] = basic_config();
        if (i > 0) s.edges.emplace_back(ids[i - 1], ids[i]);
    }
    s.plan_contract = result_contract();
    return s;
}

/// entry -> {c1, c2 (group g)} -> join(any_of) shape used by join tests.
inline PlanStructure fork_structure(SideEffect candidate_effect = SideEffect::read_only) {
    PlanStructure s;
    for (const char* n : {"entry", "c1", "c2", "join"}) {
        s.nodes.push_back(n);
        s.config[n] = basic_config();
    }
    s.config["c1"].any_of_group = "g";
    s.config["c2"].any_of_group = "g";
    s.config["c1"].side_effect = candidate_effect;
    s.config["c2"].side_effect = candidate_effect;
    s.config["join"].join = JoinMode::any_of;
    s.edges = {{"entry", "c1"}, {"entry", "c2"}, {"c1", "join"}, {"c2", "join"}};
    s.plan_contract = result_contract();
    return s;
}

/// Seeded random layered DAG. Roughly half the instances (when large
/// enough) carry one any_of group of two candidates plus its join
/// successor. Always a valid plan with a single exit.
inline PlanStructure random_dag(std::mt19937_64& rng, int n_nodes, bool allow_groups = true) {
    PlanStructure s;
    int n = std::max(2, n_nodes);
    bool with_group = allow_groups && n >= 6 && (rng() % 2 == 0);
    auto name = [](int i) {
        std::ostringstream os;
        os << "v" << (i < 10 ? "0" : "") << i;
        return os.str();
    };
    for (int i = 0; i < n; ++i) {
        s.nodes.push_back(name(i));
        s.config[name(i)] = basic_config();
    }

    // Plain prefix: every node picks 1-2 predecessors among earlier ones.
    int plain_end = with_group ? n - 4 : n;
    for (int i = 1; i < plain_end; ++i) {
        int preds = 1 + static_cast<int>(rng() % 2);
        std::set<int> chosen;
        for (int p = 0; p < preds; ++p) chosen.insert(static_cast<int>(rng() % i));
        for (int c : chosen) s.edges.emplace_back(name(c), name(i));
    }

    if (with_group) {
        NodeId c1 = name(n - 4), c2 = name(n - 3), j = name(n - 2);
        s.config[c1].any_of_group = "alt";
        s.config[c2].any_of_group = "alt";
        s.config[j].join = JoinMode::any_of;
        s.edges.emplace_back(name(static_cast<int>(rng() % plain_end)), c1);
        s.edges.emplace_back(name(static_cast<int>(rng() % plain_end)), c2);
        s.edges.emplace_back(c1, j);
        s.edges.emplace_back(c2, j);
    }

    // Single exit: collect every other sink into the last node.
    NodeId exit_node = name(n - 1);
    std::set<NodeId> with_succ;
    for (const auto& [from, _] : s.edges) with_succ.insert(from);
    for (const auto& node : s.nodes)
        if (node != exit_node && !with_succ.count(node)) s.edges.emplace_back(node, exit_node);
    s.plan_contract = result_contract();
    return s;
}

/// Seeded fault script for a plan: each node independently fails a few
/// retryable attempts; budgets always cover the failures so runs stay
/// solvable.
inline FaultScript random_faults(std::mt19937_64& rng, const Plan& plan, double fault_rate) {
    FaultScript fs;
    for (const auto& n : plan.nodes()) {
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= fault_rate) continue;
        int k = std::max(1, std::min(plan.config(n).retry_budget, 1 + static_cast<int>(rng() % 2)));
        const char* kinds[] = {"transient", "network", "rate_limit"};
        for (int i = 0; i < k; ++i)
            fs.add(n, {FaultScript::Entry::Op::fail, std::nullopt, kinds[rng() % 3],
                       std::nullopt});
    }
    return fs;
}

}  // namespace sgh::test
