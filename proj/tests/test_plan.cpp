#include "sgh/plan.hpp"

#include <gtest/gtest.h>

#include <algorithm>

#include "support/fixtures.hpp"

using namespace sgh;
using sgh::test::basic_config;
using sgh::test::chain;
using sgh::test::golden_plan;
using sgh::test::result_contract;

namespace {

Plan make(PlanStructure s, const std::string& id = "p", int version = 1) {
    return Plan::from_structure(id, version, std::move(s));
}

}  // namespace

TEST(Validation, MinimalChainIsValid) {
    auto report = validate_plan(make(chain({"a", "b"})));
    EXPECT_TRUE(report.ok);
    EXPECT_TRUE(report.failures.empty());
}

TEST(Validation, TwoNodeCycleFailsAcyclicity) {
    PlanStructure s = chain({"a", "b"});
    s.edges.emplace_back("b", "a");
    auto report = validate_plan(make(std::move(s)));
    EXPECT_FALSE(report.ok);
    EXPECT_TRUE(report.failed(ValidationCheck::acyclicity));
}

TEST(Validation, GoldenPlanPassesAllChecks) {
    auto report = validate_plan(golden_plan());
    EXPECT_TRUE(report.ok) << report.to_text();
}

TEST(Validation, SingletonAnyOfGroupFailsJoinConsistency) {
    PlanStructure s = chain({"a", "b", "c"});
    s.config["b"].any_of_group = "only";
    auto report = validate_plan(make(std::move(s)));
    EXPECT_FALSE(report.ok);
    EXPECT_TRUE(report.failed(ValidationCheck::join_consistency));
    EXPECT_FALSE(report.failed(ValidationCheck::acyclicity));
}

TEST(Validation, AnyOfJoinWithUngroupedPredecessorsFails) {
    PlanStructure s = chain({"a", "b"});
    s.nodes.push_back("c");
    s.config["c"] = basic_config();
    s.config["b"].join = JoinMode::any_of;
    s.edges.emplace_back("c", "b");
    auto report = validate_plan(make(std::move(s)));
    EXPECT_TRUE(report.failed(ValidationCheck::join_consistency));
}

TEST(Validation, EmptyContractFailsWellformedness) {
    PlanStructure s = chain({"a", "b"});
    s.config["b"].contract.rules.clear();
    auto report = validate_plan(make(std::move(s)));
    EXPECT_FALSE(report.ok);
    EXPECT_TRUE(report.failed(ValidationCheck::contract_wellformed));
}

TEST(Validation, UnresolvablePredicateFailsWellformedness) {
    PlanStructure s = chain({"a"});
    s.config["a"].contract.rules = {
        {ValidationRule::Kind::predicate, "", "", {}, "no_such_predicate"}};
    auto report = validate_plan(make(std::move(s)));
    EXPECT_TRUE(report.failed(ValidationCheck::contract_wellformed));
}

TEST(Validation, HighWriteAnyOfCandidateFailsSideEffectCheck) {
    PlanStructure s = sgh::test::fork_structure(SideEffect::high_write);
    auto report = validate_plan(make(std::move(s)));
    EXPECT_FALSE(report.ok);
    EXPECT_TRUE(report.failed(ValidationCheck::side_effect_consistency));
    EXPECT_FALSE(report.failed(ValidationCheck::join_consistency));
}

TEST(Validation, DanglingEdgeFailsReachabilityOnly) {
    PlanStructure s = chain({"a", "b"});
    s.edges.emplace_back("b", "ghost");
    auto report = validate_plan(make(std::move(s)));
    EXPECT_FALSE(report.ok);
    EXPECT_TRUE(report.failed(ValidationCheck::reachability));
    EXPECT_FALSE(report.failed(ValidationCheck::acyclicity));
    EXPECT_FALSE(report.failed(ValidationCheck::join_consistency));
    EXPECT_FALSE(report.failed(ValidationCheck::contract_wellformed));
    EXPECT_FALSE(report.failed(ValidationCheck::side_effect_consistency));
}

// One fixture per check failing exactly that check; completeness of the
// five-check battery.
TEST(Validation, EachCheckHasAnExclusiveFixture) {
    struct Case {
        ValidationCheck check;
        PlanStructure structure;
    };
    std::vector<Case> cases;

    {  // acyclicity only: embedded cycle, still entry/exit connected
        PlanStructure s = chain({"s", "a", "b", "t"});
        s.edges.emplace_back("b", "a");
        cases.push_back({ValidationCheck::acyclicity, std::move(s)});
    }
    {  // reachability only: edge into an undeclared node
        PlanStructure s = chain({"a", "b"});
        s.edges.emplace_back("a", "ghost");
        cases.push_back({ValidationCheck::reachability, std::move(s)});
    }
    {  // join consistency only: any_of group of one
        PlanStructure s = chain({"a", "b", "c"});
        s.config["b"].any_of_group = "solo";
        cases.push_back({ValidationCheck::join_consistency, std::move(s)});
    }
    {  // contract wellformedness only: empty rule list
        PlanStructure s = chain({"a", "b"});
        s.config["a"].contract.rules.clear();
        cases.push_back({ValidationCheck::contract_wellformed, std::move(s)});
    }
    {  // side-effect consistency only: high_write candidate in a group
        cases.push_back({ValidationCheck::side_effect_consistency,
                         sgh::test::fork_structure(SideEffect::high_write)});
    }

    for (auto& c : cases) {
        auto report = validate_plan(make(std::move(c.structure)));
        EXPECT_FALSE(report.ok);
        for (auto check : {ValidationCheck::acyclicity, ValidationCheck::reachability,
                           ValidationCheck::join_consistency, ValidationCheck::contract_wellformed,
                           ValidationCheck::side_effect_consistency}) {
            EXPECT_EQ(report.failed(check), check == c.check)
                << "fixture for " << to_string(c.check) << " vs check " << to_string(check);
        }
    }
}

TEST(TopologicalOrder, TieBreaksByAscendingId) {
    PlanStructure s;
    for (const char* n : {"a", "c", "b"}) {
        s.nodes.push_back(n);
        s.config[n] = basic_config();
    }
    s.edges = {{"a", "b"}, {"a", "c"}};
    s.plan_contract = result_contract();
    auto order = topological_order(make(std::move(s)));
    EXPECT_EQ(order, (std::vector<NodeId>{"a", "b", "c"}));
}

TEST(TopologicalOrder, SingleNode) {
    auto order = topological_order(make(chain({"only"})));
    EXPECT_EQ(order, (std::vector<NodeId>{"only"}));
}

TEST(TopologicalOrder, GoldenPlanRespectsEveryEdge) {
    Plan plan = golden_plan();
    auto order = topological_order(plan);
    ASSERT_EQ(order.size(), plan.nodes().size());
    auto index = [&](const NodeId& n) {
        return std::distance(order.begin(), std::find(order.begin(), order.end(), n));
    };
    // Brute-force oracle: every edge goes forward in the order.
    for (const auto& [from, to] : plan.edges()) EXPECT_LT(index(from), index(to)) << from << "->" << to;
    EXPECT_LT(index("search_auth"), index("read_auth"));
    EXPECT_LT(index("read_utils"), index("analyze"));
}

TEST(TopologicalOrder, ThrowsOnCycle) {
    PlanStructure s = chain({"a", "b"});
    s.edges.emplace_back("b", "a");
    EXPECT_THROW(topological_order(make(std::move(s))), CycleDetected);
}

TEST(TopologicalOrder, DeterministicAcrossCalls) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 20; ++i) {
        Plan plan = make(sgh::test::random_dag(rng, 12));
        EXPECT_EQ(topological_order(plan), topological_order(plan));
    }
}

TEST(Replan, VersionIncrementsAndIdSticks) {
    Plan v1 = make(chain({"a", "b"}), "my-plan");
    Plan v2 = derive_replan(v1, chain({"a", "b", "c"}), "extend");
    EXPECT_EQ(v2.version(), 2);
    EXPECT_EQ(v2.id(), "my-plan");
    EXPECT_EQ(v1.version(), 1);
    EXPECT_EQ(v1.nodes().size(), 2u);
}

TEST(Replan, CyclicStructureRefused) {
    Plan v1 = make(chain({"a", "b"}));
    PlanStructure bad = chain({"a", "b"});
    bad.edges.emplace_back("b", "a");
    EXPECT_THROW(derive_replan(v1, std::move(bad), "bad"), InvalidStructure);
}

TEST(Replan, VersionsAreGapless) {
    Plan p = make(chain({"a"}));
    for (int expected = 2; expected <= 6; ++expected) {
        p = derive_replan(p, chain({"a"}), "again");
        EXPECT_EQ(p.version(), expected);
    }
}

TEST(Parse, RoundTripsGoldenPlan) {
    Plan plan = golden_plan();
    Plan reparsed = parse_plan(plan_to_json(plan).dump());
    EXPECT_EQ(plan_to_json(plan), plan_to_json(reparsed));
    EXPECT_EQ(plan.structure_digest(), reparsed.structure_digest());
}

TEST(Parse, MinimalDocument) {
    Plan plan = parse_plan(R"({
        "id": "mini", "version": 1,
        "nodes": [{"id": "a", "action": "ok", "join": "all_of", "retry_budget": 0,
                   "timeout_ms": 1000, "side_effect": "read_only",
                   "contract": {"method": "syntactic",
                                "rules": [{"kind": "field_present", "field": "result"}]}}],
        "edges": [],
        "plan_contract": {"method": "syntactic",
                          "rules": [{"kind": "field_present", "field": "result"}]}
    })");
    EXPECT_EQ(plan.nodes().size(), 1u);
    EXPECT_TRUE(validate_plan(plan).ok);
}

TEST(Parse, DuplicateNodeIdRejected) {
    std::string doc = R"({
        "id": "dup", "version": 1,
        "nodes": [
          {"id": "a", "action": "ok", "join": "all_of", "retry_budget": 0, "timeout_ms": 1,
           "side_effect": "read_only",
           "contract": {"method": "syntactic", "rules": [{"kind": "field_present", "field": "x"}]}},
          {"id": "a", "action": "ok", "join": "all_of", "retry_budget": 0, "timeout_ms": 1,
           "side_effect": "read_only",
           "contract": {"method": "syntactic", "rules": [{"kind": "field_present", "field": "x"}]}}
        ],
        "edges": [], "plan_contract": {"method": "syntactic",
                                       "rules": [{"kind": "field_present", "field": "x"}]}
    })";
    EXPECT_THROW(parse_plan(doc), DuplicateNodeId);
}

TEST(Parse, MissingContractIsMissingField) {
    std::string doc = R"({
        "id": "m", "version": 1,
        "nodes": [{"id": "a", "action": "ok", "join": "all_of", "retry_budget": 0,
                   "timeout_ms": 1, "side_effect": "read_only"}],
        "edges": [], "plan_contract": {"method": "syntactic",
                                       "rules": [{"kind": "field_present", "field": "x"}]}
    })";
    EXPECT_THROW(parse_plan(doc), MissingField);
}

TEST(Parse, UnknownKeysRejected) {
    std::string doc = R"({"id": "u", "version": 1, "nodes": [], "edges": [],
                          "plan_contract": {"method": "syntactic", "rules": []},
                          "surprise": true})";
    EXPECT_THROW(parse_plan(doc), ParseError);
}

TEST(Parse, MalformedJsonIsParseError) {
    EXPECT_THROW(parse_plan("{not json"), ParseError);
}

TEST(Plan, StructureDigestIgnoresConfig) {
    PlanStructure a = chain({"x", "y"});
    PlanStructure b = chain({"x", "y"});
    b.config["x"].retry_budget = 99;
    EXPECT_EQ(make(a).structure_digest(), make(b).structure_digest());

    PlanStructure c = chain({"x", "y", "z"});
    EXPECT_NE(make(a).structure_digest(), make(c).structure_digest());
}

TEST(Plan, ValidationSoundnessOnRandomDags) {
    std::mt19937_64 rng(41);
    for (int i = 0; i < 50; ++i) {
        Plan plan = make(sgh::test::random_dag(rng, 3 + static_cast<int>(rng() % 15)));
        auto report = validate_plan(plan);
        ASSERT_TRUE(report.ok) << report.to_text();
        auto order = topological_order(plan);
        EXPECT_EQ(order.size(), plan.nodes().size());
        std::set<NodeId> seen(order.begin(), order.end());
        EXPECT_EQ(seen.size(), plan.nodes().size());
    }
}
