#include "sgh/executor.hpp"

#include <gtest/gtest.h>

#include "support/fixtures.hpp"

using namespace sgh;
using sgh::test::basic_config;
using sgh::test::result_contract;

TEST(ContractValidation, SingleFieldPass) {
    auto results = validate_contract(Json{{"result", 1}}, result_contract());
    ASSERT_EQ(results.size(), 1u);
    EXPECT_TRUE(results[0].pass);
}

TEST(ContractValidation, EmptyPayloadFails) {
    auto results = validate_contract(Json::object(), result_contract());
    ASSERT_EQ(results.size(), 1u);
    EXPECT_FALSE(results[0].pass);
    EXPECT_FALSE(all_pass(results));
}

TEST(ContractValidation, FullReportNoShortCircuit) {
    OutputContract c;
    c.rules = {{ValidationRule::Kind::field_present, "a", "", {}, ""},
               {ValidationRule::Kind::field_present, "b", "", {}, ""},
               {ValidationRule::Kind::field_type, "a", "number", {}, ""}};
    auto results = validate_contract(Json{{"a", 1}}, c);
    ASSERT_EQ(results.size(), 3u);
    EXPECT_TRUE(results[0].pass);
    EXPECT_FALSE(results[1].pass);  // the middle rule fails, the rest still ran
    EXPECT_TRUE(results[2].pass);
}

TEST(ContractValidation, TypeEnumAndPredicateRules) {
    OutputContract c;
    c.rules = {{ValidationRule::Kind::field_type, "n", "number", {}, ""},
               {ValidationRule::Kind::field_enum, "status", "", {"ok", "skipped"}, ""},
               {ValidationRule::Kind::predicate, "", "", {}, "non_empty"}};
    auto pass = validate_contract(Json{{"n", 3}, {"status", "ok"}}, c);
    EXPECT_TRUE(all_pass(pass));

    auto fail = validate_contract(Json{{"n", "three"}, {"status", "bad"}}, c);
    EXPECT_FALSE(fail[0].pass);
    EXPECT_FALSE(fail[1].pass);
    EXPECT_TRUE(fail[2].pass);
}

TEST(ContractValidation, UnknownPredicateThrows) {
    OutputContract c;
    c.rules = {{ValidationRule::Kind::predicate, "", "", {}, "mystery"}};
    EXPECT_THROW(validate_contract(Json::object(), c), UnknownPredicate);
}

TEST(FaultScript, ParsesAndConsumesPerAttempt) {
    auto fs = FaultScript::parse(R"({
        "a": [{"op": "fail", "kind": "transient"}, {"op": "succeed", "payload": {"result": 9}}],
        "b": [{"op": "hang", "ms": 50}]
    })");
    auto e1 = fs.next("a");
    ASSERT_TRUE(e1.has_value());
    EXPECT_EQ(e1->op, FaultScript::Entry::Op::fail);
    EXPECT_EQ(e1->kind, "transient");
    auto e2 = fs.next("a");
    ASSERT_TRUE(e2.has_value());
    EXPECT_EQ(e2->op, FaultScript::Entry::Op::succeed);
    EXPECT_FALSE(fs.next("a").has_value());
    EXPECT_TRUE(fs.was_scripted("a"));
    EXPECT_FALSE(fs.was_scripted("zzz"));
}

TEST(FaultScript, UnknownOpRejected) {
    EXPECT_THROW(FaultScript::parse(R"({"a": [{"op": "explode"}]})"), ParseError);
    EXPECT_THROW(FaultScript::parse(R"({"a": [{"op": "fail", "bogus": 1}]})"), ParseError);
}

TEST(ConformingPayload, SatisfiesItsContract) {
    OutputContract c;
    c.rules = {{ValidationRule::Kind::field_present, "answer", "", {}, ""},
               {ValidationRule::Kind::field_type, "count", "number", {}, ""},
               {ValidationRule::Kind::field_enum, "mode", "", {"fast", "slow"}, ""},
               {ValidationRule::Kind::predicate, "", "", {}, "non_empty"}};
    EXPECT_TRUE(all_pass(validate_contract(conforming_payload(c), c)));
}

TEST(ScriptedExecutor, ScriptOverridesAction) {
    FaultScript fs;
    fs.add("n", {FaultScript::Entry::Op::fail, std::nullopt, "network", std::nullopt});
    ScriptedExecutor ex(ActionRegistry::standard_mocks(), std::move(fs));
    ContextStore store(ContextScope::exec);

    auto first = ex.start("n", basic_config(), store, Json::object(), 100);
    ASSERT_TRUE(first.completes_at.has_value());
    EXPECT_EQ(*first.completes_at, 101);
    EXPECT_EQ(first.result.kind, AttemptResult::Kind::failure);
    EXPECT_EQ(first.result.failure.tag, "network");

    // Exhausted script: conforming success.
    auto second = ex.start("n", basic_config(), store, Json::object(), 200);
    EXPECT_EQ(second.result.kind, AttemptResult::Kind::output);
    EXPECT_TRUE(all_pass(validate_contract(second.result.payload, basic_config().contract)));
}

TEST(ScriptedExecutor, HangHasNoCompletion) {
    FaultScript fs;
    fs.add("n", {FaultScript::Entry::Op::hang, std::nullopt, "", std::int64_t{5000}});
    ScriptedExecutor ex(ActionRegistry::standard_mocks(), std::move(fs));
    ContextStore store(ContextScope::exec);
    auto pending = ex.start("n", basic_config(), store, Json::object(), 0);
    EXPECT_FALSE(pending.completes_at.has_value());
    EXPECT_EQ(pending.result.kind, AttemptResult::Kind::hang);
}

TEST(ScriptedExecutor, UnscriptedNodeRunsRegisteredAction) {
    ScriptedExecutor ex(ActionRegistry::standard_mocks(), FaultScript{});
    ContextStore store(ContextScope::exec);
    auto pending = ex.start("n", basic_config("emit_raw"), store, Json::object(), 0);
    EXPECT_EQ(pending.result.kind, AttemptResult::Kind::output);
    EXPECT_EQ(pending.result.payload, (Json{{"raw", 1}}));
}

TEST(ScriptedExecutor, UnknownActionThrows) {
    ScriptedExecutor ex(ActionRegistry::standard_mocks(), FaultScript{});
    ContextStore store(ContextScope::exec);
    EXPECT_THROW(ex.start("n", basic_config("not_registered"), store, Json::object(), 0),
                 UnknownAction);
}

TEST(ScriptedExecutor, DurationOverrides) {
    FaultScript fs;
    fs.add("n", {FaultScript::Entry::Op::succeed, std::nullopt, "", std::int64_t{42}});
    ScriptedExecutor ex(ActionRegistry::standard_mocks(), std::move(fs), {{"n", 7}});
    ContextStore store(ContextScope::exec);
    auto scripted = ex.start("n", basic_config(), store, Json::object(), 0);
    EXPECT_EQ(*scripted.completes_at, 42);  // entry ms wins
    auto exhausted = ex.start("n", basic_config(), store, Json::object(), 0);
    EXPECT_EQ(*exhausted.completes_at, 7);  // per-node duration
}

TEST(ScriptedExecutor, DeterministicSequences) {
    auto make_script = [] {
        FaultScript fs;
        fs.add("n", {FaultScript::Entry::Op::fail, std::nullopt, "transient", std::nullopt});
        fs.add("n", {FaultScript::Entry::Op::succeed, Json{{"result", 5}}, "", std::nullopt});
        return fs;
    };
    ContextStore store(ContextScope::exec);
    std::vector<std::string> a, b;
    for (auto* out : {&a, &b}) {
        ScriptedExecutor ex(ActionRegistry::standard_mocks(), make_script());
        for (int i = 0; i < 3; ++i) {
            auto p = ex.start("n", basic_config(), store, Json::object(), i);
            out->push_back(p.result.kind == AttemptResult::Kind::output
                               ? p.result.payload.dump()
                               : p.result.failure.tag);
        }
    }
    EXPECT_EQ(a, b);
}

TEST(ContextIsolation, ActionCannotReadDiagContext) {
    ActionRegistry reg;
    ContextStore diag(ContextScope::diag);
    diag.put("secret", 1);
    reg.add("nosy", {[&diag](const ContextStore&, const Json&) {
                         diag.get("secret");  // must throw
                         return AttemptResult{};
                     },
                     SideEffect::read_only});
    ScriptedExecutor ex(std::move(reg), FaultScript{});
    ContextStore exec_store(ContextScope::exec);
    NodeConfig cfg = basic_config("nosy");
    EXPECT_THROW(ex.start("n", cfg, exec_store, Json::object(), 0), ContextViolation);
}

TEST(ContextIsolation, ActionMayReadExecContext) {
    ActionRegistry reg;
    reg.add("reader", {[](const ContextStore& exec, const Json&) {
                           AttemptResult r;
                           r.payload = Json{{"result", exec.get("plan_id")}};
                           return r;
                       },
                       SideEffect::read_only});
    ScriptedExecutor ex(std::move(reg), FaultScript{});
    ContextStore exec_store(ContextScope::exec);
    exec_store.put("plan_id", "p1");
    auto pending = ex.start("n", basic_config("reader"), exec_store, Json::object(), 0);
    EXPECT_EQ(pending.result.payload.at("result"), "p1");
    EXPECT_GT(exec_store.read_count(), 0u);
}
