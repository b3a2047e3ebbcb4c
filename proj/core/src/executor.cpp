#include "sgh/executor.hpp"

#include <algorithm>

namespace sgh {

namespace {

bool json_type_matches(const Json& v, const std::string& type_name) {
    if (type_name == "string") return v.is_string();
    if (type_name == "number") return v.is_number();
    if (type_name == "boolean") return v.is_boolean();
    if (type_name == "object") return v.is_object();
    if (type_name == "array") return v.is_array();
    return false;
}

}  // namespace

std::vector<RuleResult> validate_contract(const Json& payload, const OutputContract& contract,
                                          const PredicateRegistry& predicates) {
    std::vector<RuleResult> results;
    results.reserve(contract.rules.size());
    for (const auto& rule : contract.rules) {
        RuleResult r;
        r.rule = rule.describe();
        switch (rule.kind) {
            case ValidationRule::Kind::field_present:
                r.pass = payload.is_object() && payload.contains(rule.field);
                if (!r.pass) r.message = "field '" + rule.field + "' missing";
                break;
            case ValidationRule::Kind::field_type:
                r.pass = payload.is_object() && payload.contains(rule.field) &&
                         json_type_matches(payload.at(rule.field), rule.type_name);
                if (!r.pass) r.message = "field '" + rule.field + "' is not a " + rule.type_name;
                break;
            case ValidationRule::Kind::field_enum: {
                r.pass = false;
                if (payload.is_object() && payload.contains(rule.field) &&
                    payload.at(rule.field).is_string()) {
                    const auto& v = payload.at(rule.field).get_ref<const std::string&>();
                    r.pass = std::find(rule.values.begin(), rule.values.end(), v) !=
                             rule.values.end();
                }
                if (!r.pass) r.message = "field '" + rule.field + "' outside the allowed set";
                break;
            }
            case ValidationRule::Kind::predicate:
                // Unregistered names are caught by plan validation; throwing
                // here covers directly-constructed contracts.
                r.pass = predicates.at(rule.predicate)(payload);
                if (!r.pass) r.message = "predicate '" + rule.predicate + "' rejected the payload";
                break;
        }
        results.push_back(std::move(r));
    }
    return results;
}

const ActionDef& ActionRegistry::at(const std::string& name) const {
    auto it = actions_.find(name);
    if (it == actions_.end()) throw UnknownAction(name);
    return it->second;
}

ActionRegistry ActionRegistry::standard_mocks() {
    ActionRegistry reg;
    auto ok_action = ActionDef{[](const ContextStore&, const Json&) {
                                   AttemptResult r;
                                   r.payload = Json{{"result", "ok"}};
                                   return r;
                               },
                               SideEffect::read_only};
    reg.add("ok", ok_action);
    // Task-flavored aliases so plan documents read naturally.
    for (const char* name : {"search_code", "read_file", "analyze", "write_fix", "run_tests",
                             "update_docs", "report", "deploy"})
        reg.add(name, ok_action);
    reg.add("emit_raw", {[](const ContextStore&, const Json&) {
                             AttemptResult r;
                             r.payload = Json{{"raw", 1}};
                             return r;
                         },
                         SideEffect::read_only});
    reg.add("echo_inputs", {[](const ContextStore&, const Json& inputs) {
                                AttemptResult r;
                                r.payload = Json{{"result", "ok"}, {"inputs", inputs}};
                                return r;
                            },
                            SideEffect::read_only});
    return reg;
}

std::optional<FaultScript::Entry> FaultScript::next(const NodeId& node) {
    auto it = scripts_.find(node);
    if (it == scripts_.end() || it->second.empty()) return std::nullopt;
    Entry e = std::move(it->second.front());
    it->second.pop_front();
    return e;
}

bool FaultScript::has_entries(const NodeId& node) const {
    auto it = scripts_.find(node);
    return it != scripts_.end() && !it->second.empty();
}

FaultScript FaultScript::from_json(const Json& doc) {
    if (!doc.is_object()) throw ParseError("<root>", "fault script must map node id to entries");
    FaultScript fs;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!it.value().is_array())
            throw ParseError(it.key(), "entries must be an array");
        fs.declare(it.key());
        for (const auto& ej : it.value()) {
            if (!ej.is_object() || !ej.contains("op"))
                throw ParseError(it.key(), "each entry needs an 'op'");
            Entry e;
            std::string op = ej.at("op").get<std::string>();
            if (op == "succeed") {
                e.op = Entry::Op::succeed;
                if (ej.contains("payload")) e.payload = ej.at("payload");
            } else if (op == "fail") {
                e.op = Entry::Op::fail;
                e.kind = ej.value("kind", "unknown");
            } else if (op == "hang") {
                e.op = Entry::Op::hang;
            } else {
                throw ParseError(it.key(), "unknown op '" + op + "'");
            }
            if (ej.contains("ms")) e.ms = ej.at("ms").get<std::int64_t>();
            for (auto f = ej.begin(); f != ej.end(); ++f) {
                const std::string& k = f.key();
                if (k != "op" && k != "payload" && k != "kind" && k != "ms")
                    throw ParseError(it.key(), "unknown field '" + k + "'");
            }
            fs.add(it.key(), std::move(e));
        }
    }
    return fs;
}

FaultScript FaultScript::parse(const std::string& document) {
    Json doc;
    try {
        doc = Json::parse(document);
    } catch (const Json::parse_error& e) {
        throw ParseError("byte " + std::to_string(e.byte), e.what());
    }
    return from_json(doc);
}

Json FaultScript::to_json() const {
    Json doc = Json::object();
    for (const auto& [node, entries] : scripts_) {
        Json arr = Json::array();
        for (const auto& e : entries) {
            Json ej;
            switch (e.op) {
                case Entry::Op::succeed:
                    ej["op"] = "succeed";
                    if (e.payload) ej["payload"] = *e.payload;
                    break;
                case Entry::Op::fail:
                    ej["op"] = "fail";
                    ej["kind"] = e.kind;
                    break;
                case Entry::Op::hang:
                    ej["op"] = "hang";
                    break;
            }
            if (e.ms) ej["ms"] = *e.ms;
            arr.push_back(ej);
        }
        doc[node] = arr;
    }
    return doc;
}

Json conforming_payload(const OutputContract& contract) {
    Json payload = Json::object();
    for (const auto& rule : contract.rules) {
        switch (rule.kind) {
            case ValidationRule::Kind::field_present:
                if (!payload.contains(rule.field)) payload[rule.field] = "ok";
                break;
            case ValidationRule::Kind::field_type:
                if (rule.type_name == "string") payload[rule.field] = "ok";
                else if (rule.type_name == "number") payload[rule.field] = 0;
                else if (rule.type_name == "boolean") payload[rule.field] = true;
                else if (rule.type_name == "object") payload[rule.field] = Json::object();
                else if (rule.type_name == "array") payload[rule.field] = Json::array();
                break;
            case ValidationRule::Kind::field_enum:
                if (!rule.values.empty()) payload[rule.field] = rule.values.front();
                break;
            case ValidationRule::Kind::predicate:
                // The built-ins are satisfied by any non-empty payload with
                // a result field.
                if (!payload.contains("result")) payload["result"] = "ok";
                break;
        }
    }
    if (payload.empty()) payload["result"] = "ok";
    return payload;
}

std::int64_t ScriptedExecutor::duration_for(const NodeId& node) const {
    auto it = durations_.find(node);
    return it == durations_.end() ? default_duration_ : it->second;
}

PendingExecution ScriptedExecutor::start(const NodeId& node, const NodeConfig& cfg,
                                         const ContextStore& exec, const Json& inputs,
                                         std::int64_t now) {
    PendingExecution pending;
    std::int64_t duration = duration_for(node);

    if (auto entry = script_.next(node)) {
        if (entry->ms) duration = *entry->ms;
        switch (entry->op) {
            case FaultScript::Entry::Op::succeed:
                pending.completes_at = now + duration;
                pending.result.kind = AttemptResult::Kind::output;
                pending.result.payload =
                    entry->payload ? *entry->payload : conforming_payload(cfg.contract);
                break;
            case FaultScript::Entry::Op::fail:
                pending.completes_at = now + duration;
                pending.result.kind = AttemptResult::Kind::failure;
                pending.result.failure = {entry->kind, "scripted failure"};
                break;
            case FaultScript::Entry::Op::hang:
                // Stuck call: no completion event, the deadline resolves it.
                pending.completes_at.reset();
                pending.result.kind = AttemptResult::Kind::hang;
                break;
        }
        return pending;
    }

    if (script_.was_scripted(node)) {
        // Exhausted script: succeed with a minimal conforming payload.
        pending.completes_at = now + duration;
        pending.result.kind = AttemptResult::Kind::output;
        pending.result.payload = conforming_payload(cfg.contract);
        return pending;
    }

    PrincipalScope as_action(Principal::action);
    AttemptResult r = actions_.at(cfg.action).fn(exec, inputs);
    pending.completes_at = now + duration;
    pending.result = std::move(r);
    if (pending.result.kind == AttemptResult::Kind::hang) pending.completes_at.reset();
    // A registered action with no useful payload still has to meet the
    // node's contract; top it up like an exhausted script.
    if (pending.result.kind == AttemptResult::Kind::output && pending.result.payload.is_null())
        pending.result.payload = conforming_payload(cfg.contract);
    return pending;
}

}  // namespace sgh
