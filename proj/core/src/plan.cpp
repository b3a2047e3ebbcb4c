#include "sgh/plan.hpp"

#include <algorithm>
#include <queue>
#include <sstream>

namespace sgh {

namespace {

const std::vector<NodeId> kNoNodes;

std::uint64_t fnv1a(std::uint64_t h, const std::string& s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

const char* to_string(JoinMode m) {
    return m == JoinMode::all_of ? "all_of" : "any_of";
}

const char* to_string(SideEffect s) {
    switch (s) {
        case SideEffect::read_only: return "read_only";
        case SideEffect::low_write: return "low_write";
        case SideEffect::high_write: return "high_write";
    }
    return "?";
}

const char* to_string(ValidationMethod m) {
    switch (m) {
        case ValidationMethod::syntactic: return "syntactic";
        case ValidationMethod::code_semantic: return "code_semantic";
        case ValidationMethod::external: return "external";
    }
    return "?";
}

JoinMode join_mode_from_string(const std::string& s) {
    if (s == "all_of") return JoinMode::all_of;
    if (s == "any_of") return JoinMode::any_of;
    throw ParseError("join", "unknown join mode '" + s + "'");
}

SideEffect side_effect_from_string(const std::string& s) {
    if (s == "read_only") return SideEffect::read_only;
    if (s == "low_write") return SideEffect::low_write;
    if (s == "high_write") return SideEffect::high_write;
    throw ParseError("side_effect", "unknown side effect level '" + s + "'");
}

ValidationMethod validation_method_from_string(const std::string& s) {
    if (s == "syntactic") return ValidationMethod::syntactic;
    if (s == "code_semantic") return ValidationMethod::code_semantic;
    if (s == "external") return ValidationMethod::external;
    throw ParseError("contract.method", "unknown validation method '" + s + "'");
}

std::string ValidationRule::describe() const {
    switch (kind) {
        case Kind::field_present: return "field_present:" + field;
        case Kind::field_type: return "field_type:" + field + ":" + type_name;
        case Kind::field_enum: return "field_enum:" + field;
        case Kind::predicate: return "predicate:" + predicate;
    }
    return "?";
}

const PredicateRegistry::Fn& PredicateRegistry::at(const std::string& name) const {
    auto it = fns_.find(name);
    if (it == fns_.end()) throw UnknownPredicate(name);
    return it->second;
}

const PredicateRegistry& PredicateRegistry::builtin() {
    static const PredicateRegistry reg = [] {
        PredicateRegistry r;
        r.add("non_empty", [](const Json& payload) {
            return payload.is_object() && !payload.empty();
        });
        r.add("has_result", [](const Json& payload) {
            return payload.is_object() && payload.contains("result");
        });
        return r;
    }();
    return reg;
}

// -- Plan -----------------------------------------------------------------

Plan Plan::from_structure(std::string id, int version, PlanStructure s) {
    Plan p;
    p.id_ = std::move(id);
    p.version_ = version;

    std::sort(s.nodes.begin(), s.nodes.end());
    s.nodes.erase(std::unique(s.nodes.begin(), s.nodes.end()), s.nodes.end());
    std::sort(s.edges.begin(), s.edges.end());
    s.edges.erase(std::unique(s.edges.begin(), s.edges.end()), s.edges.end());
    p.s_ = std::move(s);

    for (const auto& n : p.s_.nodes) {
        p.preds_[n];
        p.succs_[n];
        if (!p.s_.config.count(n)) p.s_.config[n] = NodeConfig{};
        const auto& cfg = p.s_.config.at(n);
        if (cfg.any_of_group) p.groups_[*cfg.any_of_group].push_back(n);
    }
    for (const auto& [from, to] : p.s_.edges) {
        if (!p.s_.config.count(from) || !p.s_.config.count(to)) {
            p.dangling_.emplace_back(from, to);
            continue;
        }
        p.succs_[from].push_back(to);
        p.preds_[to].push_back(from);
    }
    for (auto& [_, v] : p.preds_) std::sort(v.begin(), v.end());
    for (auto& [_, v] : p.succs_) std::sort(v.begin(), v.end());
    return p;
}

const NodeConfig& Plan::config(const NodeId& node) const {
    auto it = s_.config.find(node);
    if (it == s_.config.end()) throw Error("unknown node '" + node + "'");
    return it->second;
}

const std::vector<NodeId>& Plan::predecessors(const NodeId& node) const {
    auto it = preds_.find(node);
    return it == preds_.end() ? kNoNodes : it->second;
}

const std::vector<NodeId>& Plan::successors(const NodeId& node) const {
    auto it = succs_.find(node);
    return it == succs_.end() ? kNoNodes : it->second;
}

std::optional<std::string> Plan::group_of(const NodeId& node) const {
    auto it = s_.config.find(node);
    if (it == s_.config.end()) return std::nullopt;
    return it->second.any_of_group;
}

std::vector<NodeId> Plan::entry_nodes() const {
    std::vector<NodeId> out;
    for (const auto& n : s_.nodes)
        if (predecessors(n).empty()) out.push_back(n);
    return out;
}

std::vector<NodeId> Plan::exit_nodes() const {
    std::vector<NodeId> out;
    for (const auto& n : s_.nodes)
        if (successors(n).empty()) out.push_back(n);
    return out;
}

std::uint64_t Plan::structure_digest() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& n : s_.nodes) h = fnv1a(fnv1a(h, "n:"), n);
    for (const auto& [a, b] : s_.edges) h = fnv1a(fnv1a(fnv1a(h, "e:"), a), b);
    return h;
}

// -- validation -----------------------------------------------------------

const char* to_string(ValidationCheck c) {
    switch (c) {
        case ValidationCheck::acyclicity: return "acyclicity";
        case ValidationCheck::reachability: return "reachability";
        case ValidationCheck::join_consistency: return "join_consistency";
        case ValidationCheck::contract_wellformed: return "contract_wellformed";
        case ValidationCheck::side_effect_consistency: return "side_effect_consistency";
    }
    return "?";
}

bool ValidationReport::failed(ValidationCheck c) const {
    return std::any_of(failures.begin(), failures.end(),
                       [&](const ValidationFailure& f) { return f.check == c; });
}

std::string ValidationReport::to_text() const {
    if (ok) return "plan valid\n";
    std::ostringstream os;
    for (const auto& f : failures)
        os << to_string(f.check) << " [" << f.subject << "] " << f.message << "\n";
    return os.str();
}

Json ValidationReport::to_json() const {
    Json fs = Json::array();
    for (const auto& f : failures)
        fs.push_back({{"check", to_string(f.check)}, {"subject", f.subject}, {"message", f.message}});
    return Json{{"ok", ok}, {"failures", fs}};
}

namespace {

// Kahn's algorithm with min-id tie break. Returns the ordered prefix;
// if it is shorter than |V|, the remaining nodes are cycle-trapped.
std::vector<NodeId> kahn_order(const Plan& plan) {
    std::map<NodeId, int> indeg;
    for (const auto& n : plan.nodes()) indeg[n] = static_cast<int>(plan.predecessors(n).size());
    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> q;
    for (const auto& [n, d] : indeg)
        if (d == 0) q.push(n);
    std::vector<NodeId> order;
    while (!q.empty()) {
        NodeId n = q.top();
        q.pop();
        order.push_back(n);
        for (const auto& s : plan.successors(n))
            if (--indeg[s] == 0) q.push(s);
    }
    return order;
}

void check_acyclicity(const Plan& plan, ValidationReport& report) {
    auto order = kahn_order(plan);
    if (order.size() == plan.nodes().size()) return;
    std::set<NodeId> sorted(order.begin(), order.end());
    for (const auto& n : plan.nodes()) {
        if (!sorted.count(n)) {
            report.failures.push_back({ValidationCheck::acyclicity, n,
                                       "node is part of a cycle (Kahn's sort left it unordered)"});
        }
    }
}

void check_reachability(const Plan& plan, ValidationReport& report) {
    for (const auto& [from, to] : plan.dangling_edges()) {
        report.failures.push_back({ValidationCheck::reachability, from + "->" + to,
                                   "edge references an undeclared node"});
    }

    auto bfs = [&](const std::vector<NodeId>& roots, bool forward) {
        std::set<NodeId> seen(roots.begin(), roots.end());
        std::vector<NodeId> frontier = roots;
        while (!frontier.empty()) {
            NodeId n = frontier.back();
            frontier.pop_back();
            for (const auto& next : forward ? plan.successors(n) : plan.predecessors(n))
                if (seen.insert(next).second) frontier.push_back(next);
        }
        return seen;
    };

    auto from_entry = bfs(plan.entry_nodes(), true);
    auto to_exit = bfs(plan.exit_nodes(), false);
    for (const auto& n : plan.nodes()) {
        if (!from_entry.count(n))
            report.failures.push_back(
                {ValidationCheck::reachability, n, "not reachable from any entry node"});
        if (!to_exit.count(n))
            report.failures.push_back(
                {ValidationCheck::reachability, n, "has no path to any exit node"});
    }
}

void check_join_consistency(const Plan& plan, ValidationReport& report) {
    for (const auto& [group, members] : plan.any_of_groups()) {
        if (members.size() < 2) {
            report.failures.push_back({ValidationCheck::join_consistency, group,
                                       "any_of group needs at least two candidates, has " +
                                           std::to_string(members.size())});
        }
    }
    for (const auto& n : plan.nodes()) {
        if (plan.config(n).join != JoinMode::any_of) continue;
        const auto& preds = plan.predecessors(n);
        if (preds.size() < 2) {
            report.failures.push_back({ValidationCheck::join_consistency, n,
                                       "any_of join needs at least two candidate predecessors"});
            continue;
        }
        std::optional<std::string> group;
        bool consistent = true;
        for (const auto& p : preds) {
            auto g = plan.group_of(p);
            if (!g) {
                report.failures.push_back({ValidationCheck::join_consistency, n,
                                           "any_of candidate '" + p + "' carries no any_of_group"});
                consistent = false;
                break;
            }
            if (!group) group = g;
            if (*g != *group) {
                report.failures.push_back({ValidationCheck::join_consistency, n,
                                           "any_of candidates span multiple groups"});
                consistent = false;
                break;
            }
        }
        if (consistent && group) {
            const auto& members = plan.any_of_groups().at(*group);
            if (members != preds) {
                report.failures.push_back({ValidationCheck::join_consistency, n,
                                           "candidate set differs from the members of group '" +
                                               *group + "'"});
            }
        }
    }
}

void check_contract(const std::string& subject, const OutputContract& c,
                    const PredicateRegistry& predicates, ValidationReport& report) {
    if (c.rules.empty()) {
        report.failures.push_back({ValidationCheck::contract_wellformed, subject,
                                   "contract must carry at least one validation rule"});
        return;
    }
    for (const auto& rule : c.rules) {
        switch (rule.kind) {
            case ValidationRule::Kind::field_present:
            case ValidationRule::Kind::field_type:
                if (rule.field.empty())
                    report.failures.push_back({ValidationCheck::contract_wellformed, subject,
                                               "rule '" + rule.describe() + "' names no field"});
                break;
            case ValidationRule::Kind::field_enum:
                if (rule.field.empty() || rule.values.empty())
                    report.failures.push_back({ValidationCheck::contract_wellformed, subject,
                                               "enum rule needs a field and a non-empty value set"});
                break;
            case ValidationRule::Kind::predicate:
                if (!predicates.contains(rule.predicate))
                    report.failures.push_back({ValidationCheck::contract_wellformed, subject,
                                               "predicate '" + rule.predicate + "' is not registered"});
                break;
        }
    }
}

void check_side_effects(const Plan& plan, ValidationReport& report) {
    for (const auto& n : plan.nodes()) {
        const auto& cfg = plan.config(n);
        if (cfg.side_effect == SideEffect::high_write && cfg.any_of_group) {
            report.failures.push_back(
                {ValidationCheck::side_effect_consistency, n,
                 "high_write node in any_of group '" + *cfg.any_of_group +
                     "' would be dispatched speculatively"});
        }
    }
}

}  // namespace

ValidationReport validate_plan(const Plan& plan, const PredicateRegistry& predicates) {
    ValidationReport report;
    check_acyclicity(plan, report);
    check_reachability(plan, report);
    check_join_consistency(plan, report);
    for (const auto& n : plan.nodes())
        check_contract(n, plan.config(n).contract, predicates, report);
    check_contract("<plan>", plan.plan_contract(), predicates, report);
    check_side_effects(plan, report);
    report.ok = report.failures.empty();
    return report;
}

std::vector<NodeId> topological_order(const Plan& plan) {
    auto order = kahn_order(plan);
    if (order.size() != plan.nodes().size())
        throw CycleDetected("Kahn's sort ordered " + std::to_string(order.size()) + " of " +
                            std::to_string(plan.nodes().size()) + " nodes");
    return order;
}

Plan derive_replan(const Plan& old_plan, PlanStructure next, const std::string& reason,
                   const PredicateRegistry& predicates) {
    Plan candidate = Plan::from_structure(old_plan.id(), old_plan.version() + 1, std::move(next));
    auto report = validate_plan(candidate, predicates);
    if (!report.ok)
        throw InvalidStructure("replan '" + reason + "' failed validation:\n" + report.to_text());
    return candidate;
}

// -- JSON format ----------------------------------------------------------

namespace {

void require_keys(const Json& obj, const std::string& where,
                  const std::set<std::string>& required, const std::set<std::string>& optional) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!required.count(it.key()) && !optional.count(it.key()))
            throw ParseError(where, "unknown field '" + it.key() + "'");
    }
    for (const auto& k : required) {
        if (!obj.contains(k)) throw MissingField(where, k);
    }
}

ValidationRule rule_from_json(const Json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(where, "rule must be an object");
    if (!j.contains("kind")) throw MissingField(where, "kind");
    std::string kind = j.at("kind").get<std::string>();
    ValidationRule rule;
    if (kind == "field_present") {
        require_keys(j, where, {"kind", "field"}, {});
        rule.kind = ValidationRule::Kind::field_present;
        rule.field = j.at("field").get<std::string>();
    } else if (kind == "field_type") {
        require_keys(j, where, {"kind", "field", "type"}, {});
        rule.kind = ValidationRule::Kind::field_type;
        rule.field = j.at("field").get<std::string>();
        rule.type_name = j.at("type").get<std::string>();
    } else if (kind == "field_enum") {
        require_keys(j, where, {"kind", "field", "values"}, {});
        rule.kind = ValidationRule::Kind::field_enum;
        rule.field = j.at("field").get<std::string>();
        for (const auto& v : j.at("values")) rule.values.push_back(v.get<std::string>());
    } else if (kind == "predicate") {
        require_keys(j, where, {"kind", "name"}, {});
        rule.kind = ValidationRule::Kind::predicate;
        rule.predicate = j.at("name").get<std::string>();
    } else {
        throw ParseError(where, "unknown rule kind '" + kind + "'");
    }
    return rule;
}

Json rule_to_json(const ValidationRule& rule) {
    switch (rule.kind) {
        case ValidationRule::Kind::field_present:
            return Json{{"kind", "field_present"}, {"field", rule.field}};
        case ValidationRule::Kind::field_type:
            return Json{{"kind", "field_type"}, {"field", rule.field}, {"type", rule.type_name}};
        case ValidationRule::Kind::field_enum:
            return Json{{"kind", "field_enum"}, {"field", rule.field}, {"values", rule.values}};
        case ValidationRule::Kind::predicate:
            return Json{{"kind", "predicate"}, {"name", rule.predicate}};
    }
    return {};
}

}  // namespace

OutputContract contract_from_json(const Json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(where, "contract must be an object");
    require_keys(j, where, {"method", "rules"}, {});
    OutputContract c;
    c.method = validation_method_from_string(j.at("method").get<std::string>());
    if (!j.at("rules").is_array()) throw ParseError(where + ".rules", "must be an array");
    int i = 0;
    for (const auto& r : j.at("rules"))
        c.rules.push_back(rule_from_json(r, where + ".rules[" + std::to_string(i++) + "]"));
    return c;
}

Json contract_to_json(const OutputContract& c) {
    Json rules = Json::array();
    for (const auto& r : c.rules) rules.push_back(rule_to_json(r));
    return Json{{"method", to_string(c.method)}, {"rules", rules}};
}

NodeConfig node_config_from_json(const Json& j, const std::string& where) {
    require_keys(j, where,
                 {"action", "join", "retry_budget", "timeout_ms", "side_effect", "contract"},
                 {"any_of_group", "id"});
    NodeConfig cfg;
    cfg.action = j.at("action").get<std::string>();
    cfg.join = join_mode_from_string(j.at("join").get<std::string>());
    if (j.contains("any_of_group")) cfg.any_of_group = j.at("any_of_group").get<std::string>();
    if (!j.at("retry_budget").is_number_integer() || j.at("retry_budget").get<int>() < 0)
        throw ParseError(where + ".retry_budget", "must be a non-negative integer");
    cfg.retry_budget = j.at("retry_budget").get<int>();
    if (!j.at("timeout_ms").is_number_integer() || j.at("timeout_ms").get<std::int64_t>() <= 0)
        throw ParseError(where + ".timeout_ms", "must be a positive integer");
    cfg.timeout_ms = j.at("timeout_ms").get<std::int64_t>();
    cfg.side_effect = side_effect_from_string(j.at("side_effect").get<std::string>());
    cfg.contract = contract_from_json(j.at("contract"), where + ".contract");
    return cfg;
}

Json node_config_to_json(const NodeConfig& cfg) {
    Json j{{"action", cfg.action},
           {"join", to_string(cfg.join)},
           {"retry_budget", cfg.retry_budget},
           {"timeout_ms", cfg.timeout_ms},
           {"side_effect", to_string(cfg.side_effect)},
           {"contract", contract_to_json(cfg.contract)}};
    if (cfg.any_of_group) j["any_of_group"] = *cfg.any_of_group;
    return j;
}

Plan plan_from_json(const Json& doc) {
    if (!doc.is_object()) throw ParseError("<root>", "plan document must be a JSON object");
    require_keys(doc, "<root>", {"id", "version", "nodes", "edges", "plan_contract"}, {});

    std::string id = doc.at("id").get<std::string>();
    if (!doc.at("version").is_number_integer() || doc.at("version").get<int>() < 1)
        throw ParseError("version", "must be an integer >= 1");
    int version = doc.at("version").get<int>();

    PlanStructure s;
    if (!doc.at("nodes").is_array()) throw ParseError("nodes", "must be an array");
    for (const auto& nj : doc.at("nodes")) {
        if (!nj.is_object()) throw ParseError("nodes", "node entries must be objects");
        if (!nj.contains("id")) throw MissingField("nodes[]", "id");
        NodeId nid = nj.at("id").get<std::string>();
        std::string where = "nodes[" + nid + "]";
        if (std::find(s.nodes.begin(), s.nodes.end(), nid) != s.nodes.end())
            throw DuplicateNodeId(nid);
        s.nodes.push_back(nid);
        s.config[nid] = node_config_from_json(nj, where);
    }

    if (!doc.at("edges").is_array()) throw ParseError("edges", "must be an array");
    for (const auto& ej : doc.at("edges")) {
        if (!ej.is_array() || ej.size() != 2)
            throw ParseError("edges", "edge entries must be [from, to] pairs");
        s.edges.emplace_back(ej.at(0).get<std::string>(), ej.at(1).get<std::string>());
    }

    s.plan_contract = contract_from_json(doc.at("plan_contract"), "plan_contract");
    return Plan::from_structure(std::move(id), version, std::move(s));
}

Plan parse_plan(const std::string& document) {
    Json doc;
    try {
        doc = Json::parse(document);
    } catch (const Json::parse_error& e) {
        throw ParseError("byte " + std::to_string(e.byte), e.what());
    }
    try {
        return plan_from_json(doc);
    } catch (const Json::exception& e) {
        throw ParseError("<document>", e.what());
    }
}

Json plan_to_json(const Plan& plan) {
    Json nodes = Json::array();
    for (const auto& n : plan.nodes()) {
        Json nj = node_config_to_json(plan.config(n));
        nj["id"] = n;
        nodes.push_back(nj);
    }
    Json edges = Json::array();
    for (const auto& [a, b] : plan.edges()) edges.push_back(Json::array({a, b}));
    return Json{{"id", plan.id()},
                {"version", plan.version()},
                {"nodes", nodes},
                {"edges", edges},
                {"plan_contract", contract_to_json(plan.plan_contract())}};
}

}  // namespace sgh
