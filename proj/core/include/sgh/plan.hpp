#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sgh/errors.hpp"

namespace sgh {

using NodeId = std::string;
using Json = nlohmann::json;

enum class JoinMode { all_of, any_of };
enum class SideEffect { read_only, low_write, high_write };
enum class ValidationMethod { syntactic, code_semantic, external };

const char* to_string(JoinMode m);
const char* to_string(SideEffect s);
const char* to_string(ValidationMethod m);
JoinMode join_mode_from_string(const std::string& s);
SideEffect side_effect_from_string(const std::string& s);
ValidationMethod validation_method_from_string(const std::string& s);

/// One rule of an output contract. The rule vocabulary is closed:
/// field presence, field type, enumerated field value, or a named
/// predicate resolved against a PredicateRegistry.
struct ValidationRule {
    enum class Kind { field_present, field_type, field_enum, predicate };
    Kind kind = Kind::field_present;
    std::string field;                 // field_present / field_type / field_enum
    std::string type_name;             // field_type: string|number|boolean|object|array
    std::vector<std::string> values;   // field_enum
    std::string predicate;             // predicate

    std::string describe() const;
    bool operator==(const ValidationRule&) const = default;
};

struct OutputContract {
    ValidationMethod method = ValidationMethod::syntactic;
    std::vector<ValidationRule> rules;

    bool operator==(const OutputContract&) const = default;
};

struct NodeConfig {
    std::string action;
    JoinMode join = JoinMode::all_of;
    std::optional<std::string> any_of_group;
    int retry_budget = 0;
    std::int64_t timeout_ms = 30000;
    SideEffect side_effect = SideEffect::read_only;
    OutputContract contract;

    bool operator==(const NodeConfig&) const = default;
};

/// Raw structure handed to Plan construction and to derive_replan.
/// Edges may reference undeclared ids; validation reports those under
/// the reachability check rather than refusing to construct the value.
struct PlanStructure {
    std::vector<NodeId> nodes;
    std::vector<std::pair<NodeId, NodeId>> edges;
    std::map<NodeId, NodeConfig> config;
    OutputContract plan_contract;
};

/// Named payload predicates usable from contract rules. Unresolvable
/// names fail plan validation (contract_wellformed).
class PredicateRegistry {
public:
    using Fn = std::function<bool(const Json& payload)>;

    void add(const std::string& name, Fn fn) { fns_[name] = std::move(fn); }
    bool contains(const std::string& name) const { return fns_.count(name) > 0; }
    const Fn& at(const std::string& name) const;

    /// Registry with the built-in predicates (non_empty, has_result).
    static const PredicateRegistry& builtin();

private:
    std::map<std::string, Fn> fns_;
};

/// Immutable versioned execution plan. Structure (nodes, edges) is fixed
/// at construction; a replan produces a new value with version + 1.
class Plan {
public:
    static Plan from_structure(std::string id, int version, PlanStructure s);

    const std::string& id() const { return id_; }
    int version() const { return version_; }
    const std::vector<NodeId>& nodes() const { return s_.nodes; }  // sorted ascending
    const std::vector<std::pair<NodeId, NodeId>>& edges() const { return s_.edges; }
    const NodeConfig& config(const NodeId& node) const;
    const OutputContract& plan_contract() const { return s_.plan_contract; }
    const PlanStructure& structure() const { return s_; }

    bool has_node(const NodeId& node) const { return s_.config.count(node) > 0; }
    /// Predecessors/successors over declared nodes; edges with undeclared
    /// endpoints are excluded (validation reports them).
    const std::vector<NodeId>& predecessors(const NodeId& node) const;
    const std::vector<NodeId>& successors(const NodeId& node) const;
    const std::vector<std::pair<NodeId, NodeId>>& dangling_edges() const { return dangling_; }

    /// Group id -> sorted members carrying that any_of_group tag.
    const std::map<std::string, std::vector<NodeId>>& any_of_groups() const { return groups_; }
    std::optional<std::string> group_of(const NodeId& node) const;

    std::vector<NodeId> entry_nodes() const;  // zero in-degree
    std::vector<NodeId> exit_nodes() const;   // zero out-degree

    /// Stable FNV-1a digest of (nodes, edges) only; configuration and
    /// version do not contribute. Used by the plan-invariant checks.
    std::uint64_t structure_digest() const;

private:
    Plan() = default;

    std::string id_;
    int version_ = 1;
    PlanStructure s_;
    std::map<NodeId, std::vector<NodeId>> preds_;
    std::map<NodeId, std::vector<NodeId>> succs_;
    std::map<std::string, std::vector<NodeId>> groups_;
    std::vector<std::pair<NodeId, NodeId>> dangling_;
};

enum class ValidationCheck {
    acyclicity,
    reachability,
    join_consistency,
    contract_wellformed,
    side_effect_consistency,
};
const char* to_string(ValidationCheck c);

struct ValidationFailure {
    ValidationCheck check;
    std::string subject;  // offending node or "from->to" edge
    std::string message;
};

struct ValidationReport {
    bool ok = true;
    std::vector<ValidationFailure> failures;

    bool failed(ValidationCheck c) const;
    std::string to_text() const;
    Json to_json() const;
};

/// Runs the five structural checks in order. All problems are reported,
/// none are thrown.
ValidationReport validate_plan(const Plan& plan,
                               const PredicateRegistry& predicates = PredicateRegistry::builtin());

/// Deterministic topological order: Kahn's algorithm with ties broken by
/// ascending NodeId. Throws CycleDetected on cyclic input.
std::vector<NodeId> topological_order(const Plan& plan);

/// Produces the next plan version from a validated replacement structure.
/// The old value is untouched; the caller records the replan event with
/// `reason` in the audit trail.
Plan derive_replan(const Plan& old_plan, PlanStructure next, const std::string& reason,
                   const PredicateRegistry& predicates = PredicateRegistry::builtin());

/// Parses the UTF-8 JSON plan document format. Unknown keys are rejected.
Plan parse_plan(const std::string& document);

Json plan_to_json(const Plan& plan);
Plan plan_from_json(const Json& doc);

Json contract_to_json(const OutputContract& c);
OutputContract contract_from_json(const Json& j, const std::string& where);

Json node_config_to_json(const NodeConfig& cfg);
NodeConfig node_config_from_json(const Json& j, const std::string& where);

}  // namespace sgh
