#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgh/context.hpp"
#include "sgh/plan.hpp"

namespace sgh {

struct RuleResult {
    std::string rule;
    bool pass = false;
    std::string message;

    bool operator==(const RuleResult&) const = default;
};

/// Evaluates every rule against the payload; no short-circuiting, the
/// full report is kept for the audit trail.
std::vector<RuleResult> validate_contract(const Json& payload, const OutputContract& contract,
                                          const PredicateRegistry& predicates =
                                              PredicateRegistry::builtin());

inline bool all_pass(const std::vector<RuleResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return true;
}

struct NodeOutput {
    Json payload = Json::object();
    std::int64_t produced_at = 0;
    std::vector<RuleResult> validation;
    ValidationMethod validation_method = ValidationMethod::syntactic;

    bool operator==(const NodeOutput&) const = default;
};

/// A raw executor failure before classification.
struct RawFailure {
    std::string tag;     // e.g. "network", "timeout", "contract", "auth", ...
    std::string detail;
};

/// What one attempt produced: a payload, a failure, or nothing yet
/// (a hang, resolved by the node's deadline).
struct AttemptResult {
    enum class Kind { output, failure, hang };
    Kind kind = Kind::output;
    Json payload;
    RawFailure failure;
};

struct ActionDef {
    std::function<AttemptResult(const ContextStore& exec, const Json& inputs)> fn;
    SideEffect declared_side_effect = SideEffect::read_only;
};

/// Registry of executable actions. Every ActionRef in a validated plan
/// must resolve here.
class ActionRegistry {
public:
    void add(const std::string& name, ActionDef def) { actions_[name] = std::move(def); }
    bool contains(const std::string& name) const { return actions_.count(name) > 0; }
    const ActionDef& at(const std::string& name) const;

    /// Registry of stock mock actions ("ok", "emit_raw", "echo_inputs").
    static ActionRegistry standard_mocks();

private:
    std::map<std::string, ActionDef> actions_;
};

/// Scripted per-node outcomes consumed one entry per attempt. Consumption
/// state persists across plan versions within a run. An exhausted script
/// defaults to success with a minimal payload conforming to the node's
/// current contract.
class FaultScript {
public:
    struct Entry {
        enum class Op { succeed, fail, hang };
        Op op = Op::succeed;
        std::optional<Json> payload;  // succeed
        std::string kind;             // fail
        std::optional<std::int64_t> ms;  // duration override; hang stall length
    };

    FaultScript() = default;

    void add(const NodeId& node, Entry entry) {
        scripts_[node].push_back(std::move(entry));
        scripted_.insert(node);
    }
    void declare(const NodeId& node) { scripted_.insert(node); }
    /// Consumes and returns the next scripted entry, if any remain.
    std::optional<Entry> next(const NodeId& node);
    bool has_entries(const NodeId& node) const;
    /// True if the node appeared in the script at all; an exhausted script
    /// keeps succeeding with conforming payloads.
    bool was_scripted(const NodeId& node) const { return scripted_.count(node) > 0; }

    static FaultScript parse(const std::string& document);
    static FaultScript from_json(const Json& doc);
    Json to_json() const;

private:
    std::map<NodeId, std::deque<Entry>> scripts_;
    std::set<NodeId> scripted_;
};

/// Synthesizes the smallest payload satisfying `contract` (used when a
/// fault script is exhausted).
Json conforming_payload(const OutputContract& contract);

/// One in-flight node execution: when it completes on the virtual
/// timeline and what it produces. completes_at is empty for hangs.
struct PendingExecution {
    std::optional<std::int64_t> completes_at;
    AttemptResult result;
};

/// Node-action execution interface. Implementations must only read the
/// exec half of the context partition.
class Executor {
public:
    virtual ~Executor() = default;
    virtual PendingExecution start(const NodeId& node, const NodeConfig& cfg,
                                   const ContextStore& exec, const Json& inputs,
                                   std::int64_t now) = 0;
};

/// Deterministic mock executor: a registered action overlaid by an
/// optional fault script, with per-node simulated durations.
class ScriptedExecutor final : public Executor {
public:
    ScriptedExecutor(ActionRegistry actions, FaultScript script,
                     std::map<NodeId, std::int64_t> durations_ms = {},
                     std::int64_t default_duration_ms = 1)
        : actions_(std::move(actions)),
          script_(std::move(script)),
          durations_(std::move(durations_ms)),
          default_duration_(default_duration_ms) {}

    PendingExecution start(const NodeId& node, const NodeConfig& cfg, const ContextStore& exec,
                           const Json& inputs, std::int64_t now) override;

private:
    std::int64_t duration_for(const NodeId& node) const;

    ActionRegistry actions_;
    FaultScript script_;
    std::map<NodeId, std::int64_t> durations_;
    std::int64_t default_duration_;
};

}  // namespace sgh
