#pragma once

#include <map>
#include <memory>
#include <string>

#include "sgh/executor.hpp"
#include "sgh/lifecycle.hpp"
#include "sgh/plan.hpp"

namespace sgh {

/// Global execution state for one run: the current plan version, one
/// runtime per node, retained outputs of executed nodes, and the
/// configuration overlay produced by patches. The plan value itself is
/// immutable; only the overlay changes within a version.
struct ExecutionState {
    std::shared_ptr<const Plan> plan;
    std::map<NodeId, NodeRuntime> runtimes;
    std::map<NodeId, NodeOutput> outputs;
    std::map<NodeId, NodeConfig> config_overrides;
    int round = 0;

    static ExecutionState fresh(std::shared_ptr<const Plan> plan, std::int64_t human_timeout_ms);

    const NodeConfig& effective_config(const NodeId& node) const;
    const NodeRuntime& runtime(const NodeId& node) const;
    NodeRuntime& runtime(const NodeId& node);

    bool all_terminal() const;

    /// True once any member of the group reached executed.
    bool group_satisfied(const std::string& group) const;

    /// A predecessor counts as satisfied when executed, or when skipped
    /// inside a satisfied any_of group.
    bool predecessor_satisfied(const NodeId& pred) const;

    /// Join condition of Def-style all_of / any_of semantics.
    bool join_holds(const NodeId& node) const;

    /// True when the join can never hold again: an all_of predecessor is
    /// terminally failed/cancelled, or every any_of candidate failed.
    bool join_doomed(const NodeId& node) const;
};

}  // namespace sgh
