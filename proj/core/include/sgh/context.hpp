#pragma once

#include <string>

#include <json.hpp>

#include "sgh/errors.hpp"

namespace sgh {

/// Which half of the context partition a store belongs to.
enum class ContextScope { exec, diag };

/// What the current caller is allowed to read. The engine itself may read
/// both halves; an action is confined to exec, a diagnoser to diag.
enum class Principal { engine, action, diagnoser };

/// RAII scope installing the current principal (thread-local).
class PrincipalScope {
public:
    explicit PrincipalScope(Principal p);
    ~PrincipalScope();
    PrincipalScope(const PrincipalScope&) = delete;
    PrincipalScope& operator=(const PrincipalScope&) = delete;

private:
    Principal previous_;
};

Principal current_principal();

/// Key-value store guarded by the context partition: every read checks
/// the current principal against the store's scope and throws
/// ContextViolation on a cross-partition access. Reads are counted so
/// tests can assert isolation.
class ContextStore {
public:
    explicit ContextStore(ContextScope scope) : scope_(scope) {}

    void put(const std::string& key, nlohmann::json value);
    const nlohmann::json& get(const std::string& key) const;
    bool contains(const std::string& key) const;
    std::size_t read_count() const { return reads_; }
    ContextScope scope() const { return scope_; }

private:
    void check_access() const;

    ContextScope scope_;
    nlohmann::json values_ = nlohmann::json::object();
    mutable std::size_t reads_ = 0;
};

/// The two disjoint halves of Def-style context separation: actions see
/// exec only, the diagnoser sees diag only.
struct ContextPartition {
    ContextStore exec{ContextScope::exec};
    ContextStore diag{ContextScope::diag};
};

}  // namespace sgh
