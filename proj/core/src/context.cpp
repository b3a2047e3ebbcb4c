#include "sgh/context.hpp"

namespace sgh {

namespace {
thread_local Principal g_principal = Principal::engine;
}

PrincipalScope::PrincipalScope(Principal p) : previous_(g_principal) { g_principal = p; }
PrincipalScope::~PrincipalScope() { g_principal = previous_; }

Principal current_principal() { return g_principal; }

void ContextStore::check_access() const {
    Principal p = g_principal;
    if (p == Principal::engine) return;
    if (p == Principal::action && scope_ == ContextScope::exec) return;
    if (p == Principal::diagnoser && scope_ == ContextScope::diag) return;
    throw ContextViolation(std::string(p == Principal::action ? "action" : "diagnoser") +
                           " read from the " +
                           (scope_ == ContextScope::exec ? "exec" : "diag") + " context");
}

void ContextStore::put(const std::string& key, nlohmann::json value) {
    values_[key] = std::move(value);
}

const nlohmann::json& ContextStore::get(const std::string& key) const {
    check_access();
    ++reads_;
    auto it = values_.find(key);
    if (it == values_.end()) throw Error("context key '" + key + "' not present");
    return *it;
}

bool ContextStore::contains(const std::string& key) const {
    check_access();
    ++reads_;
    return values_.contains(key);
}

}  // namespace sgh
