#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sgh {

/// Base class for all engine errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// -- plan ---------------------------------------------------------------

class ParseError : public Error {
public:
    ParseError(std::string location, const std::string& message)
        : Error("parse error at " + location + ": " + message),
          location_(std::move(location)) {}
    const std::string& location() const { return location_; }

private:
    std::string location_;
};

class MissingField : public ParseError {
public:
    MissingField(const std::string& location, const std::string& field)
        : ParseError(location, "missing required field '" + field + "'") {}
};

class DuplicateNodeId : public ParseError {
public:
    explicit DuplicateNodeId(const std::string& id)
        : ParseError("nodes", "duplicate node id '" + id + "'") {}
};

class CycleDetected : public Error {
public:
    explicit CycleDetected(const std::string& detail)
        : Error("cycle detected: " + detail) {}
};

class InvalidStructure : public Error {
public:
    explicit InvalidStructure(const std::string& detail)
        : Error("replan structure rejected: " + detail) {}
};

// -- lifecycle ----------------------------------------------------------

class IllegalTransition : public Error {
public:
    IllegalTransition(const std::string& from, const std::string& trigger)
        : Error("illegal transition from '" + from + "' on trigger '" + trigger + "'") {}
};

class TerminalStateMutation : public Error {
public:
    TerminalStateMutation(const std::string& node, const std::string& state)
        : Error("node '" + node + "' is terminal ('" + state + "'); terminal states are absorbing") {}
};

// -- recovery -----------------------------------------------------------

class EscalationOrderViolation : public Error {
public:
    explicit EscalationOrderViolation(const std::string& detail)
        : Error("escalation order violation: " + detail) {}
};

class TopologyChangeAttempted : public Error {
public:
    explicit TopologyChangeAttempted(const std::string& detail)
        : Error("patch may not change plan topology: " + detail) {}
};

class BudgetExhausted : public Error {
public:
    explicit BudgetExhausted(const std::string& node)
        : Error("retry budget exhausted for node '" + node + "'") {}
};

class ContextViolation : public Error {
public:
    explicit ContextViolation(const std::string& detail)
        : Error("context partition violation: " + detail) {}
};

// -- executor -----------------------------------------------------------

class UnknownAction : public Error {
public:
    explicit UnknownAction(const std::string& action)
        : Error("no registered action '" + action + "'") {}
};

class UnknownPredicate : public Error {
public:
    explicit UnknownPredicate(const std::string& name)
        : Error("no registered contract predicate '" + name + "'") {}
};

// -- scheduler ----------------------------------------------------------

class TransitionBudgetExceeded : public Error {
public:
    explicit TransitionBudgetExceeded(const std::string& detail)
        : Error("engine bug: transition budget exceeded: " + detail) {}
};

class ProgressViolation : public Error {
public:
    explicit ProgressViolation(const std::string& detail)
        : Error("engine bug: scheduler made no progress: " + detail) {}
};

// -- persistence --------------------------------------------------------

class IoFailure : public Error {
public:
    IoFailure(const std::string& detail, std::uint64_t last_durable_seq)
        : Error("wal i/o failure after seq " + std::to_string(last_durable_seq) + ": " + detail),
          last_durable_seq_(last_durable_seq) {}
    std::uint64_t last_durable_seq() const { return last_durable_seq_; }

private:
    std::uint64_t last_durable_seq_;
};

class CorruptRecord : public Error {
public:
    explicit CorruptRecord(std::uint64_t seq)
        : Error("CorruptRecord(" + std::to_string(seq) + ")"), seq_(seq) {}
    std::uint64_t seq() const { return seq_; }

private:
    std::uint64_t seq_;
};

class SeqGap : public Error {
public:
    explicit SeqGap(std::uint64_t seq)
        : Error("SeqGap(" + std::to_string(seq) + ")"), seq_(seq) {}
    std::uint64_t seq() const { return seq_; }

private:
    std::uint64_t seq_;
};

// -- harness ------------------------------------------------------------

class MissingGroup : public Error {
public:
    explicit MissingGroup(const std::string& group)
        : Error("gain decomposition requires group " + group) {}
};

}  // namespace sgh
