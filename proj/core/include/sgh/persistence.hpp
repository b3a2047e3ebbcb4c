#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sgh/state.hpp"

namespace sgh {

enum class RecordKind {
    transition,
    dispatch,
    outcome,
    contract_report,
    recovery_action,
    replan,
    late_outcome,
    round_boundary,
};

const char* to_string(RecordKind k);
RecordKind record_kind_from_string(const std::string& s);

/// One append-only trace record. Every record carries the plan version
/// in force when its event occurred.
struct TraceRecord {
    std::uint64_t seq = 0;
    std::int64_t clock = 0;
    std::string plan_id;
    int plan_version = 1;
    RecordKind kind = RecordKind::transition;
    Json body;
};

Json record_to_json(const TraceRecord& r);            // includes the crc field
TraceRecord record_from_line(const std::string& line, std::uint64_t expected_seq);

struct Snapshot {
    std::uint64_t seq = 0;  // watermark: state after applying records <= seq
    int plan_version = 1;
    Json state;
};

/// Append-only write-ahead log. Single writer; lines are NDJSON with a
/// 32-bit CRC field per line. Appends are flushed before the caller
/// applies the corresponding state mutation.
class Wal {
public:
    static Wal to_file(const std::filesystem::path& path);
    static Wal in_memory();

    Wal(Wal&&) = default;
    Wal& operator=(Wal&&) = default;

    std::uint64_t append(RecordKind kind, std::int64_t clock, const std::string& plan_id,
                         int plan_version, Json body);

    std::uint64_t last_seq() const { return last_seq_; }
    const std::filesystem::path& path() const { return path_; }
    bool file_backed() const { return !path_.empty(); }

    /// In-memory records (also retained for file-backed logs, so tests can
    /// replay without re-reading the file).
    const std::vector<TraceRecord>& records() const { return records_; }
    int count(RecordKind kind) const { return kind_counts_[static_cast<std::size_t>(kind)]; }

    /// Snapshot policy: write a snapshot after every `n` node-terminal
    /// events. Zero disables snapshots.
    void set_snapshot_every(int n) { snapshot_every_ = n; }
    int snapshot_every() const { return snapshot_every_; }
    /// Called by the engine whenever nodes reach a terminal state.
    void note_terminal_events(int count, const ExecutionState& state);
    const std::vector<Snapshot>& snapshots() const { return snapshots_; }

private:
    Wal() = default;

    std::filesystem::path path_;
    std::unique_ptr<std::ofstream> out_;
    std::uint64_t last_seq_ = 0;
    std::vector<TraceRecord> records_;
    std::array<int, 8> kind_counts_{};
    int snapshot_every_ = 0;
    int terminal_since_snapshot_ = 0;
    std::vector<Snapshot> snapshots_;
};

/// Reads and checks a WAL file: CRC per line, gapless seq starting at 1.
std::vector<TraceRecord> read_wal(const std::filesystem::path& path);

/// Snapshot files adjacent to a WAL: `<stem>.<seq>.snap`.
std::vector<Snapshot> read_snapshots(const std::filesystem::path& wal_path);
void write_snapshot_file(const std::filesystem::path& wal_path, const Snapshot& snap);

Json serialize_state(const ExecutionState& state);
ExecutionState deserialize_state(const Json& doc);

/// Folds records onto `base` (or an empty initial state). Records with
/// seq <= base watermark are skipped by the caller slicing the span.
ExecutionState replay_records(const std::vector<TraceRecord>& records,
                              std::optional<std::uint64_t> upto = std::nullopt);

/// Replays a WAL file, preferring the newest adjacent snapshot <= upto.
ExecutionState replay(const std::filesystem::path& wal_path,
                      std::optional<std::uint64_t> upto = std::nullopt);

/// Write-ahead helper: logs the post-transition runtime, then applies the
/// mutation to the state. Returns the applied trigger's target state.
NodeState logged_transition(ExecutionState& state, const NodeId& node, Trigger trigger,
                            std::int64_t clock, Wal* wal);

Json runtime_to_json(const NodeRuntime& rt);
NodeRuntime runtime_from_json(const Json& j);

}  // namespace sgh
