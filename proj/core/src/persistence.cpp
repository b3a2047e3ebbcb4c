#include "sgh/persistence.hpp"

#include <zlib.h>

#include <algorithm>

namespace sgh {

const char* to_string(RecordKind k) {
    switch (k) {
        case RecordKind::transition: return "transition";
        case RecordKind::dispatch: return "dispatch";
        case RecordKind::outcome: return "outcome";
        case RecordKind::contract_report: return "contract_report";
        case RecordKind::recovery_action: return "recovery_action";
        case RecordKind::replan: return "replan";
        case RecordKind::late_outcome: return "late_outcome";
        case RecordKind::round_boundary: return "round_boundary";
    }
    return "?";
}

RecordKind record_kind_from_string(const std::string& s) {
    static const std::map<std::string, RecordKind> kMap = {
        {"transition", RecordKind::transition},
        {"dispatch", RecordKind::dispatch},
        {"outcome", RecordKind::outcome},
        {"contract_report", RecordKind::contract_report},
        {"recovery_action", RecordKind::recovery_action},
        {"replan", RecordKind::replan},
        {"late_outcome", RecordKind::late_outcome},
        {"round_boundary", RecordKind::round_boundary},
    };
    auto it = kMap.find(s);
    if (it == kMap.end()) throw Error("unknown record kind '" + s + "'");
    return it->second;
}

namespace {

std::uint32_t crc_of(const Json& record_sans_crc) {
    std::string dumped = record_sans_crc.dump();
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(dumped.data()),
                static_cast<uInt>(dumped.size())));
}

Json record_body_json(const TraceRecord& r) {
    return Json{{"seq", r.seq},
                {"clock", r.clock},
                {"plan_id", r.plan_id},
                {"plan_version", r.plan_version},
                {"kind", to_string(r.kind)},
                {"body", r.body}};
}

}  // namespace

Json record_to_json(const TraceRecord& r) {
    Json j = record_body_json(r);
    j["crc"] = crc_of(j);
    return j;
}

TraceRecord record_from_line(const std::string& line, std::uint64_t expected_seq) {
    Json j;
    try {
        j = Json::parse(line);
    } catch (const Json::parse_error&) {
        throw CorruptRecord(expected_seq);
    }
    if (!j.is_object() || !j.contains("crc") || !j.contains("seq")) throw CorruptRecord(expected_seq);

    Json sans = j;
    sans.erase("crc");
    if (crc_of(sans) != j.at("crc").get<std::uint32_t>())
        throw CorruptRecord(j.value("seq", expected_seq));

    TraceRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.clock = j.at("clock").get<std::int64_t>();
    r.plan_id = j.at("plan_id").get<std::string>();
    r.plan_version = j.at("plan_version").get<int>();
    r.kind = record_kind_from_string(j.at("kind").get<std::string>());
    r.body = j.at("body");
    return r;
}

// -- Wal --------------------------------------------------------------------

Wal Wal::to_file(const std::filesystem::path& path) {
    Wal w;
    w.path_ = path;
    w.out_ = std::make_unique<std::ofstream>(path, std::ios::trunc | std::ios::binary);
    if (!*w.out_) throw IoFailure("cannot open '" + path.string() + "'", 0);
    return w;
}

Wal Wal::in_memory() { return Wal{}; }

std::uint64_t Wal::append(RecordKind kind, std::int64_t clock, const std::string& plan_id,
                          int plan_version, Json body) {
    TraceRecord r;
    r.seq = last_seq_ + 1;
    r.clock = clock;
    r.plan_id = plan_id;
    r.plan_version = plan_version;
    r.kind = kind;
    r.body = std::move(body);

    if (out_) {
        *out_ << record_to_json(r).dump() << "\n";
        out_->flush();
        if (!*out_) throw IoFailure("write failed", last_seq_);
    }
    kind_counts_[static_cast<std::size_t>(r.kind)] += 1;
    records_.push_back(std::move(r));
    last_seq_ += 1;
    return last_seq_;
}

void Wal::note_terminal_events(int count, const ExecutionState& state) {
    if (snapshot_every_ <= 0) return;
    terminal_since_snapshot_ += count;
    while (terminal_since_snapshot_ >= snapshot_every_) {
        terminal_since_snapshot_ -= snapshot_every_;
        Snapshot snap;
        snap.seq = last_seq_;
        snap.plan_version = state.plan ? state.plan->version() : 0;
        snap.state = serialize_state(state);
        if (file_backed()) write_snapshot_file(path_, snap);
        snapshots_.push_back(std::move(snap));
    }
}

std::vector<TraceRecord> read_wal(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open '" + path.string() + "'", 0);
    std::vector<TraceRecord> records;
    std::string line;
    std::uint64_t expected = 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        TraceRecord r = record_from_line(line, expected);
        if (r.seq != expected) throw SeqGap(r.seq);
        records.push_back(std::move(r));
        ++expected;
    }
    return records;
}

void write_snapshot_file(const std::filesystem::path& wal_path, const Snapshot& snap) {
    std::filesystem::path p = wal_path;
    p.replace_extension(std::to_string(snap.seq) + ".snap");
    std::ofstream out(p, std::ios::trunc | std::ios::binary);
    Json j{{"seq", snap.seq}, {"plan_version", snap.plan_version}, {"state", snap.state}};
    out << j.dump() << "\n";
    if (!out) throw IoFailure("snapshot write failed", snap.seq);
}

std::vector<Snapshot> read_snapshots(const std::filesystem::path& wal_path) {
    std::vector<Snapshot> snaps;
    auto dir = wal_path.parent_path().empty() ? std::filesystem::path(".")
                                              : wal_path.parent_path();
    if (!std::filesystem::exists(dir)) return snaps;
    std::string stem = wal_path.stem().string();
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".snap") continue;
        std::string name = entry.path().filename().string();
        if (name.rfind(stem + ".", 0) != 0) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::string line;
        if (!std::getline(in, line)) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;
        Snapshot s;
        s.seq = j.at("seq").get<std::uint64_t>();
        s.plan_version = j.at("plan_version").get<int>();
        s.state = j.at("state");
        snaps.push_back(std::move(s));
    }
    std::sort(snaps.begin(), snaps.end(),
              [](const Snapshot& a, const Snapshot& b) { return a.seq < b.seq; });
    return snaps;
}

// -- state serialization ------------------------------------------------------

Json runtime_to_json(const NodeRuntime& rt) {
    Json j{{"node", rt.node},
           {"state", to_string(rt.state)},
           {"retries_used", rt.retries_used},
           {"recovery_state", to_string(rt.recovery_state)},
           {"contract_passed", rt.contract_passed},
           {"approved", rt.approved},
           {"retry_budget", rt.retry_budget},
           {"timeout_ms", rt.timeout_ms},
           {"human_timeout_ms", rt.human_timeout_ms}};
    if (rt.started_at) j["started_at"] = *rt.started_at;
    if (rt.deadline) j["deadline"] = *rt.deadline;
    if (rt.human_deadline) j["human_deadline"] = *rt.human_deadline;
    return j;
}

NodeRuntime runtime_from_json(const Json& j) {
    NodeRuntime rt;
    rt.node = j.at("node").get<std::string>();
    rt.state = node_state_from_string(j.at("state").get<std::string>());
    rt.retries_used = j.at("retries_used").get<int>();
    rt.recovery_state = recovery_state_from_string(j.at("recovery_state").get<std::string>());
    rt.contract_passed = j.at("contract_passed").get<bool>();
    rt.approved = j.at("approved").get<bool>();
    rt.retry_budget = j.at("retry_budget").get<int>();
    rt.timeout_ms = j.at("timeout_ms").get<std::int64_t>();
    rt.human_timeout_ms = j.at("human_timeout_ms").get<std::int64_t>();
    if (j.contains("started_at")) rt.started_at = j.at("started_at").get<std::int64_t>();
    if (j.contains("deadline")) rt.deadline = j.at("deadline").get<std::int64_t>();
    if (j.contains("human_deadline")) rt.human_deadline = j.at("human_deadline").get<std::int64_t>();
    return rt;
}

namespace {

Json output_to_json(const NodeOutput& o) {
    Json rules = Json::array();
    for (const auto& r : o.validation)
        rules.push_back({{"rule", r.rule}, {"pass", r.pass}, {"message", r.message}});
    return Json{{"payload", o.payload},
                {"produced_at", o.produced_at},
                {"validation", rules},
                {"method", to_string(o.validation_method)}};
}

NodeOutput output_from_json(const Json& j) {
    NodeOutput o;
    o.payload = j.at("payload");
    o.produced_at = j.at("produced_at").get<std::int64_t>();
    for (const auto& rj : j.at("validation"))
        o.validation.push_back({rj.at("rule").get<std::string>(), rj.at("pass").get<bool>(),
                                rj.at("message").get<std::string>()});
    o.validation_method = validation_method_from_string(j.at("method").get<std::string>());
    return o;
}

}  // namespace

Json serialize_state(const ExecutionState& state) {
    Json runtimes = Json::object();
    for (const auto& [n, rt] : state.runtimes) runtimes[n] = runtime_to_json(rt);
    Json outputs = Json::object();
    for (const auto& [n, o] : state.outputs) outputs[n] = output_to_json(o);
    Json overrides = Json::object();
    for (const auto& [n, cfg] : state.config_overrides) overrides[n] = node_config_to_json(cfg);
    return Json{{"plan", state.plan ? plan_to_json(*state.plan) : Json()},
                {"runtimes", runtimes},
                {"outputs", outputs},
                {"config_overrides", overrides},
                {"round", state.round}};
}

ExecutionState deserialize_state(const Json& doc) {
    ExecutionState state;
    if (!doc.at("plan").is_null())
        state.plan = std::make_shared<Plan>(plan_from_json(doc.at("plan")));
    for (auto it = doc.at("runtimes").begin(); it != doc.at("runtimes").end(); ++it)
        state.runtimes[it.key()] = runtime_from_json(it.value());
    for (auto it = doc.at("outputs").begin(); it != doc.at("outputs").end(); ++it)
        state.outputs[it.key()] = output_from_json(it.value());
    for (auto it = doc.at("config_overrides").begin(); it != doc.at("config_overrides").end(); ++it)
        state.config_overrides[it.key()] = node_config_from_json(it.value(), it.key());
    state.round = doc.at("round").get<int>();
    return state;
}

// -- replay -------------------------------------------------------------------

namespace {

void fold_record(ExecutionState& state, const TraceRecord& r) {
    switch (r.kind) {
        case RecordKind::replan: {
            state.plan = std::make_shared<Plan>(plan_from_json(r.body.at("plan")));
            state.runtimes.clear();
            state.outputs.clear();
            state.config_overrides.clear();
            state.round = 0;
            std::int64_t human_ms = r.body.value("human_timeout_ms", std::int64_t{60000});
            for (const auto& n : state.plan->nodes())
                state.runtimes[n] =
                    NodeRuntime::from_config(n, state.plan->config(n), human_ms);
            break;
        }
        case RecordKind::transition: {
            NodeRuntime rt = runtime_from_json(r.body.at("runtime"));
            state.runtimes[rt.node] = std::move(rt);
            break;
        }
        case RecordKind::outcome: {
            if (r.body.at("kind") == "success" && r.body.value("contract_passed", false))
                state.outputs[r.body.at("node").get<std::string>()] =
                    output_from_json(r.body.at("output"));
            break;
        }
        case RecordKind::recovery_action: {
            if (r.body.at("applied") == "patch")
                state.config_overrides[r.body.at("node").get<std::string>()] =
                    node_config_from_json(r.body.at("new_config"), "patch");
            break;
        }
        case RecordKind::round_boundary:
            state.round = r.body.at("round").get<int>();
            break;
        case RecordKind::dispatch:
        case RecordKind::contract_report:
        case RecordKind::late_outcome:
            break;  // informational
    }
}

}  // namespace

ExecutionState replay_records(const std::vector<TraceRecord>& records,
                              std::optional<std::uint64_t> upto) {
    ExecutionState state;
    for (const auto& r : records) {
        if (upto && r.seq > *upto) break;
        fold_record(state, r);
    }
    return state;
}

ExecutionState replay(const std::filesystem::path& wal_path, std::optional<std::uint64_t> upto) {
    auto records = read_wal(wal_path);
    auto snapshots = read_snapshots(wal_path);

    const Snapshot* best = nullptr;
    for (const auto& s : snapshots)
        if (!upto || s.seq <= *upto) best = &s;

    ExecutionState state;
    std::uint64_t from_seq = 0;
    if (best) {
        state = deserialize_state(best->state);
        from_seq = best->seq;
    }
    for (const auto& r : records) {
        if (r.seq <= from_seq) continue;
        if (upto && r.seq > *upto) break;
        fold_record(state, r);
    }
    return state;
}

NodeState logged_transition(ExecutionState& state, const NodeId& node, Trigger trigger,
                            std::int64_t clock, Wal* wal) {
    NodeRuntime& rt = state.runtime(node);
    NodeState from = rt.state;
    NodeRuntime next = transition(rt, trigger, clock);
    if (wal) {
        wal->append(RecordKind::transition, clock, state.plan->id(), state.plan->version(),
                    Json{{"node", node},
                         {"from", to_string(from)},
                         {"to", to_string(next.state)},
                         {"trigger", to_string(trigger)},
                         {"runtime", runtime_to_json(next)}});
    }
    rt = std::move(next);
    return rt.state;
}

}  // namespace sgh
