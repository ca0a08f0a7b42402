#pragma once

// Trace schema: task events, task usage and machine events, as three CSV
// tables modeled on a column subset of the public Google cluster trace (v2).
// All timestamps are integer microseconds from trace start.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include "nodefail/common.hpp"

namespace nodefail {

enum class TaskEventType : std::uint8_t { Submit, Schedule, Evict, Fail, Finish, Kill, Lost };
enum class MachineEventType : std::uint8_t { Add, Remove, Update };
enum class EndStatus : std::uint8_t { Evicted, Failed, Finished, Killed, Lost, Open };

inline constexpr std::array<std::string_view, 7> kTaskEventNames{
    "SUBMIT", "SCHEDULE", "EVICT", "FAIL", "FINISH", "KILL", "LOST"};
inline constexpr std::array<std::string_view, 3> kMachineEventNames{"ADD", "REMOVE", "UPDATE"};
inline constexpr std::array<std::string_view, 6> kEndStatusNames{
    "EVICTED", "FAILED", "FINISHED", "KILLED", "LOST", "OPEN"};

inline std::string_view to_string(TaskEventType t) { return kTaskEventNames[static_cast<int>(t)]; }
inline std::string_view to_string(MachineEventType t) { return kMachineEventNames[static_cast<int>(t)]; }
inline std::string_view to_string(EndStatus s) { return kEndStatusNames[static_cast<int>(s)]; }

inline bool is_terminal(TaskEventType t) {
  return t != TaskEventType::Submit && t != TaskEventType::Schedule;
}

inline EndStatus end_status_for(TaskEventType t) {
  switch (t) {
    case TaskEventType::Evict: return EndStatus::Evicted;
    case TaskEventType::Fail: return EndStatus::Failed;
    case TaskEventType::Finish: return EndStatus::Finished;
    case TaskEventType::Kill: return EndStatus::Killed;
    case TaskEventType::Lost: return EndStatus::Lost;
    default: throw std::logic_error("not a terminal task event");
  }
}

struct TaskEvent {
  Micros timestamp = 0;
  std::string job_id;
  std::int64_t task_index = 0;
  std::string machine_id;  // empty for SUBMIT
  TaskEventType type = TaskEventType::Submit;

  friend bool operator==(const TaskEvent&, const TaskEvent&) = default;
};

struct TaskUsage {
  Micros start = 0;
  Micros end = 0;
  std::string job_id;
  std::int64_t task_index = 0;
  std::string machine_id;
  // Empty CSV fields are missing; missing loads contribute nothing.
  std::optional<double> cpu_rate;
  std::optional<double> mem_usage;
  std::optional<double> disk_io_time;
  std::optional<double> cpi;
  std::optional<double> mai;

  friend bool operator==(const TaskUsage&, const TaskUsage&) = default;
};

struct MachineEvent {
  Micros timestamp = 0;
  std::string machine_id;
  MachineEventType type = MachineEventType::Add;

  friend bool operator==(const MachineEvent&, const MachineEvent&) = default;
};

/// One SCHEDULE..terminal episode of a task on a machine, [start, end).
struct TaskInterval {
  std::string job_id;
  std::int64_t task_index = 0;
  std::string machine_id;
  Micros start = 0;
  Micros end = 0;  // trace end when OPEN
  EndStatus end_status = EndStatus::Open;

  friend bool operator==(const TaskInterval&, const TaskInterval&) = default;
};

inline constexpr std::string_view kTaskEventsHeader =
    "timestamp_us,job_id,task_index,machine_id,event_type";
inline constexpr std::string_view kTaskUsageHeader =
    "start_us,end_us,job_id,task_index,machine_id,cpu_rate,mem_usage,disk_io_time,cpi,mai";
inline constexpr std::string_view kMachineEventsHeader = "timestamp_us,machine_id,event_type";

inline constexpr std::string_view kTaskEventsFile = "task_events.csv";
inline constexpr std::string_view kTaskUsageFile = "task_usage.csv";
inline constexpr std::string_view kMachineEventsFile = "machine_events.csv";

struct ParseOptions {
  bool strict = false;  // malformed row is fatal instead of skipped
  std::size_t max_warnings = 20;
};

template <class Row>
struct ParseResult {
  std::vector<Row> rows;
  std::size_t malformed = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string read_all(std::istream& in) {
  if (!in) throw std::runtime_error("unreadable input stream");
  std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw std::runtime_error("error while reading input stream");
  return data;
}

/// Splits `line` on commas into exactly N fields; false if the count differs.
template <std::size_t N>
bool split_fields(std::string_view line, std::array<std::string_view, N>& out) {
  std::size_t field = 0;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t comma = line.find(',', pos);
    if (field >= N) return false;
    if (comma == std::string_view::npos) {
      out[field++] = line.substr(pos);
      break;
    }
    out[field++] = line.substr(pos, comma - pos);
    pos = comma + 1;
  }
  return field == N;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
  return v;
}

template <std::size_t N>
std::optional<std::size_t> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return i;
  return std::nullopt;
}

/// Drives `row_fn(line)` over data lines after checking the header; row_fn
/// returns an error message for malformed rows or an empty string.
template <class RowFn, class Row>
void parse_lines(std::istream& in, std::string_view header, const ParseOptions& opts,
                 ParseResult<Row>& result, RowFn&& row_fn) {
  const std::string data = read_all(in);
  if (data.empty()) return;
  std::string_view rest(data);
  std::size_t line_no = 0;
  bool seen_header = false;
  while (!rest.empty()) {
    const std::size_t nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!seen_header) {
      if (line != header)
        throw InputError("missing or wrong header row; expected '" + std::string(header) + "'");
      seen_header = true;
      continue;
    }
    if (line.empty()) continue;
    std::string err = row_fn(line);
    if (!err.empty()) {
      std::string msg = "line " + std::to_string(line_no) + ": " + err;
      if (opts.strict) throw InputError(msg);
      ++result.malformed;
      if (result.warnings.size() < opts.max_warnings) result.warnings.push_back(std::move(msg));
    }
  }
}

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

inline void append_int(std::string& out, std::int64_t v) {
  char buf[24];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

inline void append_optional(std::string& out, const std::optional<double>& v) {
  if (v) append_double(out, *v);
}

}  // namespace detail

/// Parses task_events.csv. Rows come back in timestamp order; rows sharing a
/// timestamp keep their file order.
inline ParseResult<TaskEvent> parse_task_events(std::istream& in, const ParseOptions& opts = {}) {
  ParseResult<TaskEvent> result;
  detail::parse_lines(in, kTaskEventsHeader, opts, result, [&](std::string_view line) -> std::string {
    std::array<std::string_view, 5> f;
    if (!detail::split_fields(line, f)) return "expected 5 fields";
    auto ts = detail::parse_int(f[0]);
    if (!ts || *ts < 0) return "bad timestamp";
    if (f[1].empty()) return "empty job_id";
    auto idx = detail::parse_int(f[2]);
    if (!idx || *idx < 0) return "bad task_index";
    auto type = detail::lookup(kTaskEventNames, f[4]);
    if (!type) return "unknown event_type '" + std::string(f[4]) + "'";
    const auto t = static_cast<TaskEventType>(*type);
    if (t != TaskEventType::Submit && f[3].empty()) return "machine_id required for " + std::string(f[4]);
    result.rows.push_back({*ts, std::string(f[1]), *idx, std::string(f[3]), t});
    return {};
  });
  std::stable_sort(result.rows.begin(), result.rows.end(),
                   [](const TaskEvent& a, const TaskEvent& b) { return a.timestamp < b.timestamp; });
  return result;
}

inline ParseResult<TaskUsage> parse_task_usage(std::istream& in, const ParseOptions& opts = {}) {
  ParseResult<TaskUsage> result;
  detail::parse_lines(in, kTaskUsageHeader, opts, result, [&](std::string_view line) -> std::string {
    std::array<std::string_view, 10> f;
    if (!detail::split_fields(line, f)) return "expected 10 fields";
    auto start = detail::parse_int(f[0]);
    auto end = detail::parse_int(f[1]);
    if (!start || !end || *start < 0) return "bad start/end";
    if (*end <= *start) return "end_us must exceed start_us";
    if (f[2].empty() || f[4].empty()) return "empty job_id or machine_id";
    auto idx = detail::parse_int(f[3]);
    if (!idx || *idx < 0) return "bad task_index";
    TaskUsage u{*start, *end, std::string(f[2]), *idx, std::string(f[4]), {}, {}, {}, {}, {}};
    std::optional<double>* loads[] = {&u.cpu_rate, &u.mem_usage, &u.disk_io_time, &u.cpi, &u.mai};
    for (int i = 0; i < 5; ++i) {
      const auto field = f[5 + i];
      if (field.empty()) continue;
      auto v = detail::parse_double(field);
      if (!v || !(*v >= 0)) return "bad load value '" + std::string(field) + "'";
      *loads[i] = *v;
    }
    result.rows.push_back(std::move(u));
    return {};
  });
  std::stable_sort(result.rows.begin(), result.rows.end(),
                   [](const TaskUsage& a, const TaskUsage& b) { return a.start < b.start; });
  return result;
}

/// Parses machine_events.csv. Output is sorted by timestamp; a warning is
/// recorded for every machine whose rows were out of order in the file.
inline ParseResult<MachineEvent> parse_machine_events(std::istream& in, const ParseOptions& opts = {}) {
  ParseResult<MachineEvent> result;
  std::unordered_map<std::string, Micros> last_seen;
  std::map<std::string, bool> out_of_order;
  detail::parse_lines(in, kMachineEventsHeader, opts, result, [&](std::string_view line) -> std::string {
    std::array<std::string_view, 3> f;
    if (!detail::split_fields(line, f)) return "expected 3 fields";
    auto ts = detail::parse_int(f[0]);
    if (!ts || *ts < 0) return "bad timestamp";
    if (f[1].empty()) return "empty machine_id";
    auto type = detail::lookup(kMachineEventNames, f[2]);
    if (!type) return "unknown event_type '" + std::string(f[2]) + "'";
    std::string id(f[1]);
    auto [it, inserted] = last_seen.try_emplace(id, *ts);
    if (!inserted) {
      if (*ts < it->second) out_of_order[id] = true;
      it->second = std::max(it->second, *ts);
    }
    result.rows.push_back({*ts, std::move(id), static_cast<MachineEventType>(*type)});
    return {};
  });
  for (const auto& [id, flag] : out_of_order)
    result.warnings.push_back("machine " + id + ": events out of timestamp order; sorted");
  std::stable_sort(result.rows.begin(), result.rows.end(),
                   [](const MachineEvent& a, const MachineEvent& b) { return a.timestamp < b.timestamp; });
  return result;
}

inline std::string serialize_task_events(const std::vector<TaskEvent>& rows) {
  std::string out(kTaskEventsHeader);
  out += '\n';
  for (const auto& e : rows) {
    detail::append_int(out, e.timestamp);
    out += ',';
    out += e.job_id;
    out += ',';
    detail::append_int(out, e.task_index);
    out += ',';
    out += e.machine_id;
    out += ',';
    out += to_string(e.type);
    out += '\n';
  }
  return out;
}

inline std::string serialize_task_usage(const std::vector<TaskUsage>& rows) {
  std::string out(kTaskUsageHeader);
  out += '\n';
  for (const auto& u : rows) {
    detail::append_int(out, u.start);
    out += ',';
    detail::append_int(out, u.end);
    out += ',';
    out += u.job_id;
    out += ',';
    detail::append_int(out, u.task_index);
    out += ',';
    out += u.machine_id;
    for (const auto* v : {&u.cpu_rate, &u.mem_usage, &u.disk_io_time, &u.cpi, &u.mai}) {
      out += ',';
      detail::append_optional(out, *v);
    }
    out += '\n';
  }
  return out;
}

inline std::string serialize_machine_events(const std::vector<MachineEvent>& rows) {
  std::string out(kMachineEventsHeader);
  out += '\n';
  for (const auto& m : rows) {
    detail::append_int(out, m.timestamp);
    out += ',';
    out += m.machine_id;
    out += ',';
    out += to_string(m.type);
    out += '\n';
  }
  return out;
}

struct IntervalTable {
  std::vector<TaskInterval> intervals;
  std::size_t orphans = 0;              // terminal event with no open SCHEDULE
  std::size_t repeated_schedules = 0;   // SCHEDULE while an episode is open (ignored)
};

/// Running-tasks table. Events must be in timestamp order. The first observed
/// event of a task is taken as authoritative, so a terminal event for a task
/// that was already running at trace start is an orphan and is dropped.
inline IntervalTable build_task_intervals(const std::vector<TaskEvent>& events, Micros trace_end) {
  IntervalTable table;
  struct Open {
    Micros start;
    std::string machine;
  };
  std::unordered_map<std::string, Open> open;
  auto key_of = [](const TaskEvent& e) {
    std::string k = e.job_id;
    k += '\x1f';
    detail::append_int(k, e.task_index);
    return k;
  };
  // Open episodes are flushed in first-scheduled order for a stable output.
  std::vector<std::pair<std::string, std::size_t>> open_order;
  std::size_t schedule_seq = 0;
  std::unordered_map<std::string, std::size_t> open_seq;

  for (const auto& e : events) {
    if (e.type == TaskEventType::Submit) continue;
    auto key = key_of(e);
    if (e.type == TaskEventType::Schedule) {
      if (open.contains(key)) {
        ++table.repeated_schedules;
        continue;
      }
      open.emplace(key, Open{e.timestamp, e.machine_id});
      open_seq[key] = schedule_seq++;
      continue;
    }
    auto it = open.find(key);
    if (it == open.end()) {
      ++table.orphans;
      continue;
    }
    table.intervals.push_back({e.job_id, e.task_index, it->second.machine, it->second.start, e.timestamp,
                               end_status_for(e.type)});
    open.erase(it);
    open_seq.erase(key);
  }
  std::vector<std::pair<std::size_t, std::string>> remaining;
  remaining.reserve(open.size());
  for (const auto& [key, seq] : open_seq) remaining.emplace_back(seq, key);
  std::sort(remaining.begin(), remaining.end());
  for (const auto& [seq, key] : remaining) {
    const auto& o = open.at(key);
    const auto sep = key.find('\x1f');
    const auto idx = detail::parse_int(std::string_view(key).substr(sep + 1)).value_or(0);
    table.intervals.push_back({key.substr(0, sep), idx, o.machine, o.start, std::max(trace_end, o.start),
                               EndStatus::Open});
  }
  return table;
}

/// The three tables of one trace plus what loading them reported.
struct TraceTables {
  std::vector<TaskEvent> task_events;
  std::vector<TaskUsage> task_usage;
  std::vector<MachineEvent> machine_events;
  std::size_t malformed_rows = 0;
  std::vector<std::string> warnings;

  /// Latest timestamp present in any table.
  Micros trace_end() const {
    Micros end = 0;
    if (!task_events.empty()) end = std::max(end, task_events.back().timestamp);
    for (const auto& u : task_usage) end = std::max(end, u.end);
    if (!machine_events.empty()) end = std::max(end, machine_events.back().timestamp);
    return end;
  }
};

inline TraceTables load_trace(const std::filesystem::path& dir, const ParseOptions& opts = {}) {
  TraceTables t;
  auto open = [&](std::string_view name) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw InputError("cannot open " + (dir / name).string());
    return in;
  };
  auto absorb = [&](std::string_view name, auto& result) {
    t.malformed_rows += result.malformed;
    for (auto& w : result.warnings) t.warnings.push_back(std::string(name) + ": " + w);
  };
  {
    auto in = open(kTaskEventsFile);
    auto r = parse_task_events(in, opts);
    absorb(kTaskEventsFile, r);
    t.task_events = std::move(r.rows);
  }
  {
    auto in = open(kTaskUsageFile);
    auto r = parse_task_usage(in, opts);
    absorb(kTaskUsageFile, r);
    t.task_usage = std::move(r.rows);
  }
  {
    auto in = open(kMachineEventsFile);
    auto r = parse_machine_events(in, opts);
    absorb(kMachineEventsFile, r);
    t.machine_events = std::move(r.rows);
  }
  return t;
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline void write_trace(const std::filesystem::path& dir, const TraceTables& t) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / kTaskEventsFile, serialize_task_events(t.task_events));
  write_text_file(dir / kTaskUsageFile, serialize_task_usage(t.task_usage));
  write_text_file(dir / kMachineEventsFile, serialize_machine_events(t.machine_events));
}

/// Down periods [remove, add) per machine; add is nullopt when the machine
/// never comes back.
struct DownPeriod {
  Micros remove = 0;
  std::optional<Micros> add;
};

struct ValidationReport {
  std::size_t malformed_rows = 0;
  std::size_t duplicate_task_events = 0;
  std::size_t orphan_terminal_events = 0;
  std::size_t repeated_schedules = 0;
  std::size_t machine_sequence_violations = 0;  // ADD/REMOVE not alternating
  std::size_t intervals_overlapping_down = 0;
  std::size_t tasks_on_unknown_machines = 0;
  std::size_t closed_intervals = 0;
  std::size_t open_intervals = 0;
  std::vector<std::string> messages;

  bool ok() const {
    return malformed_rows == 0 && duplicate_task_events == 0 && machine_sequence_violations == 0 &&
           intervals_overlapping_down == 0 && tasks_on_unknown_machines == 0;
  }
};

/// Groups machine events per machine (timestamp order preserved) and derives
/// the down periods under the alternation rule. Sequence violations are
/// counted: a REMOVE while down or an ADD while up is ignored.
struct MachineHistory {
  std::vector<MachineEvent> events;  // this machine only, sorted
  std::vector<DownPeriod> down;
  std::optional<Micros> first_add;
  std::size_t violations = 0;
};

inline std::map<std::string, MachineHistory> machine_histories(const std::vector<MachineEvent>& events) {
  std::map<std::string, MachineHistory> out;
  for (const auto& e : events) out[e.machine_id].events.push_back(e);
  for (auto& [id, h] : out) {
    bool up = false;
    for (const auto& e : h.events) {
      if (e.type == MachineEventType::Update) continue;
      if (e.type == MachineEventType::Add) {
        if (up) {
          ++h.violations;
          continue;
        }
        if (!h.first_add) h.first_add = e.timestamp;
        if (!h.down.empty() && !h.down.back().add) h.down.back().add = e.timestamp;
        up = true;
      } else {
        if (!up) {
          ++h.violations;
          continue;
        }
        h.down.push_back({e.timestamp, std::nullopt});
        up = false;
      }
    }
  }
  return out;
}

inline ValidationReport validate_trace(const TraceTables& t) {
  ValidationReport r;
  r.malformed_rows = t.malformed_rows;
  r.messages = t.warnings;

  {
    std::vector<const TaskEvent*> sorted;
    sorted.reserve(t.task_events.size());
    for (const auto& e : t.task_events) sorted.push_back(&e);
    std::sort(sorted.begin(), sorted.end(), [](const TaskEvent* a, const TaskEvent* b) {
      return std::tie(a->job_id, a->task_index, a->timestamp, a->type) <
             std::tie(b->job_id, b->task_index, b->timestamp, b->type);
    });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      const auto* a = sorted[i - 1];
      const auto* b = sorted[i];
      if (a->job_id == b->job_id && a->task_index == b->task_index && a->timestamp == b->timestamp &&
          a->type == b->type)
        ++r.duplicate_task_events;
    }
  }

  const auto histories = machine_histories(t.machine_events);
  for (const auto& [id, h] : histories) {
    if (h.violations) r.messages.push_back("machine " + id + ": ADD/REMOVE do not alternate");
    r.machine_sequence_violations += h.violations;
  }

  const auto table = build_task_intervals(t.task_events, t.trace_end());
  r.orphan_terminal_events = table.orphans;
  r.repeated_schedules = table.repeated_schedules;
  for (const auto& iv : table.intervals) {
    (iv.end_status == EndStatus::Open ? r.open_intervals : r.closed_intervals)++;
    auto it = histories.find(iv.machine_id);
    if (it == histories.end() || !it->second.first_add) {
      ++r.tasks_on_unknown_machines;
      continue;
    }
    const auto& h = it->second;
    bool overlaps = iv.start < *h.first_add;
    for (const auto& d : h.down) {
      const Micros add = d.add.value_or(INT64_MAX);
      if (iv.start < add && iv.end > d.remove) overlaps = true;
    }
    if (overlaps) ++r.intervals_overlapping_down;
  }
  if (r.intervals_overlapping_down)
    r.messages.push_back(std::to_string(r.intervals_overlapping_down) +
                         " task intervals overlap a machine down period");
  return r;
}

}  // namespace nodefail
