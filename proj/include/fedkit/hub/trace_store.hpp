#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "fedkit/core/format.hpp"
#include "fedkit/core/value.hpp"
#include "fedkit/netem/link.hpp"

namespace fedkit::hub {

inline constexpr std::string_view kTraceHeader = "sim_time_ns,topic,value,unit,quality,source,seq,wall_time_ns";

struct TraceRow {
  SignalSample sample;
  WallTime wall_time{0};
};

/// Canonical order of a trace: (sim_time, source, seq, topic).
inline bool trace_less(const TraceRow& a, const TraceRow& b) {
  const auto& x = a.sample;
  const auto& y = b.sample;
  return std::tie(x.sim_time, x.source, x.seq, x.topic) < std::tie(y.sim_time, y.source, y.seq, y.topic);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_trace_row(std::ostream& os, const TraceRow& r) {
  const auto& s = r.sample;
  os << s.sim_time.count() << ',' << csv_field(s.topic) << ',' << csv_field(format_value(s.value)) << ','
     << csv_field(s.unit) << ',' << to_string(s.quality) << ',' << csv_field(s.source) << ',' << s.seq << ','
     << r.wall_time.count() << '\n';
}

inline void write_trace_csv(std::ostream& os, std::vector<TraceRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), trace_less);
  os << kTraceHeader << '\n';
  for (const auto& r : rows) write_trace_row(os, r);
}

inline std::string trace_csv(std::vector<TraceRow> rows) {
  std::ostringstream os;
  write_trace_csv(os, std::move(rows));
  return os.str();
}

struct TraceQuery {
  std::string run;
  std::optional<std::string> topic;  // glob pattern
  std::optional<SimTime> from;
  std::optional<SimTime> to;  // exclusive
};

/// Append-only canonical trace of all runs. Rows are unique on
/// (run, source, topic, seq), which makes replication idempotent.
class TraceStore {
 public:
  using Listener = std::function<void(const std::string& run, const TraceRow&)>;

  /// Returns false, and stores nothing, for a duplicate key.
  bool append(const std::string& run, const SignalSample& s, WallTime wall) {
    std::vector<Listener> listeners;
    TraceRow row{s, wall};
    {
      std::lock_guard lock(mu_);
      if (!keys_.emplace(run, s.source, s.topic, s.seq).second) return false;
      runs_[run].push_back(row);
      ++size_;
      for (const auto& [_, l] : listeners_) listeners.push_back(l);
    }
    for (const auto& l : listeners) l(run, row);
    return true;
  }

  bool contains(const std::string& run, const std::string& source, const std::string& topic, std::uint64_t seq) const {
    std::lock_guard lock(mu_);
    return keys_.count({run, source, topic, seq}) > 0;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return size_;
  }

  std::vector<TraceRow> rows(const std::string& run) const {
    std::lock_guard lock(mu_);
    auto it = runs_.find(run);
    if (it == runs_.end()) return {};
    auto out = it->second;
    std::stable_sort(out.begin(), out.end(), trace_less);
    return out;
  }

  std::vector<TraceRow> query(const TraceQuery& q) const {
    std::vector<TraceRow> out;
    for (auto& r : rows(q.run)) {
      if (q.topic && !glob_match(*q.topic, r.sample.topic)) continue;
      if (q.from && r.sample.sim_time < *q.from) continue;
      if (q.to && r.sample.sim_time >= *q.to) continue;
      out.push_back(std::move(r));
    }
    return out;
  }

  std::string csv(const std::string& run) const { return trace_csv(rows(run)); }

  /// FNV-1a over every run's canonical CSV; equal stores hash equal.
  std::uint64_t hash() const {
    std::vector<std::string> ids;
    {
      std::lock_guard lock(mu_);
      for (const auto& [id, _] : runs_) ids.push_back(id);
    }
    std::string all;
    for (const auto& id : ids) all += id + "\n" + csv(id);
    return netem::fnv1a(all);
  }

  int subscribe(Listener l) {
    std::lock_guard lock(mu_);
    listeners_.emplace(++next_listener_, std::move(l));
    return next_listener_;
  }
  void unsubscribe(int id) {
    std::lock_guard lock(mu_);
    listeners_.erase(id);
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::vector<TraceRow>> runs_;
  std::set<std::tuple<std::string, std::string, std::string, std::uint64_t>> keys_;
  std::size_t size_{0};
  std::map<int, Listener> listeners_;
  int next_listener_{0};
};

}  // namespace fedkit::hub
