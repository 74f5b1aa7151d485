#pragma once

#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedkit/core/json_util.hpp"
#include "fedkit/hub/trace_store.hpp"

namespace fedkit::cli {

namespace detail {

inline std::vector<std::string> csv_fields(const std::string& line, std::size_t lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) fail(ErrorCode::SyntaxError, "line " + std::to_string(lineno) + ": unterminated quote");
  out.push_back(std::move(cur));
  return out;
}

inline Value parse_value(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  try {
    return parse_double(s);
  } catch (const Error&) {
    return s;
  }
}

}  // namespace detail

/// Reads a trace in the hub CSV format; the header must match exactly.
inline std::vector<hub::TraceRow> read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != hub::kTraceHeader)
    fail(ErrorCode::SyntaxError, "trace header must be '" + std::string(hub::kTraceHeader) + "'");
  std::vector<hub::TraceRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::csv_fields(line, lineno);
    if (f.size() != 8) fail(ErrorCode::SyntaxError, "line " + std::to_string(lineno) + ": expected 8 fields");
    hub::TraceRow r;
    r.sample.sim_time = SimTime{parse_int<std::int64_t>(f[0])};
    r.sample.topic = f[1];
    r.sample.value = detail::parse_value(f[2]);
    r.sample.unit = f[3];
    r.sample.quality = quality_from_string(f[4]);
    r.sample.source = f[5];
    r.sample.seq = parse_int<std::uint64_t>(f[6]);
    r.wall_time = WallTime{parse_int<std::int64_t>(f[7])};
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<hub::TraceRow> load_trace_csv(const std::string& path) {
  std::istringstream is(read_text_file(path));
  return read_trace_csv(is);
}

enum class Metric { rms, linf };

inline std::optional<Metric> metric_from_string(std::string_view s) {
  if (s == "rms") return Metric::rms;
  if (s == "linf") return Metric::linf;
  return std::nullopt;
}

struct TopicMetrics {
  std::string topic;
  std::size_t points{0};
  double rms{0.0};
  double linf{0.0};
};

struct CompareResult {
  double rms{0.0};
  double linf{0.0};
  std::vector<TopicMetrics> topics;
  Metric metric{Metric::linf};
  double tolerance{0.0};
  bool pass{false};

  double value() const { return metric == Metric::rms ? rms : linf; }

  Json to_json() const {
    Json per = Json::array();
    for (const auto& t : topics) per.push_back({{"topic", t.topic}, {"points", t.points}, {"rms", t.rms}, {"linf", t.linf}});
    return {{"metric", metric == Metric::rms ? "rms" : "linf"},
            {"tolerance", tolerance},
            {"rms", rms},
            {"linf", linf},
            {"pass", pass},
            {"topics", per}};
  }
};

/// Pointwise difference of two traces on numeric topics. Grids must match
/// exactly per topic (same sim times); a missing point is a GridMismatch.
/// When a trace holds several rows for one (topic, time), the last in trace
/// order wins.
inline CompareResult compare_traces(const std::vector<hub::TraceRow>& a, const std::vector<hub::TraceRow>& b, Metric metric,
                                    double tolerance, const std::optional<std::string>& topic_glob = std::nullopt) {
  using Grid = std::map<std::string, std::map<std::int64_t, double>>;
  auto grid = [&](std::vector<hub::TraceRow> rows) {
    std::stable_sort(rows.begin(), rows.end(), hub::trace_less);
    Grid g;
    for (const auto& r : rows) {
      if (topic_glob && !glob_match(*topic_glob, r.sample.topic)) continue;
      const auto v = numeric(r.sample.value);
      if (!v) continue;
      g[r.sample.topic][r.sample.sim_time.count()] = *v;
    }
    return g;
  };
  const auto ga = grid(a), gb = grid(b);
  for (const auto& [topic, _] : gb)
    if (!ga.count(topic)) fail(ErrorCode::GridMismatch, "topic " + topic + " only in the second trace");

  CompareResult res;
  res.metric = metric;
  res.tolerance = tolerance;
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& [topic, pa] : ga) {
    auto it = gb.find(topic);
    if (it == gb.end()) fail(ErrorCode::GridMismatch, "topic " + topic + " only in the first trace");
    const auto& pb = it->second;
    TopicMetrics tm{topic, pa.size(), 0.0, 0.0};
    double tsq = 0.0;
    for (const auto& [t, va] : pa) {
      auto jt = pb.find(t);
      if (jt == pb.end()) fail(ErrorCode::GridMismatch, topic + " has no point at " + std::to_string(t) + " ns in the second trace");
      const double d = va - jt->second;
      tsq += d * d;
      tm.linf = std::max(tm.linf, std::abs(d));
    }
    if (pb.size() != pa.size()) fail(ErrorCode::GridMismatch, topic + " has extra points in the second trace");
    tm.rms = pa.empty() ? 0.0 : std::sqrt(tsq / static_cast<double>(pa.size()));
    sq += tsq;
    n += pa.size();
    res.linf = std::max(res.linf, tm.linf);
    res.topics.push_back(tm);
  }
  res.rms = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
  res.pass = res.value() <= tolerance;
  return res;
}

}  // namespace fedkit::cli
