#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "fedkit/experiment/parse.hpp"
#include "fedkit/sync/causality.hpp"
#include "fedkit/sync/runner.hpp"

namespace fedkit::cli {

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

inline Json run_summary(const experiment::ExperimentDescription& exp, const experiment::Registry& reg,
                        const sync::RunResult& r) {
  Json nc = Json::array();
  for (const auto& w : r.not_converged) nc.push_back({{"window_index", w.window_index}, {"residual", w.residual}});
  std::size_t misses = 0;
  for (const auto& [_, d] : r.deadlines) misses += d.misses();
  return {{"run_id", r.run_id},
          {"mode", std::string(to_string(r.mode))},
          {"seed", r.seed},
          {"stopped", r.stopped},
          {"trace_rows", r.trace.size()},
          {"trace_hash", hex64(netem::fnv1a(hub::trace_csv(r.trace)))},
          {"not_converged", nc},
          {"deadline_misses", misses},
          {"causality_violations", sync::detect_causality_violations(r.consumptions, exp, reg).size()},
          {"experiment", experiment::to_json(exp)}};
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) fail(ErrorCode::ConfigError, "cannot write " + p.string());
  return os;
}

}  // namespace detail

/// Writes trace.csv and summary.json, plus grants.csv (conservative),
/// wr_log.csv (waveform relaxation) and deadline_report.csv (HIL present).
/// Logs left over from an earlier run in the same directory are removed.
inline void write_run_artifacts(const std::filesystem::path& dir, const experiment::ExperimentDescription& exp,
                                const experiment::Registry& reg, const sync::RunResult& r) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::ConfigError, "cannot create " + dir.string() + ": " + ec.message());

  for (const char* stale : {"grants.csv", "wr_log.csv", "deadline_report.csv"}) fs::remove(dir / stale, ec);

  detail::open_out(dir / "trace.csv") << hub::trace_csv(r.trace);
  if (r.mode == experiment::SyncMode::conservative) {
    auto os = detail::open_out(dir / "grants.csv");
    r.write_grants_csv(os);
  }
  if (r.mode == experiment::SyncMode::waveform_relaxation) {
    auto os = detail::open_out(dir / "wr_log.csv");
    r.write_wr_log_csv(os);
  }
  if (!r.deadlines.empty()) {
    auto os = detail::open_out(dir / "deadline_report.csv");
    r.write_deadline_csv(os);
  }
  detail::open_out(dir / "summary.json") << run_summary(exp, reg, r).dump(2) << '\n';
}

}  // namespace fedkit::cli
