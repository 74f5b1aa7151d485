#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "fedkit/cli/artifacts.hpp"
#include "fedkit/cli/compare.hpp"
#include "fedkit/experiment/validate.hpp"

namespace fedkit::cli {

/// Process exit codes of fedrun.
enum ExitCode : int { kExitOk = 0, kExitCompareFailed = 1, kExitInvalid = 2, kExitFault = 3 };

/// Bad input documents map to 2, everything that goes wrong while running to 3.
inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigError:
    case ErrorCode::SyntaxError:
    case ErrorCode::SchemaError:
    case ErrorCode::GridMismatch:
    case ErrorCode::UnmappedTopic:
    case ErrorCode::IncompatibleUnit:
    case ErrorCode::UnknownTopic:
    case ErrorCode::UnknownSite:
      return kExitInvalid;
    default:
      return kExitFault;
  }
}

/// sites.json next to the experiment unless given explicitly.
inline std::filesystem::path sites_path_for(const std::filesystem::path& exp, const std::optional<std::string>& sites) {
  if (sites) return *sites;
  return exp.parent_path() / "sites.json";
}

struct ValidateArgs {
  std::string experiment;
  std::optional<std::string> sites;
  bool json{false};
};

inline int cmd_validate(const ValidateArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const auto reg = experiment::load_registry(sites_path_for(a.experiment, a.sites).string());
    const auto exp = experiment::load_experiment(a.experiment);
    const auto report = experiment::validate_layers(exp, reg);
    if (a.json)
      out << report.to_json().dump(2) << '\n';
    else
      out << report.to_text();
    return report.valid() ? kExitOk : kExitInvalid;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code_for(e.code());
  }
}

struct RunArgs {
  std::string experiment;
  std::optional<std::string> sites;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::string out{"run"};
  bool force{false};
  sync::RunOptions options;
};

/// Runs every site in-process and writes the artifacts. Validation errors
/// stop the run unless `force`.
inline int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  experiment::Registry reg;
  experiment::ExperimentDescription exp;
  try {
    reg = experiment::load_registry(sites_path_for(a.experiment, a.sites).string());
    exp = experiment::load_experiment(a.experiment);
    if (a.mode) {
      const auto m = experiment::sync_mode_from_string(*a.mode);
      if (!m) fail(ErrorCode::ConfigError, "unknown mode '" + *a.mode + "'");
      exp.sync_mode = *m;
    }
    if (a.seed) exp.seed = *a.seed;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code_for(e.code());
  }

  const auto report = experiment::validate_layers(exp, reg);
  if (!report.valid()) {
    err << report.to_text();
    if (!a.force) return kExitInvalid;
  }

  try {
    const auto r = sync::run_local(reg, exp, a.options);
    write_run_artifacts(a.out, exp, reg, r);
    out << "run " << r.run_id << " " << to_string(r.mode) << " seed " << r.seed << ": " << r.trace.size()
        << " trace rows -> " << a.out << '\n';
    for (const auto& w : r.not_converged)
      err << "window " << w.window_index << " did not converge (residual " << format_double(w.residual) << ")\n";
    return kExitOk;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return kExitFault;
  }
}

struct CompareArgs {
  std::string a, b;
  std::string metric{"linf"};
  double tolerance{0.0};
  std::optional<std::string> topic;
  bool json{false};
};

/// 0 when the metric is within tolerance, 1 when it is not.
inline int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const auto metric = metric_from_string(a.metric);
    if (!metric) fail(ErrorCode::ConfigError, "metric must be rms or linf");
    const auto r = compare_traces(load_trace_csv(a.a), load_trace_csv(a.b), *metric, a.tolerance, a.topic);
    if (a.json) {
      out << r.to_json().dump(2) << '\n';
    } else {
      for (const auto& t : r.topics)
        out << t.topic << " points " << t.points << " rms " << format_double(t.rms) << " linf " << format_double(t.linf) << '\n';
      out << "rms " << format_double(r.rms) << " linf " << format_double(r.linf) << " tol " << format_double(a.tolerance)
          << (r.pass ? " pass" : " FAIL") << '\n';
    }
    return r.pass ? kExitOk : kExitCompareFailed;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code_for(e.code());
  }
}

/// "host:port" or ":port".
inline std::pair<std::string, unsigned short> parse_listen(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) fail(ErrorCode::ConfigError, "listen address must be host:port");
  std::string host = s.substr(0, colon);
  if (host.empty()) host = "0.0.0.0";
  const auto port = parse_int<std::int64_t>(s.substr(colon + 1));
  if (port < 0 || port > 65535) fail(ErrorCode::ConfigError, "port out of range in " + s);
  return {host, static_cast<unsigned short>(port)};
}

}  // namespace fedkit::cli
