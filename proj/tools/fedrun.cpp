#include <csignal>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "fedkit/cli/commands.hpp"
#include "fedkit/hub/server.hpp"

using namespace fedkit;

namespace {

void setup_logging() {
  spdlog::set_pattern("%H:%M:%S.%e %^%l%$ %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("FEDRUN_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

struct ServeArgs {
  std::string sites;
  std::string listen{"127.0.0.1:8080"};
  std::string console;
  std::string data{"fedrun-data"};
};

int serve(const ServeArgs& a) {
  // Block the shutdown signals before any thread exists so only sigwait sees them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  experiment::Registry reg;
  hub::ServerOptions opt;
  try {
    reg = experiment::load_registry(a.sites);
    std::tie(opt.address, opt.http_port) = cli::parse_listen(a.listen);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return cli::exit_code_for(e.code());
  }
  opt.console_dir = a.console;
  opt.log = [](const std::string& m) { spdlog::info("{}", m); };

  hub::Hub hub(reg);
  hub::HubServer server(hub, opt);
  try {
    server.start();
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return cli::exit_code_for(e.code());
  }
  std::cout << "listening on http://" << opt.address << ':' << server.http_port() << " (participants on port "
            << server.stream_port() << ")" << std::endl;

  int sig = 0;
  sigwait(&set, &sig);
  spdlog::warn("signal {}, shutting down", sig);
  server.stop();
  try {
    const auto rows = server.persist(a.data);
    std::cout << "persisted " << rows << " trace rows to " << a.data << std::endl;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return cli::kExitFault;
  }
  return cli::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"fedrun: run and serve federated co-simulation experiments"};
  app.require_subcommand(1);

  cli::ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Check an experiment against the five layers");
  validate->add_option("experiment", va.experiment)->required()->check(CLI::ExistingFile);
  validate->add_option("--sites", va.sites, "Site registry (default: sites.json beside the experiment)");
  validate->add_flag("--json", va.json, "Print the report as JSON");

  cli::RunArgs ra;
  auto* run = app.add_subcommand("run", "Run all sites in this process");
  run->add_option("experiment", ra.experiment)->required()->check(CLI::ExistingFile);
  run->add_option("--sites", ra.sites, "Site registry (default: sites.json beside the experiment)");
  run->add_option("--mode", ra.mode, "conservative, best_effort or waveform_relaxation");
  run->add_option("--seed", ra.seed);
  run->add_option("--out", ra.out, "Artifact directory")->capture_default_str();
  run->add_flag("--force", ra.force, "Run even if validation reports errors");
  run->add_flag("--paced", ra.options.paced, "Best-effort only: track the wall clock");

  cli::CompareArgs ca;
  auto* compare = app.add_subcommand("compare", "Compare two trace CSVs on a shared grid");
  compare->add_option("a", ca.a)->required()->check(CLI::ExistingFile);
  compare->add_option("b", ca.b)->required()->check(CLI::ExistingFile);
  compare->add_option("--metric", ca.metric)->check(CLI::IsMember({"rms", "linf"}))->capture_default_str();
  compare->add_option("--tol", ca.tolerance)->required();
  compare->add_option("--topic", ca.topic, "Glob over canonical topic names");
  compare->add_flag("--json", ca.json);

  ServeArgs sa;
  auto* srv = app.add_subcommand("serve", "Run the hub daemon");
  srv->add_option("--sites", sa.sites)->required();
  srv->add_option("--listen", sa.listen, "HTTP address; participants connect on port + 1")->capture_default_str();
  srv->add_option("--console", sa.console, "Directory served under /console/");
  srv->add_option("--data", sa.data, "Where traces are written on shutdown")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kExitInvalid;
  }

  if (*validate) return cli::cmd_validate(va, std::cout, std::cerr);
  if (*run) return cli::cmd_run(ra, std::cout, std::cerr);
  if (*compare) return cli::cmd_compare(ca, std::cout, std::cerr);
  return serve(sa);
}
