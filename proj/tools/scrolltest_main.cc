// scrolltest: study server and offline analysis tools.
//
//   scrolltest serve    --config study.yaml --port 8080 --data-dir data/
//   scrolltest simulate --config study.yaml --agents agents.yaml --seed 7 --out sim/
//   scrolltest analyze  --data sim/ [--per-trial] [--out tables/]
//   scrolltest validate --data sim/ [--epsilon 2]
//   scrolltest selftest [--cases 1000] [--seed 1]
//   scrolltest export   --data sim/ --out archive/ [filters]
//   scrolltest import   --data store/ --from archive/
//
// Exit codes: 0 success, 1 failure (including validation mismatches),
// 2 usage error.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <thread>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "scrolltest/replay_oracle.h"
#include "scrolltest/report.h"
#include "scrolltest/server.h"
#include "scrolltest/session_store.h"
#include "scrolltest/simulator.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr const char* kDataDirEnv = "SCROLLTEST_DATA_DIR";

// Reported as the command's message with exit code 1.
struct CommandFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

scrolltest::StudyConfig config_from(const std::string& path) {
  if (path.empty()) return scrolltest::StudyConfig{};
  return scrolltest::load_study_config(path);
}

struct FilterArgs {
  std::string technique;
  std::string participant;
  std::string condition;
  std::string provenance;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--technique", technique, "Only this technique id");
    cmd->add_option("--participant", participant, "Only this participant id");
    cmd->add_option("--condition", condition, "Only trials of this condition")
        ->check(CLI::IsMember({"unknown", "known"}));
    cmd->add_option("--provenance", provenance, "Only human or simulated sessions")
        ->check(CLI::IsMember({"human", "simulated"}));
  }

  scrolltest::SessionFilter filter() const {
    scrolltest::SessionFilter f;
    if (!technique.empty()) f.technique = technique;
    if (!participant.empty()) f.participantId = participant;
    if (!condition.empty()) f.condition = scrolltest::parse_condition(condition);
    if (!provenance.empty()) f.provenance = scrolltest::parse_provenance(provenance);
    return f;
  }
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw CommandFailure(fmt::format("{}: cannot write", path.string()));
}

// Opens an existing store for reading; a missing directory has no sessions.
scrolltest::SessionStore existing_store(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw CommandFailure(fmt::format("{}: no sessions found", dir.string()));
  return scrolltest::SessionStore(dir);
}

int serve(const std::string& configPath, const std::string& host, int port, const std::string& dataDir,
          const std::string& staticDir) {
  const auto config = config_from(configPath);
  config.validate();
  scrolltest::SessionStore store(dataDir);

  // SIGINT/SIGTERM are taken by a watcher thread that stops the server.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  scrolltest::StudyServer server(store, config,
                                 staticDir.empty() ? std::nullopt : std::optional<fs::path>(staticDir));
  const int bound = server.bind(host, port);
  std::thread watcher([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  watcher.detach();
  std::cerr << fmt::format("serving {} technique(s) on http://{}:{} (data: {})\n", config.techniques.size(),
                           host, bound, store.dir().string());
  server.run();
  std::cerr << "server stopped\n";
  return 0;
}

int simulate(const std::string& configPath, const std::string& agentsPath, std::optional<std::uint64_t> seed,
             const std::string& out) {
  auto config = config_from(configPath);
  if (seed) config.seed = *seed;
  config.validate();
  const auto agents = agentsPath.empty() ? scrolltest::default_agents(config)
                                         : scrolltest::load_agent_table(agentsPath, config);
  const auto sessions = scrolltest::simulate_study(config, agents, config.seed);
  scrolltest::SessionStore store(out);
  store.add_simulated(sessions, config);
  std::size_t trials = 0;
  for (const auto& s : sessions) trials += s.trials.size();
  std::cout << fmt::format("wrote {} sessions, {} trials to {} (seed {})\n", sessions.size(), trials,
                           store.dir().string(), config.seed);
  return 0;
}

int analyze(const std::string& data, bool perTrial, const std::string& out, const FilterArgs& filters) {
  auto store = existing_store(data);
  const auto obs = store.observations(filters.filter());
  if (obs.empty()) throw CommandFailure(fmt::format("{}: no sessions found", data));
  scrolltest::ReportOptions options;
  options.perTrialFits = perTrial;
  const scrolltest::Report report = scrolltest::aggregate_report(obs, options);
  std::cout << scrolltest::render_text(report);
  if (!out.empty()) {
    fs::create_directories(out);
    const fs::path dir(out);
    const auto rows = report.table1();
    write_file(dir / "table1_means.csv", scrolltest::table1_csv(rows));
    write_file(dir / "table2_models.csv", scrolltest::summary_csv(report));
    write_file(dir / "table3_correlations.csv", scrolltest::correlations_csv(report));
    write_file(dir / "fits.csv", scrolltest::fits_csv(report));
    write_file(dir / "distance_groups.csv", scrolltest::distance_groups_csv(report));
    write_file(dir / "frame_sizes.csv", scrolltest::frame_sizes_csv(report));
    std::cerr << fmt::format("tables written to {}\n", dir.string());
  }
  return 0;
}

int validate(const std::string& data, std::optional<double> epsilon) {
  auto store = existing_store(data);
  if (store.sessions().empty()) throw CommandFailure(fmt::format("{}: no sessions found", data));
  const auto report = store.revalidate(epsilon);
  std::cout << report.to_text();
  return report.clean() ? 0 : kExitFailure;
}

int selftest(int cases, std::uint64_t seed) {
  const auto result = scrolltest::oracle::run_selftest(seed, cases);
  std::cout << fmt::format("selftest: {} cases, {} mismatches (seed {})\n", result.cases, result.mismatches,
                           seed);
  return result.mismatches == 0 && result.cases == cases ? 0 : kExitFailure;
}

int export_sessions(const std::string& data, const std::string& out, const FilterArgs& filters) {
  auto store = existing_store(data);
  const int trials = store.export_to(out, filters.filter());
  std::cout << fmt::format("exported {} trials to {}\n", trials, out);
  return 0;
}

int import_sessions(const std::string& data, const std::string& from) {
  scrolltest::SessionStore store(data);
  const int trials = store.import_from(from);
  std::cout << fmt::format("imported {} trials into {}\n", trials, data);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scrolling speed-and-accuracy study server and analysis tools", "scrolltest"};
  app.require_subcommand(1);

  std::string configPath, agentsPath, data, out, staticDir, host = "127.0.0.1", from;
  int port = 8080;
  std::uint64_t seed = 0;
  int cases = 1000;
  double epsilon = 0.0;
  bool perTrial = false;
  FilterArgs filters;

  std::string dataDir = "data";
  if (const char* env = std::getenv(kDataDirEnv)) dataDir = env;

  auto* serveCmd = app.add_subcommand("serve", "Run the HTTP study server");
  serveCmd->add_option("--config", configPath, "Study config (YAML)")->check(CLI::ExistingFile);
  serveCmd->add_option("--host", host, "Bind address")->capture_default_str();
  serveCmd->add_option("--port", port, "Port; 0 picks a free one")->capture_default_str()->check(CLI::Range(0, 65535));
  serveCmd->add_option("--data-dir", dataDir, fmt::format("Session store directory (env {})", kDataDirEnv))
      ->capture_default_str();
  serveCmd->add_option("--static-dir", staticDir, "Serve participant UI assets from this directory")
      ->check(CLI::ExistingDirectory);

  auto* simulateCmd = app.add_subcommand("simulate", "Write a synthetic study from scroller agents");
  simulateCmd->add_option("--config", configPath, "Study config (YAML)")->check(CLI::ExistingFile);
  simulateCmd->add_option("--agents", agentsPath, "Agent table (YAML); default calibrated agents otherwise")
      ->check(CLI::ExistingFile);
  auto* seedOpt = simulateCmd->add_option("--seed", seed, "Study seed (overrides the config)");
  simulateCmd->add_option("--out", out, "Output store directory")->required();

  auto* analyzeCmd = app.add_subcommand("analyze", "Aggregate tables and significance tests");
  analyzeCmd->add_option("--data", data, "Session store directory")->required();
  analyzeCmd->add_flag("--per-trial", perTrial, "Fit regression models to individual trials");
  analyzeCmd->add_option("--out", out, "Also write CSV tables to this directory");
  filters.add_to(analyzeCmd);

  auto* validateCmd = app.add_subcommand("validate", "Recompute every stored trial and report differences");
  validateCmd->add_option("--data", data, "Session store directory")->required();
  auto* epsOpt = validateCmd->add_option("--epsilon", epsilon, "Switchback hysteresis in px (default: as recorded)")
                     ->check(CLI::NonNegativeNumber);

  auto* selftestCmd = app.add_subcommand("selftest", "Check the metrics engine against the replay oracle");
  selftestCmd->add_option("--cases", cases, "Random traces to check")->capture_default_str()->check(CLI::PositiveNumber);
  auto* selftestSeed = selftestCmd->add_option("--seed", seed, "Random seed (default 1)");

  auto* exportCmd = app.add_subcommand("export", "Copy sessions and a metrics CSV to an archive directory");
  exportCmd->add_option("--data", data, "Session store directory")->required();
  exportCmd->add_option("--out", out, "Archive directory (must hold no sessions)")->required();
  filters.add_to(exportCmd);

  auto* importCmd = app.add_subcommand("import", "Add the sessions of an archive to a store");
  importCmd->add_option("--data", data, "Session store directory")->required();
  importCmd->add_option("--from", from, "Archive directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*serveCmd) return serve(configPath, host, port, dataDir, staticDir);
    if (*simulateCmd) {
      return simulate(configPath, agentsPath, *seedOpt ? std::optional(seed) : std::nullopt, out);
    }
    if (*analyzeCmd) return analyze(data, perTrial, out, filters);
    if (*validateCmd) return validate(data, *epsOpt ? std::optional(epsilon) : std::nullopt);
    if (*selftestCmd) return selftest(cases, *selftestSeed ? seed : 1);
    if (*exportCmd) return export_sessions(data, out, filters);
    if (*importCmd) return import_sessions(data, from);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
