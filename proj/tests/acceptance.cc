// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance             run every criterion
//   acceptance <name>...   run the named criteria
//   acceptance --list      print the criterion names
//
// Exit status is 0 iff every criterion that ran passed.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "scripted_client.h"
#include "scrolltest/replay_oracle.h"
#include "scrolltest/report.h"
#include "scrolltest/rng.h"
#include "scrolltest/session_store.h"
#include "scrolltest/simulator.h"
#include "scrolltest/stats_models.h"
#include "test_support.h"

namespace scrolltest {
namespace {

namespace fs = std::filesystem;
using testing::ojson;

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects failed checks so that a criterion reports everything it saw.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  Outcome outcome(const std::string& summary) const {
    if (failed_ == 0) return {true, summary};
    std::string d = fmt::format("{}; {} of {} checks failed:", summary, failed_, total_);
    for (const std::string& f : failures_) d += " [" + f + "]";
    return {false, d};
  }

 private:
  int total_ = 0;
  int failed_ = 0;
  std::vector<std::string> failures_;
};

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() /
              fmt::format("scrolltest-acceptance-{}-{}", tag, std::random_device{}())) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    out[e.path().filename().string()] = testing::read_file(e.path().string());
  }
  return out;
}

// compute_metrics against the independent replay on random traces.
Outcome oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  const oracle::SelfTestResult r = oracle::run_selftest(20240601, 1000);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Checks c;
  c.expect(r.cases == 1000, fmt::format("{} cases", r.cases));
  c.expect(r.mismatches == 0, fmt::format("{} mismatches", r.mismatches));
  c.expect(seconds < 10.0, fmt::format("{:.2f} s", seconds));
  return c.outcome(fmt::format("{} traces, {} mismatches, {:.2f} s", r.cases, r.mismatches, seconds));
}

// Band membership against direct containment at every integer offset.
Outcome band_property() {
  Rng rng(77);
  Checks c;
  long offsets = 0;
  for (int i = 0; i < 50; ++i) {
    const TrialGeometry g = oracle::random_small_geometry(rng);
    const TargetBand band = compute_target_band(g);
    const long top = static_cast<long>(std::floor(g.max_scroll()));
    for (long s = 0; s <= top; ++s, ++offsets) {
      const bool inBand = band.sMin <= s && s <= band.sMax;
      c.expect(inBand == oracle::target_inside_frame(g, static_cast<double>(s)),
               fmt::format("geometry {} offset {}", i, s));
    }
  }
  return c.outcome(fmt::format("50 geometries, {} offsets", offsets));
}

std::vector<DistanceTime> noiseless(const std::vector<int>& distances, double a, double b, Model m) {
  std::vector<DistanceTime> pts;
  for (int d : distances) {
    const double x = m == Model::kLinear ? d : std::log2(static_cast<double>(d));
    pts.push_back({static_cast<double>(d), a + b * x});
  }
  return pts;
}

// Every published coefficient pair refits from data generated on its own law.
Outcome regression_round_trip() {
  const std::vector<int> distances = StudyConfig{}.distances;
  Checks c;
  int fits = 0;
  for (const testing::Coefficients& row : testing::table2_fixture()) {
    const struct {
      const char* label;
      double a, b;
      Model model;
    } laws[] = {{"unknown linear", row.aUnknownLinear, row.bUnknownLinear, Model::kLinear},
                {"known linear", row.aKnownLinear, row.bKnownLinear, Model::kLinear},
                {"known log", row.aKnownLog, row.bKnownLog, Model::kLog2}};
    for (const auto& law : laws) {
      const auto pts = noiseless(distances, law.a, law.b, law.model);
      const RegressionFit f = law.model == Model::kLinear ? fit_linear(pts) : fit_log2(pts);
      const std::string where = row.technique + " " + law.label;
      c.expect(std::abs(f.a - law.a) <= 1e-6, where + " a");
      c.expect(std::abs(f.b - law.b) <= 1e-6, where + " b");
      c.expect(std::abs(f.r2 - 1.0) <= 1e-9, where + " r2");
      ++fits;
    }
  }
  c.expect(fits == 33, fmt::format("{} fits", fits));
  return c.outcome(fmt::format("{} fits over 11 techniques", fits));
}

// Pooled models: exact refit, then slope recovery under noise.
Outcome aggregate_model() {
  const std::vector<int> distances = StudyConfig{}.distances;
  struct Law {
    const char* label;
    double a, b;
    Model model;
  };
  const Law laws[] = {{"linear", 2.044, 0.05, Model::kLinear},
                      {"log2", -0.302, 1.043, Model::kLog2}};
  Checks c;
  std::string summary;
  for (const Law& law : laws) {
    const auto exact = noiseless(distances, law.a, law.b, law.model);
    const RegressionFit f = law.model == Model::kLinear ? fit_linear(exact) : fit_log2(exact);
    c.expect(std::abs(f.a - law.a) <= 1e-9 && std::abs(f.b - law.b) <= 1e-9 &&
                 std::abs(f.r2 - 1.0) <= 1e-9,
             fmt::format("{} exact refit a={} b={} r2={}", law.label, f.a, f.b, f.r2));
    int within = 0;
    for (int seed = 0; seed < 100; ++seed) {
      Rng rng(mix_seed(1000 + seed, law.model == Model::kLinear ? 1 : 2));
      std::vector<DistanceTime> pts;
      for (const DistanceTime& p : exact) {
        for (int i = 0; i < 195; ++i) pts.push_back({p.distance, p.time + rng.normal(0.0, 0.3)});
      }
      const RegressionFit n = law.model == Model::kLinear ? fit_linear(pts) : fit_log2(pts);
      if (std::abs(n.b - law.b) <= 0.1 * law.b) ++within;
    }
    c.expect(within >= 95, fmt::format("{} slope within 10% in {}/100", law.label, within));
    summary += fmt::format("{}{} b within 10% in {}/100", summary.empty() ? "" : ", ", law.label, within);
  }
  return c.outcome("exact refits; " + summary);
}

std::vector<TrialObservation> observations_of(const std::vector<SimSession>& sessions) {
  std::vector<TrialObservation> obs;
  for (const SimSession& s : sessions) {
    for (const SimTrial& t : s.trials) {
      obs.push_back({t.spec.technique, t.spec.condition, t.spec.frameHeightFactor,
                     t.spec.targetRowIndex, t.spec.distanceGroup, t.groundTruth});
    }
  }
  return obs;
}

// Simulated study at full scale has the published design degrees of freedom.
Outcome study_shape() {
  const StudyConfig config;
  const auto sessions = simulate_study(config, default_agents(config, 40.0), 11);
  const Report report = aggregate_report(observations_of(sessions));
  Checks c;
  c.expect(sessions.size() == 33, fmt::format("{} sessions", sessions.size()));
  std::string summary = fmt::format("{} sessions", sessions.size());
  for (const ConditionAnalysis& a : report.conditions) {
    int trials = 0;
    for (const SimSession& s : sessions) {
      for (const SimTrial& t : s.trials) trials += t.spec.condition == a.condition;
    }
    const std::string cond(to_string(a.condition));
    c.expect(trials == 2145, fmt::format("{}: {} trials", cond, trials));
    c.expect(a.perTrial.has_value(), cond + ": no ANOVA");
    if (!a.perTrial) continue;
    c.expect(a.perTrial->dfBetween == 10 && a.perTrial->dfWithin == 2134,
             fmt::format("{}: df ({}, {})", cond, a.perTrial->dfBetween, a.perTrial->dfWithin));
    summary += fmt::format(", {} {} trials F({}, {})", cond, trials, a.perTrial->dfBetween,
                           a.perTrial->dfWithin);
  }
  c.expect(report.conditions.size() == 2, "two conditions");
  return c.outcome(summary);
}

TrialSpec spec_at(const std::string& technique, Condition condition, double frame, int row) {
  TrialSpec s;
  s.condition = condition;
  s.technique = technique;
  s.frameHeightFactor = frame;
  s.targetRowIndex = row;
  s.distanceGroup = group_distance(row);
  return s;
}

// Winner of linear vs log2 for one agent over distances of at least 11 rows.
Model winner_for(const AgentParams& agent, const std::string& technique, Condition condition,
                 const StudyConfig& config, std::uint64_t seed) {
  std::vector<DistanceTime> pts;
  std::uint64_t trialSeed = seed * 100000;
  for (int rep = 0; rep < 2; ++rep) {
    for (double frame : config.frameFactors) {
      for (int d : config.distances) {
        if (d < 11) continue;
        const TrialSpec spec = spec_at(technique, condition, frame, d);
        const SimTrial t = simulate_trial(agent, spec, geometry_for(spec, config), ++trialSeed);
        pts.push_back({static_cast<double>(d), t.groundTruth.movementTimeMs / 1000.0});
      }
    }
  }
  return compare_fits(pts).winner;
}

Outcome model_selection() {
  const StudyConfig config;
  const AgentTable agents = default_agents(config, 30.0);
  Checks c;
  int worstUnknown = 20, worstKnown = 20;
  for (const auto& [technique, pair] : agents) {
    AgentParams unknown = pair.unknown;
    AgentParams known = pair.known;
    unknown.reactionSdMs = known.reactionSdMs = 120.0;
    int linearWins = 0, logWins = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      linearWins += winner_for(unknown, technique, Condition::kUnknown, config, seed) == Model::kLinear;
      logWins += winner_for(known, technique, Condition::kKnown, config, seed) == Model::kLog2;
    }
    c.expect(!unknown.knowsTarget && linearWins >= 18,
             fmt::format("{} unknown: linear wins {}/20", technique, linearWins));
    c.expect(known.knowsTarget && known.kind == AgentKind::kFlickFriction && logWins >= 18,
             fmt::format("{} known: log wins {}/20", technique, logWins));
    worstUnknown = std::min(worstUnknown, linearWins);
    worstKnown = std::min(worstKnown, logWins);
  }
  AgentParams notched;
  notched.kind = AgentKind::kNotched;
  notched.knowsTarget = true;
  notched.notchLines = 0.5;
  notched.notchHz = 4.0;
  notched.maxHz = 25.0;
  notched.reactionMs = 300.0;
  notched.reactionSdMs = 120.0;
  notched.correctionNoise = 30.0;
  int notchedLinear = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    notchedLinear +=
        winner_for(notched, "wheel-notched", Condition::kKnown, config, seed) == Model::kLinear;
  }
  c.expect(notchedLinear >= 18, fmt::format("speed-capped notched: linear wins {}/20", notchedLinear));
  return c.outcome(fmt::format(
      "target unknown: linear wins >= {}/20 per technique; flick with target known: log wins >= "
      "{}/20 per technique; speed-capped notched with target known: linear wins {}/20",
      worstUnknown, worstKnown, notchedLinear));
}

// Homogeneous subsets published for both conditions.
const std::vector<std::set<std::string>>& published_partition() {
  static const std::vector<std::set<std::string>> groups = {
      {"flick-phone", "touchpad-two-finger", "flick-tablet", "wheel-notched", "wheel-smooth"},
      {"roller-mouse", "trackball-ring", "scrollbar-thumb", "in-keyboard-joystick"},
      {"keyboard-arrows", "scrollbar-arrow-buttons"}};
  return groups;
}

// Per-trial times drawn around the published per-technique means; Tukey HSD
// must recover the published three homogeneous subsets.
Outcome tukey_partition() {
  const std::vector<Table1Row> table1 = parse_table1_csv(testing::fixture("table1_means.csv"));
  const StudyConfig config;
  const int perTechnique =
      config.participants * config.perParticipantTechniques / static_cast<int>(config.techniques.size()) *
      static_cast<int>(config.distances.size() * config.frameFactors.size() * config.repetitions);
  const std::set<std::set<std::string>> expected(published_partition().begin(),
                                                 published_partition().end());
  std::map<Condition, int> recovered;
  std::map<Condition, std::string> lastGroups;
  int bothRecovered = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    bool both = true;
    for (Condition cond : {Condition::kUnknown, Condition::kKnown}) {
      Rng rng(mix_seed(seed, cond == Condition::kUnknown ? 11 : 12));
      std::vector<std::string> ids;
      std::vector<std::vector<double>> groups;
      for (const Table1Row& row : table1) {
        if (row.condition != cond) continue;
        ids.push_back(row.technique);
        std::vector<double> times;
        for (int i = 0; i < perTechnique; ++i) times.push_back(rng.normal(row.meanTimeS, 1.0));
        groups.push_back(std::move(times));
      }
      const TukeyGrouping t = tukey_hsd(groups, 0.01);
      std::set<std::set<std::string>> found;
      std::string text;
      for (const auto& g : t.groups) {
        std::set<std::string> members;
        for (std::size_t i : g) members.insert(ids[i]);
        found.insert(members);
        text += fmt::format("{}{} techniques", text.empty() ? "" : " / ", members.size());
      }
      lastGroups[cond] = fmt::format("{} subsets ({})", t.groups.size(), text);
      const bool ok = found == expected;
      recovered[cond] += ok;
      both = both && ok;
    }
    bothRecovered += both;
  }
  Outcome o;
  o.pass = bothRecovered >= 8;
  o.detail = fmt::format(
      "{} per technique, sigma 1.0 s: published partition recovered in {}/10 runs "
      "(unknown {}/10, known {}/10; last run unknown {}, known {})",
      perTechnique, bothRecovered, recovered[Condition::kUnknown], recovered[Condition::kKnown],
      lastGroups[Condition::kUnknown], lastGroups[Condition::kKnown]);
  return o;
}

Outcome statistics_identities() {
  Rng rng(4242);
  Checks c;
  for (int trial = 0; trial < 20; ++trial) {
    // Sum-of-squares decomposition.
    std::vector<std::vector<double>> groups(2 + rng.below(9));
    for (auto& g : groups) {
      g.resize(5 + rng.below(40));
      const double shift = rng.uniform(-3, 3);
      for (double& v : g) v = rng.normal(shift + 5, 1.5);
    }
    const AnovaResult a = anova_oneway(groups);
    c.expect(std::abs(a.ssTotal - (a.ssBetween + a.ssWithin)) <= 1e-9 * std::max(1.0, a.ssTotal),
             fmt::format("SS decomposition trial {}", trial));

    // Two groups: F equals the squared pooled t.
    const std::vector<std::vector<double>> two = {groups[0], groups[1]};
    const double t = testing::pooled_t(two[0], two[1]);
    const double f = anova_oneway(two).fStat;
    c.expect(std::abs(f - t * t) <= 1e-9 * std::max(1.0, f), fmt::format("F = t^2 trial {}", trial));

    // Least-squares residuals are orthogonal to the constant and the predictor.
    std::vector<DistanceTime> pts;
    std::vector<double> x;
    for (int i = 0; i < 30; ++i) {
      const double d = 1 + rng.below(99);
      pts.push_back({d, rng.normal(2 + 0.05 * d, 0.5)});
      x.push_back(d);
    }
    for (const RegressionFit& fit : {fit_linear(pts), fit_log2(pts)}) {
      double sumR = 0, sumRX = 0, scale = 0;
      for (const DistanceTime& p : pts) {
        const double xi = fit.model == Model::kLinear ? p.distance : std::log2(p.distance);
        const double r = p.time - fit.predict(p.distance);
        sumR += r;
        sumRX += r * xi;
        scale += std::abs(p.time * xi);
      }
      c.expect(std::abs(sumR) <= 1e-9 && std::abs(sumRX) <= 1e-9 * std::max(1.0, scale),
               fmt::format("residual orthogonality ({}) trial {}", to_string(fit.model), trial));
    }
    c.expect(std::abs(pearson(x, x) - 1.0) <= 1e-9, fmt::format("pearson(x, x) trial {}", trial));

    // Identical groups.
    std::vector<double> same(10 + rng.below(20));
    for (double& v : same) v = rng.normal(4, 1);
    const std::vector<std::vector<double>> copies(3 + rng.below(5), same);
    c.expect(anova_oneway(copies).fStat == 0.0, fmt::format("F = 0 on identical groups trial {}", trial));
  }
  return c.outcome("20 random datasets: SS decomposition, residual orthogonality, pearson(x,x)=1, "
                   "F=0 on identical groups, F=t^2");
}

StudyConfig small_config() {
  StudyConfig c;
  c.participants = 3;
  c.perParticipantTechniques = 1;
  c.techniques = {"flick-phone", "wheel-notched", "keyboard-arrows"};
  return c;
}

Outcome store_round_trip() {
  TempDir tmp("store");
  const StudyConfig config = small_config();
  Checks c;

  SessionStore store(tmp.path() / "a");
  store.add_simulated(simulate_study(config, default_agents(config, 40.0), 9), config);
  const int exported = store.export_to(tmp.path() / "export1");
  SessionStore other(tmp.path() / "b");
  const int imported = other.import_from(tmp.path() / "export1");
  other.export_to(tmp.path() / "export2");
  c.expect(imported == exported, fmt::format("imported {} of {}", imported, exported));
  c.expect(snapshot(tmp.path() / "export1") == snapshot(tmp.path() / "export2"),
           "re-export differs");

  const RevalidationReport fresh = other.revalidate();
  c.expect(fresh.clean(), "fresh data: " + fresh.to_text());

  // Alter one stored client metric in place.
  const SessionRecord victim = other.sessions().front();
  const fs::path file = tmp.path() / "b" / (victim.sessionId + ".trials.jsonl");
  std::string text = testing::read_file(file.string());
  const std::string key = "\"clientMetrics\":{\"movementTimeMs\":";
  const auto at = text.find(key);
  c.expect(at != std::string::npos, "clientMetrics field not found");
  if (at != std::string::npos) text.insert(at + key.size(), "1");
  std::ofstream(file, std::ios::binary | std::ios::trunc) << text;
  const RevalidationReport tampered = other.revalidate();
  c.expect(tampered.clientDiffs.size() == 1 && tampered.engineDiffs.empty(),
           fmt::format("tampered: {} client, {} engine diffs", tampered.clientDiffs.size(),
                       tampered.engineDiffs.size()));
  return c.outcome(fmt::format("{} trials byte-identical after round trip; fresh data clean; "
                               "tampered clientMetrics flagged ({} diff)",
                               exported, tampered.clientDiffs.size()));
}

Outcome server_contract() {
  TempDir tmp("server");
  const StudyConfig config;
  Checks c;
  std::string id;
  int firstRun = 0, secondRun = 0, resumedSeq = 0;
  {
    SessionStore store(tmp.path() / "data");
    testing::RunningServer server(store, config);
    testing::ScriptedClient client(server.port());

    // Full technique block.
    const std::string block = client.create("wheel-smooth", 3);
    const auto full = client.run(block, config);
    c.expect(full.accepted == 130 && full.mismatches == 0,
             fmt::format("block: {} accepted, {} mismatches, last status {}", full.accepted,
                         full.mismatches, full.lastStatus));
    c.expect(client.next(block)["done"].get<bool>(), "block not done after 130 trials");

    // Out-of-order and malformed submissions.
    id = client.create("trackball-ring", 4);
    const ojson issued = client.next(id);
    const int seq = issued["seq"];
    const ojson good = testing::ScriptedClient::play(issued, config, 1);
    auto skipped = client.submit(id, seq + 1, good);
    c.expect(skipped && skipped->status == 409,
             fmt::format("out-of-order status {}", skipped ? skipped->status : -1));
    ojson bad = good;
    bad["trace"]["events"] = ojson::array({{0, 0}, {0, 10}});
    auto malformed = client.submit(id, seq, bad);
    c.expect(malformed && malformed->status == 422,
             fmt::format("malformed status {}", malformed ? malformed->status : -1));

    firstRun = client.run(id, config, 47).accepted;
  }
  {
    // A new store and server over the same directory resume the block.
    SessionStore store(tmp.path() / "data");
    testing::RunningServer server(store, config);
    testing::ScriptedClient client(server.port());
    resumedSeq = client.next(id)["seq"];
    secondRun = client.run(id, config).accepted;
  }
  c.expect(firstRun == 47, fmt::format("{} trials before restart", firstRun));
  c.expect(resumedSeq == 48, fmt::format("resumed at seq {}", resumedSeq));
  c.expect(firstRun + secondRun == 130, fmt::format("{} + {} trials", firstRun, secondRun));
  return c.outcome(fmt::format("130-trial block completed; out-of-order 409; malformed 422; "
                               "restart after {} trials resumed at seq {}",
                               firstRun, resumedSeq));
}

struct Criterion {
  const char* name;
  const char* title;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"oracle-equivalence", "metrics equal the replay oracle", oracle_equivalence},
      {"band-property", "target band equals geometric containment", band_property},
      {"regression-round-trip", "published coefficients refit", regression_round_trip},
      {"aggregate-model", "pooled models refit and recover slope", aggregate_model},
      {"study-shape", "full-scale study shape", study_shape},
      {"model-selection", "linear vs log model selection", model_selection},
      {"tukey-partition", "three-group Tukey partition", tukey_partition},
      {"statistics-identities", "statistics identities", statistics_identities},
      {"store-round-trip", "session store round trip", store_round_trip},
      {"server-contract", "server contract", server_contract},
  };
  return all;
}

bool run_one(const Criterion& c) {
  Outcome o;
  try {
    o = c.run();
  } catch (const std::exception& e) {
    o = {false, fmt::format("exception: {}", e.what())};
  }
  std::cout << fmt::format("{}: {} ({}): {}", o.pass ? "PASS" : "FAIL", c.name, c.title, o.detail)
            << std::endl;
  return o.pass;
}

}  // namespace
}  // namespace scrolltest

int main(int argc, char** argv) {
  using scrolltest::criteria;
  std::vector<std::string> names(argv + 1, argv + argc);
  if (names.size() == 1 && names[0] == "--list") {
    for (const auto& c : criteria()) std::cout << c.name << "\n";
    return 0;
  }
  bool ok = true;
  if (names.empty()) {
    for (const auto& c : criteria()) ok = scrolltest::run_one(c) && ok;
    return ok ? 0 : 1;
  }
  for (const std::string& name : names) {
    const auto it = std::find_if(criteria().begin(), criteria().end(),
                                 [&](const auto& c) { return name == c.name; });
    if (it == criteria().end()) {
      std::cerr << "unknown criterion: " << name << "\n";
      return 2;
    }
    ok = scrolltest::run_one(*it) && ok;
  }
  return ok ? 0 : 1;
}
