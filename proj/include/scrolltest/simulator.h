#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "scrolltest/experiment_design.h"
#include "scrolltest/stats_models.h"
#include "scrolltest/study_config.h"
#include "scrolltest/trace_metrics.h"

namespace scrolltest {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AgentKind { kConstantRate, kFlickFriction, kNotched };

std::string_view to_string(AgentKind k);
AgentKind parse_agent_kind(std::string_view s);

// A kinematic scroller. Every movement aims at the centre of the acceptance
// band; misses are corrected with fresh movements until the agent rests inside
// the band.
struct AgentParams {
  AgentKind kind = AgentKind::kConstantRate;
  double reactionMs = 300.0;         // delay before the first movement
  double reactionSdMs = 0.0;         // Gaussian jitter on reactionMs
  double correctionDelayMs = 200.0;  // pause before each corrective movement
  // constant-rate
  double rate = 20.0;  // lines/s
  // flick-friction: v0 = flickGain * distance + stopVelocity, decaying by
  // frictionDecay every ms until it drops below stopVelocity.
  double flickGain = 0.001;      // 1/ms
  double frictionDecay = 0.999;  // per ms
  double stopVelocity = 0.3;     // px/ms
  double scanLines = 10.0;       // flick length while searching (target unknown)
  // notched: discrete increments of notchLines lines at notchHz; with the
  // target known the rate follows the remaining distance up to maxHz.
  double notchLines = 0.5;
  double notchHz = 4.0;
  double maxHz = 25.0;
  double correctionNoise = 0.0;  // px standard deviation of each landing
  double landingBiasPx = 0.0;    // added to the first landing only
  bool knowsTarget = false;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  friend bool operator==(const AgentParams&, const AgentParams&) = default;
};

void to_json(nlohmann::ordered_json& j, const AgentParams& a);
void from_json(const nlohmann::ordered_json& j, AgentParams& a);

struct SimTrial {
  TrialSpec spec;
  TrialGeometry geometry;
  TrialTrace trace;
  TrialMetrics groundTruth;  // from the agent's own bookkeeping
  std::uint64_t seed = 0;
};

struct SimOptions {
  std::int64_t cadenceMs = 16;
  std::int64_t quiescenceMs = kDefaultQuiescenceMs;
  double epsilonPx = kDefaultEpsilonPx;
  std::int64_t clickDelayMs = 250;  // click-to-confirm trials: click after the final rest
  int maxCorrections = 50;
};

// Deterministic in (agent, spec, geometry, seed, options). Throws
// SimulationError("agent diverged ...") when the band is not reached within
// maxCorrections corrective movements, and GeometryError for unreachable
// targets or targets already inside the frame at offset 0.
SimTrial simulate_trial(const AgentParams& agent, const TrialSpec& spec, const TrialGeometry& g,
                        std::uint64_t seed, const SimOptions& options = {});

struct TechniqueAgents {
  AgentParams unknown;
  AgentParams known;

  const AgentParams& for_condition(Condition c) const {
    return c == Condition::kUnknown ? unknown : known;
  }
};

using AgentTable = std::map<std::string, TechniqueAgents>;

struct SimSession {
  std::string sessionId;
  std::string participantId;
  std::string technique;
  std::uint64_t seed = 0;
  std::vector<SimTrial> trials;
};

// One session per (participant, assigned technique) block, following the
// experiment-design plan. Throws std::invalid_argument when a technique in
// the config has no agent.
std::vector<SimSession> simulate_study(const StudyConfig& config, const AgentTable& agents,
                                       std::uint64_t seed);

// Agent parameters whose noise-free movement time follows T = a + b*D
// (linear) or T = a + b*log2(D) (log2), D in rows, T in seconds, for a
// viewport of `visibleRows` rows of `lineHeightPx`. Linear yields a
// constant-rate agent, log2 a flick-friction agent that knows the target.
// Throws std::invalid_argument for infeasible coefficients.
AgentParams calibrate_agent_to_coefficients(AgentKind kind, double a, double b, Model model,
                                            double lineHeightPx = 60.0, int visibleRows = 10);

// Reference coefficients per default technique: linear fit for the unknown
// condition, log2 fit for the known condition.
struct ReferenceCoefficients {
  std::string technique;
  double aLinear = 0.0;
  double bLinear = 0.0;
  double aLog = 0.0;
  double bLog = 0.0;
};
const std::vector<ReferenceCoefficients>& reference_coefficients();

// Calibrated agents for every default technique, for the geometry of `config`.
AgentTable default_agents(const StudyConfig& config, double correctionNoise = 0.0);

// YAML agent table:
//   defaults: {<field>: value, ...}          # optional, applied to every agent
//   techniques:
//     <technique id>:
//       unknown: {calibrate: linear, a: 2.0, b: 0.05, <overrides>}
//       known: {kind: notched-increment, notchHz: 4, ...}
// Calibrated entries use the geometry of `config`.
AgentTable parse_agent_table(const std::string& yamlText, const StudyConfig& config);
AgentTable load_agent_table(const std::filesystem::path& path, const StudyConfig& config);

}  // namespace scrolltest
