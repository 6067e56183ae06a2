#include "scrolltest/simulator.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "scrolltest/rng.h"

namespace scrolltest {

namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw std::invalid_argument(fmt::format("agent.{} {}", field, what));
}

// Browsers report scroll offsets in layout units of 1/64 px; emitting on that
// grid also keeps every band comparison exact.
double layout_units(double px) { return std::round(px * 64.0) / 64.0; }

// Event emission and the agent's own ground-truth bookkeeping. Every movement
// is monotone, so reversals, overshoot and the end of the trial follow from
// the movement endpoints without looking at the sampled trace.
class TrialRun {
 public:
  TrialRun(const TargetBand& band, const SimOptions& options) : band_(band), options_(options) {}

  double position() const { return pos_; }
  std::int64_t now() const { return now_; }
  bool resting_in_band() const { return band_.contains(pos_); }

  void pause(double ms) { now_ += std::max<std::int64_t>(0, std::llround(ms)); }

  // Continuous movement to `to`; `shape` maps the elapsed fraction of the
  // duration to the covered fraction of the distance.
  template <typename Shape>
  void glide(double to, double durationMs, Shape shape) {
    const double from = pos_;
    const std::int64_t start = now_;
    const std::int64_t arrival = start + std::max<std::int64_t>(1, std::llround(durationMs));
    double last = from;
    for (std::int64_t t = start + options_.cadenceMs; t < arrival; t += options_.cadenceMs) {
      const double tau = std::min(1.0, static_cast<double>(t - start) / durationMs);
      double x = layout_units(from + (to - from) * shape(tau));
      x = to > from ? std::clamp(x, last, to) : std::clamp(x, to, last);
      emit(t, x);
      last = x;
    }
    emit(arrival, to);
    finish_segment(from, to, arrival);
  }

  // Discrete step (wheel notch, key press) that takes effect at `at`.
  void jump(double to, std::int64_t at) {
    const double from = pos_;
    emit(at, to);
    finish_segment(from, to, at);
  }

  TrialMetrics ground_truth(std::optional<std::int64_t> clickT) const {
    TrialMetrics m;
    m.completed = true;
    m.movementTimeMs = clickT ? *clickT : lastEventT_;
    m.switchbacks = reversals_;
    // Every reversal follows a landing above the band, so all of them come
    // after the first overshoot.
    m.switchbacksAfterOvershoot = reversals_;
    m.maxOvershootPx = maxOvershoot_;
    m.firstOvershootMs = firstOvershootT_;
    m.endEventIndex = events_.size() - 1;
    return m;
  }

  std::vector<ScrollEvent> take_events() { return std::move(events_); }

 private:
  void emit(std::int64_t t, double s) {
    events_.push_back({t, s});
    lastEventT_ = t;
    if (s > band_.sMax && !firstOvershootT_) firstOvershootT_ = t;
  }

  void finish_segment(double from, double to, std::int64_t at) {
    const int dir = to > from ? 1 : (to < from ? -1 : 0);
    if (dir != 0 && dir != direction_) {
      ++reversals_;
      direction_ = dir;
    }
    maxOvershoot_ = std::max(maxOvershoot_, to - band_.sMax);
    pos_ = to;
    now_ = at;
  }

  TargetBand band_;
  SimOptions options_;
  double pos_ = 0.0;
  std::int64_t now_ = 0;
  int direction_ = 1;  // scrolling starts upward
  int reversals_ = 0;
  double maxOvershoot_ = 0.0;
  std::optional<std::int64_t> firstOvershootT_;
  std::int64_t lastEventT_ = 0;
  std::vector<ScrollEvent> events_;
};

// Exponentially decaying flick covering exactly `travel` px.
struct Flick {
  double lambda;  // 1/ms
  double stopVelocity;
  double travel;

  double v0() const { return lambda * travel + stopVelocity; }
  double duration() const { return std::log(v0() / stopVelocity) / lambda; }
  double fraction(double tau) const {
    const double t = tau * duration();
    return v0() * (1.0 - std::exp(-lambda * t)) / (lambda * travel);
  }
};

double friction_rate(const AgentParams& a) { return -std::log(a.frictionDecay); }


}  // namespace

std::string_view to_string(AgentKind k) {
  switch (k) {
    case AgentKind::kConstantRate: return "constant-rate";
    case AgentKind::kFlickFriction: return "flick-friction";
    case AgentKind::kNotched: return "notched-increment";
  }
  return "?";
}

AgentKind parse_agent_kind(std::string_view s) {
  if (s == "constant-rate") return AgentKind::kConstantRate;
  if (s == "flick-friction") return AgentKind::kFlickFriction;
  if (s == "notched-increment" || s == "notched") return AgentKind::kNotched;
  throw std::invalid_argument(fmt::format("unknown agent kind '{}'", s));
}

void AgentParams::validate() const {
  require(std::isfinite(reactionMs) && reactionMs >= 0.0, "reactionMs", "must be >= 0");
  require(std::isfinite(reactionSdMs) && reactionSdMs >= 0.0, "reactionSdMs", "must be >= 0");
  require(std::isfinite(correctionDelayMs) && correctionDelayMs >= 0.0, "correctionDelayMs",
          "must be >= 0");
  require(std::isfinite(correctionNoise) && correctionNoise >= 0.0, "correctionNoise",
          "must be >= 0");
  require(std::isfinite(landingBiasPx), "landingBiasPx", "must be finite");
  switch (kind) {
    case AgentKind::kConstantRate:
      require(std::isfinite(rate) && rate > 0.0, "rate", "must be positive");
      break;
    case AgentKind::kFlickFriction:
      require(std::isfinite(flickGain) && flickGain > 0.0, "flickGain", "must be positive");
      require(frictionDecay > 0.0 && frictionDecay < 1.0, "frictionDecay", "must be in (0, 1)");
      require(std::isfinite(stopVelocity) && stopVelocity > 0.0, "stopVelocity",
              "must be positive");
      require(std::isfinite(scanLines) && scanLines > 0.0, "scanLines", "must be positive");
      break;
    case AgentKind::kNotched:
      require(std::isfinite(notchLines) && notchLines > 0.0, "notchLines", "must be positive");
      require(std::isfinite(notchHz) && notchHz > 0.0, "notchHz", "must be positive");
      require(std::isfinite(maxHz) && maxHz >= notchHz, "maxHz", "must be >= notchHz");
      break;
  }
}

void to_json(nlohmann::ordered_json& j, const AgentParams& a) {
  j = nlohmann::ordered_json{{"kind", to_string(a.kind)},
                             {"reactionMs", a.reactionMs},
                             {"reactionSdMs", a.reactionSdMs},
                             {"correctionDelayMs", a.correctionDelayMs},
                             {"correctionNoise", a.correctionNoise},
                             {"knowsTarget", a.knowsTarget}};
  switch (a.kind) {
    case AgentKind::kConstantRate:
      j["rate"] = a.rate;
      break;
    case AgentKind::kFlickFriction:
      j["flickGain"] = a.flickGain;
      j["frictionDecay"] = a.frictionDecay;
      j["stopVelocity"] = a.stopVelocity;
      j["scanLines"] = a.scanLines;
      break;
    case AgentKind::kNotched:
      j["notchLines"] = a.notchLines;
      j["notchHz"] = a.notchHz;
      j["maxHz"] = a.maxHz;
      break;
  }
  if (a.landingBiasPx != 0.0) j["landingBiasPx"] = a.landingBiasPx;
}

void from_json(const nlohmann::ordered_json& j, AgentParams& a) {
  a = AgentParams{};
  a.kind = parse_agent_kind(j.at("kind").get<std::string>());
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("reactionMs", a.reactionMs);
  opt("reactionSdMs", a.reactionSdMs);
  opt("correctionDelayMs", a.correctionDelayMs);
  opt("correctionNoise", a.correctionNoise);
  opt("knowsTarget", a.knowsTarget);
  opt("rate", a.rate);
  opt("flickGain", a.flickGain);
  opt("frictionDecay", a.frictionDecay);
  opt("stopVelocity", a.stopVelocity);
  opt("scanLines", a.scanLines);
  opt("notchLines", a.notchLines);
  opt("notchHz", a.notchHz);
  opt("maxHz", a.maxHz);
  opt("landingBiasPx", a.landingBiasPx);
  a.validate();
}

SimTrial simulate_trial(const AgentParams& agent, const TrialSpec& spec, const TrialGeometry& g,
                        std::uint64_t seed, const SimOptions& options) {
  agent.validate();
  if (options.cadenceMs < 1 || options.cadenceMs > options.quiescenceMs) {
    throw std::invalid_argument("event cadence must be between 1 ms and the quiescence timeout");
  }
  if (options.maxCorrections < 0) throw std::invalid_argument("maxCorrections must be >= 0");
  const TargetBand band = compute_target_band(g);
  if (band.contains(0.0)) {
    throw GeometryError("target already inside the frame at offset 0");
  }
  const double maxScroll = g.max_scroll();
  const double eps = options.epsilonPx;
  // Reachable point at the band centre (the band may extend past the end of
  // the document).
  const double aim = std::clamp(layout_units((band.sMin + band.sMax) / 2.0), band.sMin,
                                std::min(band.sMax, maxScroll));

  Rng rng(seed);
  TrialRun run(band, options);
  run.pause(std::max(0.0, agent.reactionSdMs > 0.0 ? rng.normal(agent.reactionMs, agent.reactionSdMs)
                                                    : agent.reactionMs));

  // Landing point of the k-th aimed movement before kinematics: the band
  // centre plus Gaussian error whose spread halves with each correction.
  // The target is visible once the agent corrects, so a landing error never
  // sends it away from the target: such draws become a precise adjustment.
  auto intended_landing = [&](int k) {
    const double sd = agent.correctionNoise * std::ldexp(1.0, -k);
    double e = sd > 0.0 ? rng.normal(0.0, sd) : 0.0;
    if (k == 0) e += agent.landingBiasPx;
    const double p = run.position();
    return (aim + e > p) == (aim > p) ? aim + e : aim;
  };
  // Misses within the hysteresis threshold are indistinguishable from a hit,
  // so they are snapped to the aim point; the same holds for movements too
  // small to register as a direction change.
  auto settle = [&](double landing) {
    landing = std::clamp(layout_units(landing), 0.0, maxScroll);
    if (std::abs(landing - aim) <= eps || std::abs(landing - run.position()) <= eps) return aim;
    return landing;
  };

  const double lh = g.lineHeight;
  const double lambda = friction_rate(agent);
  const bool click = spec.requireClick;
  auto flick_to = [&](double to) {
    const Flick f{lambda, agent.stopVelocity, std::abs(to - run.position())};
    run.glide(to, f.duration(), [&](double tau) { return f.fraction(tau); });
  };

  if (agent.kind == AgentKind::kFlickFriction && !agent.knowsTarget) {
    // Searching: fixed-length flicks until the target is within one flick.
    const double scan = agent.scanLines * lh;
    while (aim - run.position() > scan) {
      flick_to(std::min(layout_units(run.position() + scan), maxScroll));
      if (run.resting_in_band()) break;
      run.pause(agent.correctionDelayMs);
    }
  }

  const double notchPx = agent.notchLines * lh;
  for (int k = 0; !run.resting_in_band(); ++k) {
    if (k > options.maxCorrections) {
      throw SimulationError(fmt::format("agent diverged: no rest inside [{}, {}] after {} corrections",
                                        band.sMin, band.sMax, options.maxCorrections));
    }
    if (k > 0) run.pause(agent.correctionDelayMs);
    const double p = run.position();

    if (agent.kind == AgentKind::kNotched) {
      long n = std::lround((intended_landing(k) - p) / notchPx);
      if (n == 0) n = aim > p ? 1 : -1;
      const int dir = n > 0 ? 1 : -1;
      const long steps = std::labs(n);
      auto interval = [&](long remaining) {
        const double hz = agent.knowsTarget ? std::min(agent.maxHz, agent.notchHz * remaining)
                                            : agent.notchHz;
        return std::max<std::int64_t>(1, std::llround(1000.0 / hz));
      };
      bool rested = false;
      for (long i = 1; i <= steps; ++i) {
        const double x = std::clamp(layout_units(p + dir * i * notchPx), 0.0, maxScroll);
        if (x == run.position()) break;
        run.jump(x, run.now() + interval(steps - i + 1));
        // The trial also ends when the wheel pauses longer than the timeout
        // while the target happens to be in the frame.
        if (!click && run.resting_in_band() &&
            (i == steps || interval(steps - i) > options.quiescenceMs)) {
          rested = true;
          break;
        }
      }
      if (rested) break;
      continue;
    }

    double landing = intended_landing(k);
    if (agent.kind == AgentKind::kFlickFriction) {
      // The launch velocity is proportional to the intended distance; the
      // friction then decides how far the content actually travels.
      const double travel = agent.flickGain * std::abs(landing - p) / lambda;
      landing = p + (landing > p ? travel : -travel);
    }
    landing = settle(landing);
    if (agent.kind == AgentKind::kFlickFriction) {
      flick_to(landing);
    } else {
      run.glide(landing, std::abs(landing - p) / (agent.rate * lh / 1000.0),
                [](double tau) { return tau; });
    }
  }

  SimTrial out;
  out.spec = spec;
  out.geometry = g;
  out.seed = seed;
  out.trace.quiescenceMs = options.quiescenceMs;
  if (click) out.trace.clickT = run.now() + options.clickDelayMs;
  out.groundTruth = run.ground_truth(out.trace.clickT);
  out.trace.events = run.take_events();
  return out;
}

std::vector<SimSession> simulate_study(const StudyConfig& config, const AgentTable& agents,
                                       std::uint64_t seed) {
  config.validate();
  for (const std::string& t : config.techniques) {
    if (!agents.contains(t)) {
      throw std::invalid_argument(fmt::format("no agent defined for technique '{}'", t));
    }
  }
  SimOptions options;
  options.cadenceMs = config.eventCadenceMs;
  options.quiescenceMs = config.quiescenceMs;
  options.epsilonPx = config.epsilonPx;

  const auto assignment =
      assign_devices(config.participants, config.techniques, config.perParticipantTechniques);
  std::vector<SimSession> sessions;
  for (std::size_t p = 0; p < assignment.size(); ++p) {
    const std::string participant = fmt::format("P{:02}", p + 1);
    for (std::size_t j = 0; j < assignment[p].size(); ++j) {
      SimSession s;
      s.participantId = participant;
      s.technique = assignment[p][j];
      s.seed = mix_seed(seed, p * assignment[p].size() + j);
      s.sessionId = fmt::format("sim-{}-{}-{}", seed, participant, s.technique);
      const TechniqueAgents& agent = agents.at(s.technique);
      for (const TrialSpec& spec : generate_block(s.technique, config, s.seed)) {
        s.trials.push_back(simulate_trial(agent.for_condition(spec.condition), spec,
                                          geometry_for(spec, config),
                                          mix_seed(s.seed, static_cast<std::uint64_t>(spec.seq)),
                                          options));
      }
      sessions.push_back(std::move(s));
    }
  }
  return sessions;
}

AgentParams calibrate_agent_to_coefficients(AgentKind kind, double a, double b, Model model,
                                            double lineHeightPx, int visibleRows) {
  if (!std::isfinite(a) || !std::isfinite(b)) {
    throw std::invalid_argument("infeasible: coefficients must be finite");
  }
  if (!(lineHeightPx > 0.0) || visibleRows < 1) {
    throw std::invalid_argument("calibration needs a positive line height and row count");
  }
  if (b <= 0.0) {
    throw std::invalid_argument(b == 0.0 ? "infeasible: infinite rate"
                                         : "infeasible: negative rate");
  }
  // Rows between the start position and the band centre: D - c.
  const double c = visibleRows / 2.0 + 0.5;
  AgentParams p;
  p.kind = kind;
  if (model == Model::kLinear) {
    if (kind != AgentKind::kConstantRate) {
      throw std::invalid_argument("linear calibration produces a constant-rate agent");
    }
    // T = reaction + (D - c) / rate matches a + b*D for every D.
    p.rate = 1.0 / b;
    p.reactionMs = 1000.0 * (a + c * b);
    p.knowsTarget = false;
  } else {
    if (kind != AgentKind::kFlickFriction) {
      throw std::invalid_argument("log2 calibration produces a flick-friction agent");
    }
    // An exactly aimed flick over d px takes ln(1 + lambda*d/v_stop)/lambda.
    // With v_stop = lambda*c*lineHeight that is ln(D/c)/lambda, which is
    // b*log2(D) + const when lambda = ln2/(1000*b).
    const double lambda = std::numbers::ln2 / (1000.0 * b);
    p.flickGain = lambda;
    p.frictionDecay = std::exp(-lambda);
    p.stopVelocity = lambda * c * lineHeightPx;
    p.reactionMs = 1000.0 * a + std::log(c) / lambda;
    p.knowsTarget = true;
  }
  if (p.reactionMs < 0.0) {
    throw std::invalid_argument(
        fmt::format("infeasible: negative reaction time {:.1f} ms", p.reactionMs));
  }
  return p;
}

const std::vector<ReferenceCoefficients>& reference_coefficients() {
  static const std::vector<ReferenceCoefficients> table = {
      {"flick-phone", 1.109, 0.035, -1.42, 0.949},
      {"touchpad-two-finger", 1.376, 0.040, 0.057, 0.661},
      {"flick-tablet", 1.256, 0.044, -1.318, 0.949},
      {"wheel-notched", 1.631, 0.037, 0.351, 0.783},
      {"wheel-smooth", 1.333, 0.045, -0.959, 1.008},
      {"roller-mouse", 2.252, 0.049, -1.148, 1.178},
      {"trackball-ring", 2.089, 0.062, 0.002, 1.07},
      {"scrollbar-thumb", 2.466, 0.054, 2.191, 0.559},
      {"in-keyboard-joystick", 2.631, 0.059, -1.087, 1.278},
      {"keyboard-arrows", 2.306, 0.069, -2.416, 1.847},
      {"scrollbar-arrow-buttons", 4.033, 0.054, -4.206, 2.317},
  };
  return table;
}

AgentTable default_agents(const StudyConfig& config, double correctionNoise) {
  AgentTable agents;
  for (const ReferenceCoefficients& r : reference_coefficients()) {
    TechniqueAgents t{
        calibrate_agent_to_coefficients(AgentKind::kConstantRate, r.aLinear, r.bLinear,
                                        Model::kLinear, config.lineHeightPx, config.visibleRows),
        calibrate_agent_to_coefficients(AgentKind::kFlickFriction, r.aLog, r.bLog, Model::kLog2,
                                        config.lineHeightPx, config.visibleRows)};
    t.unknown.correctionNoise = correctionNoise;
    t.known.correctionNoise = correctionNoise;
    agents.emplace(r.technique, t);
  }
  return agents;
}

namespace {

void apply_overrides(const YAML::Node& node, AgentParams& a, const std::string& where) {
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    const YAML::Node& v = kv.second;
    try {
      if (key == "calibrate" || key == "a" || key == "b") continue;
      if (key == "kind") a.kind = parse_agent_kind(v.as<std::string>());
      else if (key == "reactionMs") a.reactionMs = v.as<double>();
      else if (key == "reactionSdMs") a.reactionSdMs = v.as<double>();
      else if (key == "correctionDelayMs") a.correctionDelayMs = v.as<double>();
      else if (key == "rate") a.rate = v.as<double>();
      else if (key == "flickGain") a.flickGain = v.as<double>();
      else if (key == "frictionDecay") a.frictionDecay = v.as<double>();
      else if (key == "stopVelocity") a.stopVelocity = v.as<double>();
      else if (key == "scanLines") a.scanLines = v.as<double>();
      else if (key == "notchLines") a.notchLines = v.as<double>();
      else if (key == "notchHz") a.notchHz = v.as<double>();
      else if (key == "maxHz") a.maxHz = v.as<double>();
      else if (key == "correctionNoise") a.correctionNoise = v.as<double>();
      else if (key == "landingBiasPx") a.landingBiasPx = v.as<double>();
      else if (key == "knowsTarget") a.knowsTarget = v.as<bool>();
      else throw std::invalid_argument("unknown key");
    } catch (const YAML::Exception& e) {
      throw std::invalid_argument(fmt::format("{}.{}: {}", where, key, e.what()));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(fmt::format("{}.{}: {}", where, key, e.what()));
    }
  }
}

AgentParams parse_agent(const YAML::Node& node, const YAML::Node& defaults,
                        const StudyConfig& config, const std::string& where) {
  if (!node || !node.IsMap()) throw std::invalid_argument(where + ": expected a mapping");
  AgentParams a;
  if (node["calibrate"]) {
    const auto model = node["calibrate"].as<std::string>();
    if (!node["a"] || !node["b"]) throw std::invalid_argument(where + ": calibrate needs a and b");
    const double ca = node["a"].as<double>();
    const double cb = node["b"].as<double>();
    if (model == "linear") {
      a = calibrate_agent_to_coefficients(AgentKind::kConstantRate, ca, cb, Model::kLinear,
                                          config.lineHeightPx, config.visibleRows);
    } else if (model == "log2") {
      a = calibrate_agent_to_coefficients(AgentKind::kFlickFriction, ca, cb, Model::kLog2,
                                          config.lineHeightPx, config.visibleRows);
    } else {
      throw std::invalid_argument(where + ".calibrate: expected linear or log2");
    }
  } else if (!node["kind"]) {
    throw std::invalid_argument(where + ": needs either kind or calibrate");
  }
  if (defaults) apply_overrides(defaults, a, "defaults");
  apply_overrides(node, a, where);
  try {
    a.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(where + ": " + e.what());
  }
  return a;
}

}  // namespace

AgentTable parse_agent_table(const std::string& yamlText, const StudyConfig& config) {
  YAML::Node root;
  try {
    root = YAML::Load(yamlText);
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(fmt::format("agent table: {}", e.what()));
  }
  if (!root.IsMap() || !root["techniques"] || !root["techniques"].IsMap()) {
    throw std::invalid_argument("agent table: expected a 'techniques' mapping");
  }
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key != "techniques" && key != "defaults") {
      throw std::invalid_argument(fmt::format("agent table: unknown key '{}'", key));
    }
  }
  const YAML::Node defaults = root["defaults"];
  AgentTable table;
  for (const auto& kv : root["techniques"]) {
    const auto id = kv.first.as<std::string>();
    const std::string where = "techniques." + id;
    for (const auto& c : kv.second) {
      const auto key = c.first.as<std::string>();
      if (key != "unknown" && key != "known") {
        throw std::invalid_argument(fmt::format("{}: unknown key '{}'", where, key));
      }
    }
    table.emplace(id, TechniqueAgents{parse_agent(kv.second["unknown"], defaults, config,
                                                  where + ".unknown"),
                                      parse_agent(kv.second["known"], defaults, config,
                                                  where + ".known")});
  }
  return table;
}

AgentTable load_agent_table(const std::filesystem::path& path, const StudyConfig& config) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot read agent table {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_agent_table(buf.str(), config);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace scrolltest
