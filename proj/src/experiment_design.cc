#include "scrolltest/experiment_design.h"

#include <algorithm>
#include <stdexcept>

#include "scrolltest/rng.h"

namespace scrolltest {

std::string_view to_string(Condition c) {
  return c == Condition::kUnknown ? "unknown" : "known";
}

std::string_view to_string(DistanceGroup g) {
  switch (g) {
    case DistanceGroup::kVisible: return "visible";
    case DistanceGroup::kShort: return "short";
    case DistanceGroup::kLong: return "long";
  }
  return "?";
}

Condition parse_condition(std::string_view s) {
  if (s == "unknown") return Condition::kUnknown;
  if (s == "known") return Condition::kKnown;
  throw std::invalid_argument("unknown condition '" + std::string(s) + "'");
}

DistanceGroup parse_distance_group(std::string_view s) {
  if (s == "visible") return DistanceGroup::kVisible;
  if (s == "short") return DistanceGroup::kShort;
  if (s == "long") return DistanceGroup::kLong;
  throw std::invalid_argument("unknown distance group '" + std::string(s) + "'");
}

TechniqueRegistry::TechniqueRegistry()
    : techniques_{
          {"flick-phone", "Flicking (iPhone)"},
          {"flick-tablet", "Flicking (iPad)"},
          {"touchpad-two-finger", "Two-finger scrolling on a laptop touchpad"},
          {"wheel-notched", "Mouse wheel with notches"},
          {"wheel-smooth", "Mouse wheel without notches"},
          {"roller-mouse", "Roller mouse"},
          {"trackball-ring", "Trackball"},
          {"scrollbar-thumb", "Scrollbar by dragging the thumb"},
          {"in-keyboard-joystick", "In-keyboard joystick"},
          {"keyboard-arrows", "Using keyboard arrow keys"},
          {"scrollbar-arrow-buttons", "Scrollbar by pressing arrow buttons"},
      } {}

void TechniqueRegistry::add(Technique t) {
  if (contains(t.id)) throw std::invalid_argument("technique '" + t.id + "' already registered");
  techniques_.push_back(std::move(t));
}

bool TechniqueRegistry::contains(std::string_view id) const {
  return std::any_of(techniques_.begin(), techniques_.end(),
                     [&](const Technique& t) { return t.id == id; });
}

const std::string& TechniqueRegistry::label(std::string_view id) const {
  for (const Technique& t : techniques_) {
    if (t.id == id) return t.label;
  }
  throw std::invalid_argument("unknown technique '" + std::string(id) + "'");
}

std::vector<std::string> TechniqueRegistry::ids() const {
  std::vector<std::string> out;
  for (const Technique& t : techniques_) out.push_back(t.id);
  return out;
}

const TechniqueRegistry& TechniqueRegistry::defaults() {
  static const TechniqueRegistry registry;
  return registry;
}

DistanceGroup group_distance(int targetRowIndex, int visibleRows) {
  if (targetRowIndex < 2) {
    throw std::invalid_argument("row " + std::to_string(targetRowIndex) +
                                " needs no upward scroll");
  }
  if (targetRowIndex <= visibleRows) return DistanceGroup::kVisible;
  if (targetRowIndex <= 50) return DistanceGroup::kShort;
  return DistanceGroup::kLong;
}

std::vector<std::vector<std::string>> assign_devices(int participantCount,
                                                     std::span<const std::string> techniques,
                                                     int perParticipant) {
  const int m = static_cast<int>(techniques.size());
  if (participantCount < 1 || perParticipant < 1 || m == 0) {
    throw std::invalid_argument("assign_devices: counts must be positive");
  }
  if (perParticipant > m) {
    throw std::invalid_argument("assign_devices: more techniques per participant than techniques");
  }
  if (participantCount * perParticipant % m != 0) {
    throw std::invalid_argument("assign_devices: participants x perParticipant (" +
                                std::to_string(participantCount * perParticipant) +
                                ") not divisible by technique count " + std::to_string(m));
  }
  std::vector<std::vector<std::string>> rows(participantCount);
  for (int i = 0; i < participantCount; ++i) {
    for (int p = 0; p < perParticipant; ++p) {
      rows[i].push_back(techniques[(i * perParticipant + p) % m]);
    }
  }
  return rows;
}

std::vector<TrialSpec> generate_block(const std::string& technique, const StudyConfig& config,
                                      std::uint64_t seed, int firstSeq) {
  Rng rng(seed);
  std::vector<TrialSpec> trials;
  int seq = firstSeq;
  for (Condition condition : {Condition::kUnknown, Condition::kKnown}) {
    std::vector<double> factors = config.frameFactors;
    rng.shuffle(std::span(factors));
    for (double h : factors) {
      std::vector<int> rows;
      for (int r = 0; r < config.repetitions; ++r) {
        rows.insert(rows.end(), config.distances.begin(), config.distances.end());
      }
      rng.shuffle(std::span(rows));
      for (int d : rows) {
        trials.push_back(TrialSpec{condition, technique, h, d,
                                   group_distance(d, config.visibleRows), config.requireClick,
                                   seq++});
      }
    }
  }
  return trials;
}

SessionPlan generate_session_plan(const std::string& participantId,
                                  std::span<const std::string> techniques, std::uint64_t seed,
                                  const StudyConfig& config) {
  SessionPlan plan;
  plan.participantId = participantId;
  plan.techniques.assign(techniques.begin(), techniques.end());
  plan.rngSeed = seed;
  for (std::size_t i = 0; i < techniques.size(); ++i) {
    auto block = generate_block(techniques[i], config, mix_seed(seed, i),
                                static_cast<int>(plan.trials.size()) + 1);
    plan.trials.insert(plan.trials.end(), block.begin(), block.end());
  }
  return plan;
}

TrialGeometry geometry_for(const TrialSpec& spec, const StudyConfig& config) {
  return make_geometry(config.lineHeightPx, spec.frameHeightFactor, spec.targetRowIndex,
                       config.row_count(), config.visibleRows);
}

}  // namespace scrolltest
