#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scrolltest/study_config.h"
#include "scrolltest/trace_metrics.h"

namespace scrolltest {

enum class Condition { kUnknown, kKnown };
enum class DistanceGroup { kVisible, kShort, kLong };

std::string_view to_string(Condition c);
std::string_view to_string(DistanceGroup g);
Condition parse_condition(std::string_view s);
DistanceGroup parse_distance_group(std::string_view s);

struct Technique {
  std::string id;
  std::string label;
};

// Known scrolling techniques. Starts with the eleven default ids; more can be
// registered.
class TechniqueRegistry {
 public:
  TechniqueRegistry();

  void add(Technique t);
  bool contains(std::string_view id) const;
  const std::string& label(std::string_view id) const;
  const std::vector<Technique>& all() const { return techniques_; }
  std::vector<std::string> ids() const;

  static const TechniqueRegistry& defaults();

 private:
  std::vector<Technique> techniques_;
};

struct TrialSpec {
  Condition condition = Condition::kUnknown;
  std::string technique;
  double frameHeightFactor = 1.0;
  int targetRowIndex = 8;
  DistanceGroup distanceGroup = DistanceGroup::kVisible;
  bool requireClick = false;
  int seq = 0;

  friend bool operator==(const TrialSpec&, const TrialSpec&) = default;
};

struct SessionPlan {
  std::string participantId;
  std::vector<std::string> techniques;
  std::vector<TrialSpec> trials;
  std::uint64_t rngSeed = 0;

  friend bool operator==(const SessionPlan&, const SessionPlan&) = default;
};

// Throws std::invalid_argument for rows below 2, which need no upward scroll.
DistanceGroup group_distance(int targetRowIndex, int visibleRows = 10);

// Row r lists participant r's techniques in presentation order. Participants
// walk the technique list cyclically, k at a time, so every technique gets
// n*k/|techniques| sessions. Order position is the slot index mod k, so when
// |techniques| is coprime with k and k divides the session count, each
// technique also appears equally often in every position (a Latin square over
// positions, e.g. 11 participants x 3 of 11 techniques).
std::vector<std::vector<std::string>> assign_devices(int participantCount,
                                                     std::span<const std::string> techniques,
                                                     int perParticipant);

// One technique block: the unknown condition then the known condition, each a
// shuffled sequence of frame-height sub-blocks over shuffled distances.
// Sequence numbers start at `firstSeq`.
std::vector<TrialSpec> generate_block(const std::string& technique, const StudyConfig& config,
                                      std::uint64_t seed, int firstSeq = 1);

SessionPlan generate_session_plan(const std::string& participantId,
                                  std::span<const std::string> techniques, std::uint64_t seed,
                                  const StudyConfig& config);

TrialGeometry geometry_for(const TrialSpec& spec, const StudyConfig& config);

}  // namespace scrolltest
