#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "scrolltest/experiment_design.h"
#include "scrolltest/report.h"
#include "scrolltest/simulator.h"
#include "scrolltest/study_config.h"
#include "scrolltest/trace_metrics.h"

namespace scrolltest {

inline constexpr int kTrialSchemaVersion = 1;

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class UnknownSessionError : public StoreError {
 public:
  using StoreError::StoreError;
};
class SequenceError : public StoreError {
 public:
  using StoreError::StoreError;
};

enum class Provenance { kHuman, kSimulated };
std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view s);

// One technique block run by one participant.
struct SessionRecord {
  std::string sessionId;
  std::string participantId;
  std::string technique;
  std::string deviceLabel;
  std::string createdAt;  // UTC, ISO 8601
  std::uint64_t seed = 0; // regenerates the trial plan
  StudyConfig config;
  Provenance provenance = Provenance::kHuman;

  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

struct TrialRecord {
  std::string sessionId;
  int seq = 0;
  TrialSpec spec;
  TrialGeometry geometry;
  TrialTrace trace;
  double epsilonPx = kDefaultEpsilonPx;
  TrialMetrics clientMetrics;
  TrialMetrics serverMetrics;
  bool mismatch = false;
  std::string receivedAt;  // server receipt time, UTC

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

nlohmann::ordered_json metrics_to_json(const TrialMetrics& m);
TrialMetrics metrics_from_json(const nlohmann::ordered_json& j);

// One line of a trials file. Throws std::invalid_argument on malformed input.
std::string trial_to_line(const TrialRecord& r);
TrialRecord trial_from_line(const std::string& line);

nlohmann::ordered_json session_to_json(const SessionRecord& s);
SessionRecord session_from_json(const nlohmann::ordered_json& j);

std::string utc_now();

struct SessionFilter {
  std::optional<std::string> technique;
  std::optional<std::string> participantId;
  std::optional<Condition> condition;  // applies to trials
  std::optional<Provenance> provenance;

  bool matches(const SessionRecord& s) const;
};

struct FieldDiff {
  std::string sessionId;
  int seq = 0;
  std::vector<std::string> fields;
};

struct UnreadableTrial {
  std::string file;
  int line = 0;
  std::string error;
};

struct RevalidationReport {
  int trials = 0;
  std::vector<FieldDiff> engineDiffs;    // stored serverMetrics vs recomputation
  std::vector<FieldDiff> clientDiffs;    // clientMetrics vs recomputation
  std::vector<UnreadableTrial> unreadable;

  bool clean() const { return engineDiffs.empty() && clientDiffs.empty() && unreadable.empty(); }
  std::string to_text() const;
};

// Append-only store of sessions and trials under one directory:
//   <id>.session.json   session metadata, written once
//   <id>.trials.jsonl   one trial record per line, in seq order
// Each session file has a single writer (per-session lock); every append is
// fsync'd before it is acknowledged.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  // Throws StoreError if the id is taken or not a safe file name.
  void create_session(const SessionRecord& s);
  std::optional<SessionRecord> find_session(const std::string& id) const;
  std::vector<SessionRecord> sessions(const SessionFilter& filter = {}) const;

  // Recomputes serverMetrics and mismatch, appends durably and returns the
  // stored record. Throws UnknownSessionError, SequenceError (seq not greater
  // than the last stored one), TraceError or GeometryError; the store is
  // unchanged on error.
  TrialRecord append_trial(TrialRecord record);

  std::vector<TrialRecord> trials(const std::string& sessionId) const;
  // 0 when the session has no trials.
  int last_seq(const std::string& sessionId) const;

  // Writes matching sessions and trials in store layout plus metrics.csv.
  // Returns the number of trials written.
  int export_to(const std::filesystem::path& out, const SessionFilter& filter = {}) const;
  // Appends every session of an exported (or store) directory. Existing
  // session ids are rejected. Returns the number of trials imported.
  int import_from(const std::filesystem::path& in);

  RevalidationReport revalidate(std::optional<double> epsilonOverride = std::nullopt) const;

  // Trials of matching sessions with their authoritative server metrics.
  std::vector<TrialObservation> observations(const SessionFilter& filter = {}) const;

  // Writes simulated sessions. Client metrics are the agent ground truth.
  void add_simulated(const std::vector<SimSession>& sessions, const StudyConfig& config);

 private:
  std::filesystem::path session_path(const std::string& id) const;
  std::filesystem::path trials_path(const std::string& id) const;
  std::mutex& session_mutex(const std::string& id) const;

  std::filesystem::path dir_;
  mutable std::mutex registryMutex_;
  mutable std::map<std::string, std::unique_ptr<std::mutex>> sessionMutexes_;
  mutable std::map<std::string, int> lastSeq_;
};

// Columns: sessionId,seq,technique,condition,H,D,distanceGroup,time_ms,
// switchbacks,max_overshoot_px,completed,mismatch
std::string metrics_csv_header();
std::string metrics_csv_row(const TrialRecord& r);

}  // namespace scrolltest
