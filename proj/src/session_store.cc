#include "scrolltest/session_store.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>

namespace scrolltest {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kSessionSuffix = ".session.json";
constexpr const char* kTrialsSuffix = ".trials.jsonl";

std::string errno_text() { return std::strerror(errno); }

// Writes `data` and fsyncs the file before returning; `append` adds to an
// existing file, otherwise the file is replaced atomically via rename.
void write_durably(const fs::path& path, const std::string& data, bool append) {
  const fs::path target = append ? path : fs::path(path.string() + ".tmp");
  const int flags = O_WRONLY | O_CREAT | O_CLOEXEC | (append ? O_APPEND : O_TRUNC);
  const int fd = ::open(target.c_str(), flags, 0644);
  if (fd < 0) throw StoreError(fmt::format("{}: cannot open: {}", target.string(), errno_text()));
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string err = errno_text();
      ::close(fd);
      throw StoreError(fmt::format("{}: write failed: {}", target.string(), err));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const std::string err = errno_text();
    ::close(fd);
    throw StoreError(fmt::format("{}: fsync failed: {}", target.string(), err));
  }
  ::close(fd);
  if (!append) {
    std::error_code ec;
    fs::rename(target, path, ec);
    if (ec) throw StoreError(fmt::format("{}: rename failed: {}", path.string(), ec.message()));
    const int dfd = ::open(path.parent_path().c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
    if (dfd >= 0) {
      ::fsync(dfd);
      ::close(dfd);
    }
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError(fmt::format("{}: cannot read", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool safe_id(const std::string& id) {
  static const std::regex pattern("[A-Za-z0-9][A-Za-z0-9._-]{0,127}");
  return std::regex_match(id, pattern);
}

template <typename T>
T required(const ojson& j, const char* key) {
  if (!j.contains(key)) throw std::invalid_argument(fmt::format("missing field '{}'", key));
  try {
    return j.at(key).get<T>();
  } catch (const ojson::exception& e) {
    throw std::invalid_argument(fmt::format("field '{}': {}", key, e.what()));
  }
}

std::int64_t required_integer(const ojson& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) {
    throw std::invalid_argument(fmt::format("field '{}' must be an integer", key));
  }
  return j.at(key).get<std::int64_t>();
}

std::vector<ScrollEvent> events_from_json(const ojson& j) {
  if (!j.is_array()) throw std::invalid_argument("events must be an array of [t, s] pairs");
  std::vector<ScrollEvent> events;
  events.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const ojson& e = j[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number()) {
      throw std::invalid_argument(
          fmt::format("events[{}] must be [t, s] with integer ms t and numeric s", i));
    }
    events.push_back({e[0].get<std::int64_t>(), e[1].get<double>()});
  }
  return events;
}

ojson events_to_json(const std::vector<ScrollEvent>& events) {
  ojson arr = ojson::array();
  for (const ScrollEvent& e : events) arr.push_back(ojson::array({e.t, e.s}));
  return arr;
}

std::vector<fs::path> session_files(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > std::strlen(kSessionSuffix) && name.ends_with(kSessionSuffix)) {
      out.push_back(entry.path());
    }
  }
  if (ec) throw StoreError(fmt::format("{}: {}", dir.string(), ec.message()));
  std::sort(out.begin(), out.end());
  return out;
}

// Parses every line of a trials file; unreadable lines throw with context.
std::vector<TrialRecord> read_trials(const fs::path& path) {
  std::vector<TrialRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  for (int lineNo = 1; std::getline(in, line); ++lineNo) {
    if (line.empty()) continue;
    try {
      out.push_back(trial_from_line(line));
    } catch (const std::exception& e) {
      throw StoreError(fmt::format("{}:{}: {}", path.string(), lineNo, e.what()));
    }
  }
  return out;
}

// Validates a record against the trace contract and returns the trace's
// server-side metrics.
TrialMetrics recompute(const TrialRecord& r, double epsilon) {
  validate_trace(r.trace, r.geometry.max_scroll());
  MetricsOptions opts;
  opts.epsilonPx = epsilon;
  return compute_metrics(r.trace, r.geometry, opts);
}

}  // namespace

std::string_view to_string(Provenance p) {
  return p == Provenance::kHuman ? "human" : "simulated";
}

Provenance parse_provenance(std::string_view s) {
  if (s == "human") return Provenance::kHuman;
  if (s == "simulated") return Provenance::kSimulated;
  throw std::invalid_argument(fmt::format("unknown provenance '{}'", s));
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)),
                     ms);
}

ojson metrics_to_json(const TrialMetrics& m) {
  ojson j{{"movementTimeMs", m.movementTimeMs},
          {"switchbacks", m.switchbacks},
          {"maxOvershootPx", m.maxOvershootPx},
          {"completed", m.completed}};
  j["endEventIndex"] = m.endEventIndex ? ojson(*m.endEventIndex) : ojson(nullptr);
  j["switchbacksAfterOvershoot"] = m.switchbacksAfterOvershoot;
  j["firstOvershootMs"] = m.firstOvershootMs ? ojson(*m.firstOvershootMs) : ojson(nullptr);
  return j;
}

TrialMetrics metrics_from_json(const ojson& j) {
  if (!j.is_object()) throw std::invalid_argument("metrics must be an object");
  TrialMetrics m;
  m.movementTimeMs = required_integer(j, "movementTimeMs");
  m.switchbacks = static_cast<int>(required_integer(j, "switchbacks"));
  m.maxOvershootPx = required<double>(j, "maxOvershootPx");
  m.completed = required<bool>(j, "completed");
  if (j.contains("endEventIndex") && !j["endEventIndex"].is_null()) {
    m.endEventIndex = static_cast<std::size_t>(required_integer(j, "endEventIndex"));
  }
  if (j.contains("switchbacksAfterOvershoot")) {
    m.switchbacksAfterOvershoot = static_cast<int>(required_integer(j, "switchbacksAfterOvershoot"));
  }
  if (j.contains("firstOvershootMs") && !j["firstOvershootMs"].is_null()) {
    m.firstOvershootMs = required_integer(j, "firstOvershootMs");
  }
  return m;
}

std::string trial_to_line(const TrialRecord& r) {
  const TrialGeometry& g = r.geometry;
  ojson j{{"schemaVersion", kTrialSchemaVersion},
          {"sessionId", r.sessionId},
          {"seq", r.seq},
          {"condition", to_string(r.spec.condition)},
          {"technique", r.spec.technique},
          {"frameHeightFactor", r.spec.frameHeightFactor},
          {"targetRowIndex", r.spec.targetRowIndex},
          {"lineHeightPx", g.lineHeight},
          {"viewportHeightPx", g.viewportHeight},
          {"frameTopPx", g.frameTop},
          {"frameBottomPx", g.frameBottom},
          {"quiescenceMs", r.trace.quiescenceMs},
          {"epsilonPx", r.epsilonPx},
          {"events", events_to_json(r.trace.events)},
          {"clientMetrics", metrics_to_json(r.clientMetrics)},
          {"serverMetrics", metrics_to_json(r.serverMetrics)},
          {"mismatch", r.mismatch},
          {"rowCount", g.rowCount},
          {"distanceGroup", to_string(r.spec.distanceGroup)},
          {"requireClick", r.spec.requireClick}};
  if (r.trace.clickT) j["clickMs"] = *r.trace.clickT;
  j["receivedAt"] = r.receivedAt;
  return j.dump();
}

TrialRecord trial_from_line(const std::string& line) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const ojson::parse_error& e) {
    throw std::invalid_argument(fmt::format("not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) throw std::invalid_argument("trial record must be an object");
  const auto version = required_integer(j, "schemaVersion");
  if (version != kTrialSchemaVersion) {
    throw std::invalid_argument(fmt::format("unsupported schemaVersion {}", version));
  }
  TrialRecord r;
  r.sessionId = required<std::string>(j, "sessionId");
  r.seq = static_cast<int>(required_integer(j, "seq"));
  r.spec.seq = r.seq;
  r.spec.condition = parse_condition(required<std::string>(j, "condition"));
  r.spec.technique = required<std::string>(j, "technique");
  r.spec.frameHeightFactor = required<double>(j, "frameHeightFactor");
  r.spec.targetRowIndex = static_cast<int>(required_integer(j, "targetRowIndex"));
  r.spec.distanceGroup = parse_distance_group(required<std::string>(j, "distanceGroup"));
  r.spec.requireClick = required<bool>(j, "requireClick");
  TrialGeometry& g = r.geometry;
  g.lineHeight = required<double>(j, "lineHeightPx");
  g.viewportHeight = required<double>(j, "viewportHeightPx");
  g.frameTop = required<double>(j, "frameTopPx");
  g.frameBottom = required<double>(j, "frameBottomPx");
  g.rowCount = static_cast<int>(required_integer(j, "rowCount"));
  g.targetRowIndex = r.spec.targetRowIndex;
  g.targetTop = (g.targetRowIndex - 1) * g.lineHeight;
  g.targetHeight = g.lineHeight;
  r.trace.quiescenceMs = required_integer(j, "quiescenceMs");
  r.trace.events = events_from_json(j.at("events"));
  if (j.contains("clickMs")) r.trace.clickT = required_integer(j, "clickMs");
  r.epsilonPx = required<double>(j, "epsilonPx");
  if (!j.contains("clientMetrics") || !j.contains("serverMetrics")) {
    throw std::invalid_argument("missing clientMetrics or serverMetrics");
  }
  r.clientMetrics = metrics_from_json(j.at("clientMetrics"));
  r.serverMetrics = metrics_from_json(j.at("serverMetrics"));
  r.mismatch = required<bool>(j, "mismatch");
  if (j.contains("receivedAt")) r.receivedAt = required<std::string>(j, "receivedAt");
  return r;
}

ojson session_to_json(const SessionRecord& s) {
  return ojson{{"sessionId", s.sessionId},   {"participantId", s.participantId},
               {"technique", s.technique},   {"deviceLabel", s.deviceLabel},
               {"createdAt", s.createdAt},   {"seed", s.seed},
               {"provenance", to_string(s.provenance)}, {"config", s.config}};
}

SessionRecord session_from_json(const ojson& j) {
  SessionRecord s;
  s.sessionId = required<std::string>(j, "sessionId");
  s.participantId = required<std::string>(j, "participantId");
  s.technique = required<std::string>(j, "technique");
  s.deviceLabel = required<std::string>(j, "deviceLabel");
  s.createdAt = required<std::string>(j, "createdAt");
  s.seed = required<std::uint64_t>(j, "seed");
  s.provenance = parse_provenance(required<std::string>(j, "provenance"));
  s.config = required<StudyConfig>(j, "config");
  return s;
}

bool SessionFilter::matches(const SessionRecord& s) const {
  return (!technique || s.technique == *technique) &&
         (!participantId || s.participantId == *participantId) &&
         (!provenance || s.provenance == *provenance);
}

std::string RevalidationReport::to_text() const {
  std::string out = fmt::format("trials checked: {}\n", trials);
  out += fmt::format("engine diffs: {}\n", engineDiffs.size());
  for (const FieldDiff& d : engineDiffs) {
    out += fmt::format("  {} seq {}: {}\n", d.sessionId, d.seq, fmt::join(d.fields, ", "));
  }
  out += fmt::format("client mismatches: {}\n", clientDiffs.size());
  for (const FieldDiff& d : clientDiffs) {
    out += fmt::format("  {} seq {}: {}\n", d.sessionId, d.seq, fmt::join(d.fields, ", "));
  }
  out += fmt::format("unreadable trials: {}\n", unreadable.size());
  for (const UnreadableTrial& u : unreadable) {
    out += fmt::format("  {}:{}: {}\n", u.file, u.line, u.error);
  }
  return out;
}

SessionStore::SessionStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_)) {
    throw StoreError(fmt::format("{}: cannot create store directory: {}", dir_.string(),
                                 ec ? ec.message() : "not a directory"));
  }
}

fs::path SessionStore::session_path(const std::string& id) const {
  return dir_ / (id + kSessionSuffix);
}

fs::path SessionStore::trials_path(const std::string& id) const {
  return dir_ / (id + kTrialsSuffix);
}

std::mutex& SessionStore::session_mutex(const std::string& id) const {
  std::lock_guard lock(registryMutex_);
  auto& slot = sessionMutexes_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void SessionStore::create_session(const SessionRecord& s) {
  if (!safe_id(s.sessionId)) {
    throw StoreError(fmt::format("invalid session id '{}'", s.sessionId));
  }
  std::lock_guard lock(session_mutex(s.sessionId));
  if (fs::exists(session_path(s.sessionId))) {
    throw StoreError(fmt::format("session '{}' already exists", s.sessionId));
  }
  write_durably(session_path(s.sessionId), session_to_json(s).dump(2) + "\n", false);
}

std::optional<SessionRecord> SessionStore::find_session(const std::string& id) const {
  if (!safe_id(id)) return std::nullopt;
  const fs::path path = session_path(id);
  if (!fs::exists(path)) return std::nullopt;
  try {
    return session_from_json(ojson::parse(read_file(path)));
  } catch (const std::exception& e) {
    throw StoreError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::vector<SessionRecord> SessionStore::sessions(const SessionFilter& filter) const {
  std::vector<SessionRecord> out;
  for (const fs::path& p : session_files(dir_)) {
    SessionRecord s;
    try {
      s = session_from_json(ojson::parse(read_file(p)));
    } catch (const std::exception& e) {
      throw StoreError(fmt::format("{}: {}", p.string(), e.what()));
    }
    if (filter.matches(s)) out.push_back(std::move(s));
  }
  return out;
}

std::vector<TrialRecord> SessionStore::trials(const std::string& sessionId) const {
  return read_trials(trials_path(sessionId));
}

int SessionStore::last_seq(const std::string& sessionId) const {
  {
    std::lock_guard lock(registryMutex_);
    if (auto it = lastSeq_.find(sessionId); it != lastSeq_.end()) return it->second;
  }
  int last = 0;
  std::ifstream in(trials_path(sessionId));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      last = std::max(last, static_cast<int>(ojson::parse(line).at("seq").get<int>()));
    } catch (const std::exception&) {
      // Unreadable lines are reported by revalidate; they carry no usable seq.
    }
  }
  std::lock_guard lock(registryMutex_);
  lastSeq_[sessionId] = last;
  return last;
}

TrialRecord SessionStore::append_trial(TrialRecord record) {
  std::lock_guard lock(session_mutex(record.sessionId));
  if (!find_session(record.sessionId)) {
    throw UnknownSessionError(fmt::format("unknown session '{}'", record.sessionId));
  }
  const int last = last_seq(record.sessionId);
  if (record.seq <= last) {
    throw SequenceError(fmt::format("seq {} is not after the last stored seq {} of session '{}'",
                                    record.seq, last, record.sessionId));
  }
  record.spec.seq = record.seq;
  record.serverMetrics = recompute(record, record.epsilonPx);
  record.mismatch = !same_reported_metrics(record.clientMetrics, record.serverMetrics);
  if (record.receivedAt.empty()) record.receivedAt = utc_now();
  write_durably(trials_path(record.sessionId), trial_to_line(record) + "\n", true);
  std::lock_guard reg(registryMutex_);
  lastSeq_[record.sessionId] = record.seq;
  return record;
}

void SessionStore::add_simulated(const std::vector<SimSession>& sessions,
                                 const StudyConfig& config) {
  for (const SimSession& sim : sessions) {
    SessionRecord s;
    s.sessionId = sim.sessionId;
    s.participantId = sim.participantId;
    s.technique = sim.technique;
    s.deviceLabel = "simulated agent";
    s.createdAt = utc_now();
    s.seed = sim.seed;
    s.config = config;
    s.provenance = Provenance::kSimulated;
    create_session(s);

    // One durable write per session file.
    std::lock_guard lock(session_mutex(s.sessionId));
    std::string lines;
    int last = 0;
    for (const SimTrial& t : sim.trials) {
      TrialRecord r;
      r.sessionId = s.sessionId;
      r.seq = t.spec.seq;
      r.spec = t.spec;
      r.geometry = t.geometry;
      r.trace = t.trace;
      r.epsilonPx = config.epsilonPx;
      r.clientMetrics = t.groundTruth;
      r.serverMetrics = recompute(r, r.epsilonPx);
      r.mismatch = !same_reported_metrics(r.clientMetrics, r.serverMetrics);
      r.receivedAt = s.createdAt;
      if (r.seq <= last) throw SequenceError(fmt::format("simulated seq {} out of order", r.seq));
      last = r.seq;
      lines += trial_to_line(r) + "\n";
    }
    write_durably(trials_path(s.sessionId), lines, true);
    std::lock_guard reg(registryMutex_);
    lastSeq_[s.sessionId] = last;
  }
}

int SessionStore::export_to(const fs::path& out, const SessionFilter& filter) const {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw StoreError(fmt::format("{}: cannot create export directory: {}", out.string(), ec.message()));
  if (!session_files(out).empty()) {
    throw StoreError(fmt::format("{}: export directory already contains sessions", out.string()));
  }
  std::string csv = metrics_csv_header();
  int count = 0;
  for (const SessionRecord& s : sessions(filter)) {
    write_durably(out / (s.sessionId + kSessionSuffix), session_to_json(s).dump(2) + "\n", false);
    std::string lines;
    for (const TrialRecord& r : trials(s.sessionId)) {
      if (filter.condition && r.spec.condition != *filter.condition) continue;
      lines += trial_to_line(r) + "\n";
      csv += metrics_csv_row(r);
      ++count;
    }
    write_durably(out / (s.sessionId + kTrialsSuffix), lines, false);
  }
  write_durably(out / "metrics.csv", csv, false);
  return count;
}

int SessionStore::import_from(const fs::path& in) {
  if (!fs::is_directory(in)) throw StoreError(fmt::format("{}: not a directory", in.string()));
  struct Pending {
    SessionRecord session;
    std::vector<TrialRecord> trials;
  };
  std::vector<Pending> pending;
  for (const fs::path& p : session_files(in)) {
    Pending item;
    try {
      item.session = session_from_json(ojson::parse(read_file(p)));
    } catch (const std::exception& e) {
      throw StoreError(fmt::format("{}: {}", p.string(), e.what()));
    }
    if (find_session(item.session.sessionId)) {
      throw StoreError(fmt::format("{}: session '{}' already exists in {}", p.string(),
                                   item.session.sessionId, dir_.string()));
    }
    const fs::path tp = in / (item.session.sessionId + kTrialsSuffix);
    item.trials = read_trials(tp);
    int last = 0;
    for (const TrialRecord& r : item.trials) {
      if (r.sessionId != item.session.sessionId || r.seq <= last) {
        throw StoreError(fmt::format("{}: seq {} out of order or foreign session", tp.string(), r.seq));
      }
      try {
        validate_trace(r.trace, r.geometry.max_scroll());
      } catch (const TraceError& e) {
        throw StoreError(fmt::format("{}: seq {}: {}", tp.string(), r.seq, e.what()));
      }
      last = r.seq;
    }
    pending.push_back(std::move(item));
  }
  int count = 0;
  for (const Pending& item : pending) {
    create_session(item.session);
    std::lock_guard lock(session_mutex(item.session.sessionId));
    std::string lines;
    for (const TrialRecord& r : item.trials) lines += trial_to_line(r) + "\n";
    write_durably(trials_path(item.session.sessionId), lines, true);
    std::lock_guard reg(registryMutex_);
    lastSeq_[item.session.sessionId] = item.trials.empty() ? 0 : item.trials.back().seq;
    count += static_cast<int>(item.trials.size());
  }
  return count;
}

RevalidationReport SessionStore::revalidate(std::optional<double> epsilonOverride) const {
  RevalidationReport report;
  for (const fs::path& sp : session_files(dir_)) {
    const std::string name = sp.filename().string();
    const std::string id = name.substr(0, name.size() - std::strlen(kSessionSuffix));
    const fs::path tp = trials_path(id);
    std::ifstream in(tp);
    std::string line;
    for (int lineNo = 1; std::getline(in, line); ++lineNo) {
      if (line.empty()) continue;
      try {
        const TrialRecord r = trial_from_line(line);
        const TrialMetrics now = recompute(r, epsilonOverride.value_or(r.epsilonPx));
        ++report.trials;
        if (auto f = differing_fields(r.serverMetrics, now); !f.empty()) {
          report.engineDiffs.push_back({r.sessionId, r.seq, std::move(f)});
        }
        if (auto f = differing_fields(r.clientMetrics, now); !f.empty()) {
          report.clientDiffs.push_back({r.sessionId, r.seq, std::move(f)});
        }
      } catch (const std::exception& e) {
        report.unreadable.push_back({tp.string(), lineNo, e.what()});
      }
    }
  }
  return report;
}

std::vector<TrialObservation> SessionStore::observations(const SessionFilter& filter) const {
  std::vector<TrialObservation> out;
  for (const SessionRecord& s : sessions(filter)) {
    for (const TrialRecord& r : trials(s.sessionId)) {
      if (filter.condition && r.spec.condition != *filter.condition) continue;
      out.push_back({r.spec.technique, r.spec.condition, r.spec.frameHeightFactor,
                     r.spec.targetRowIndex, r.spec.distanceGroup, r.serverMetrics});
    }
  }
  return out;
}

std::string metrics_csv_header() {
  return "sessionId,seq,technique,condition,H,D,distanceGroup,time_ms,switchbacks,"
         "max_overshoot_px,completed,mismatch\n";
}

std::string metrics_csv_row(const TrialRecord& r) {
  const TrialMetrics& m = r.serverMetrics;
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", r.sessionId, r.seq, r.spec.technique,
                     to_string(r.spec.condition), r.spec.frameHeightFactor, r.spec.targetRowIndex,
                     to_string(r.spec.distanceGroup), m.movementTimeMs, m.switchbacks,
                     m.maxOvershootPx, m.completed, r.mismatch);
}

}  // namespace scrolltest
