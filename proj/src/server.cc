#include "scrolltest/server.h"

#include <cmath>
#include <map>
#include <mutex>
#include <random>

#include <fmt/format.h>

#include "httplib.h"
#include "scrolltest/report.h"

namespace scrolltest {

using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kPlaceholderPage = R"(<!doctype html>
<html lang="en"><head><meta charset="utf-8"><title>scrolltest</title></head>
<body>
<h1>scrolltest server</h1>
<p>No participant UI is bundled with this server. Start it with
<code>--static-dir</code> to serve one, or drive the JSON API directly:</p>
<ul>
<li><code>POST /api/sessions</code></li>
<li><code>GET /api/sessions/{id}/trial</code></li>
<li><code>POST /api/sessions/{id}/trials/{seq}</code></li>
<li><code>GET /api/sessions/{id}/results</code></li>
<li><code>GET /api/report</code></li>
</ul>
</body></html>
)";

// Error carrying an HTTP status.
struct ApiError {
  int status;
  std::string message;
  ojson extra = ojson::object();
};

void send_json(httplib::Response& res, int status, const ojson& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const ApiError& e) {
  ojson body{{"error", e.message}};
  for (const auto& [k, v] : e.extra.items()) body[k] = v;
  send_json(res, e.status, body);
}

ojson parse_body(const httplib::Request& req) {
  try {
    ojson j = ojson::parse(req.body);
    if (!j.is_object()) throw ApiError{400, "request body must be a JSON object"};
    return j;
  } catch (const ojson::parse_error& e) {
    throw ApiError{400, fmt::format("request body is not valid JSON: {}", e.what())};
  }
}

std::string new_session_id() {
  std::random_device rd;
  std::uniform_int_distribution<std::uint64_t> dist;
  return fmt::format("{:016x}", dist(rd));
}

ojson spec_json(const TrialSpec& s) {
  return ojson{{"condition", to_string(s.condition)},
               {"technique", s.technique},
               {"frameHeightFactor", s.frameHeightFactor},
               {"targetRowIndex", s.targetRowIndex},
               {"distanceGroup", to_string(s.distanceGroup)},
               {"requireClick", s.requireClick}};
}

ojson geometry_json(const TrialGeometry& g, const StudyConfig& c) {
  return ojson{{"lineHeightPx", g.lineHeight},     {"visibleRows", c.visibleRows},
               {"rowCount", g.rowCount},           {"viewportHeightPx", g.viewportHeight},
               {"frameTopPx", g.frameTop},         {"frameBottomPx", g.frameBottom},
               {"targetTopPx", g.targetTop},       {"targetHeightPx", g.targetHeight}};
}

ojson means_json(const MetricMeans& m) {
  return ojson{{"meanTimeS", m.timeS},
               {"meanSwitchbacks", m.switchbacks},
               {"meanMaxOvershootPx", m.maxOvershootPx},
               {"n", m.n}};
}

ojson optional_number(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson fit_json(const RegressionFit& f) {
  return ojson{{"a", f.a}, {"b", f.b}, {"r2", f.r2}, {"n", f.n}};
}

ojson report_json(const Report& r) {
  ojson j;
  j["completedTrials"] = r.completedTrials;
  j["incompleteTrials"] = r.incompleteTrials;
  ojson techniques = ojson::array();
  for (const TechniqueSummary& s : r.techniques) {
    ojson t{{"technique", s.technique}, {"condition", to_string(s.condition)}};
    t.update(means_json(s.means));
    t["incomplete"] = s.incomplete;
    if (s.fits) {
      t["linear"] = fit_json(s.fits->linear);
      t["log2"] = fit_json(s.fits->log2);
      t["better"] = to_string(s.fits->winner);
    } else {
      t["fitError"] = s.fitError;
    }
    techniques.push_back(t);
  }
  j["techniques"] = techniques;
  ojson correlations = ojson::array();
  for (const CorrelationRow& c : r.correlations) {
    correlations.push_back({{"metric1", c.metric1},
                            {"metric2", c.metric2},
                            {"rUnknown", optional_number(c.rUnknown)},
                            {"rKnown", optional_number(c.rKnown)}});
  }
  j["correlations"] = correlations;
  ojson conditions = ojson::array();
  for (const ConditionAnalysis& a : r.conditions) {
    ojson c{{"condition", to_string(a.condition)}, {"techniques", a.techniques}};
    if (a.perTrial) {
      c["anova"] = {{"F", std::isinf(a.perTrial->fStat) ? ojson("inf") : ojson(a.perTrial->fStat)},
                    {"dfBetween", a.perTrial->dfBetween},
                    {"dfWithin", a.perTrial->dfWithin},
                    {"p", a.perTrial->pValue}};
    }
    if (a.tukey) {
      ojson groups = ojson::array();
      for (const auto& g : a.tukey->groups) {
        ojson members = ojson::array();
        for (std::size_t i : g) members.push_back(a.techniques[i]);
        groups.push_back(members);
      }
      c["tukeyGroups"] = groups;
    }
    c["rFrameTime"] = optional_number(a.rFrameTime);
    c["rFrameSwitchbacks"] = optional_number(a.rFrameSwitchbacks);
    c["rFrameOvershoot"] = optional_number(a.rFrameOvershoot);
    c["notes"] = a.notes;
    conditions.push_back(c);
  }
  j["conditions"] = conditions;
  return j;
}

}  // namespace

struct StudyServer::Impl {
  struct ApiSession {
    SessionRecord record;
    std::vector<TrialSpec> plan;
    std::size_t cursor = 0;  // index of the next trial to run
    bool issued = false;     // state in-trial vs awaiting-trial
    std::mutex mutex;
  };

  SessionStore& store;
  StudyConfig config;
  httplib::Server http;
  std::mutex sessionsMutex;
  std::map<std::string, std::unique_ptr<ApiSession>> sessions;

  Impl(SessionStore& s, StudyConfig c) : store(s), config(std::move(c)) {}

  // Loads a session, resuming its cursor from the store after a restart.
  ApiSession& session(const std::string& id) {
    std::lock_guard lock(sessionsMutex);
    if (auto it = sessions.find(id); it != sessions.end()) return *it->second;
    const auto record = store.find_session(id);
    if (!record) throw ApiError{404, fmt::format("unknown session '{}'", id)};
    auto s = std::make_unique<ApiSession>();
    s->record = *record;
    s->plan = generate_block(record->technique, record->config, record->seed);
    const int last = store.last_seq(id);
    s->cursor = static_cast<std::size_t>(
        std::find_if(s->plan.begin(), s->plan.end(), [&](const TrialSpec& t) { return t.seq > last; }) -
        s->plan.begin());
    return *sessions.emplace(id, std::move(s)).first->second;
  }

  void create(const httplib::Request& req, httplib::Response& res) {
    const ojson body = parse_body(req);
    auto text = [&](const char* key, bool requiredField) -> std::string {
      if (!body.contains(key)) {
        if (requiredField) throw ApiError{422, fmt::format("missing field '{}'", key)};
        return {};
      }
      if (!body[key].is_string()) throw ApiError{422, fmt::format("field '{}' must be a string", key)};
      return body[key].get<std::string>();
    };
    SessionRecord s;
    s.participantId = text("participantId", true);
    s.technique = text("technique", true);
    s.deviceLabel = text("deviceLabel", false);
    if (s.participantId.empty()) throw ApiError{422, "participantId must not be empty"};
    if (std::find(config.techniques.begin(), config.techniques.end(), s.technique) ==
        config.techniques.end()) {
      throw ApiError{422, fmt::format("technique '{}' is not part of this study", s.technique)};
    }
    if (body.contains("seed")) {
      if (!body["seed"].is_number_unsigned()) throw ApiError{422, "seed must be a non-negative integer"};
      s.seed = body["seed"].get<std::uint64_t>();
    } else {
      s.seed = std::random_device{}() ^ (static_cast<std::uint64_t>(std::random_device{}()) << 32);
    }
    s.sessionId = new_session_id();
    s.createdAt = utc_now();
    s.config = config;
    s.provenance = Provenance::kHuman;
    store.create_session(s);
    ApiSession& api = session(s.sessionId);
    send_json(res, 201,
              ojson{{"sessionId", s.sessionId}, {"config", s.config}, {"trialCount", api.plan.size()}});
  }

  void next_trial(const std::string& id, httplib::Response& res) {
    ApiSession& s = session(id);
    std::lock_guard lock(s.mutex);
    if (s.cursor >= s.plan.size()) {
      send_json(res, 200, ojson{{"sessionId", id}, {"done", true}, {"state", "done"}});
      return;
    }
    const TrialSpec& spec = s.plan[s.cursor];
    s.issued = true;
    send_json(res, 200,
              ojson{{"sessionId", id},
                    {"done", false},
                    {"state", "in-trial"},
                    {"seq", spec.seq},
                    {"index", s.cursor},
                    {"trialCount", s.plan.size()},
                    {"spec", spec_json(spec)},
                    {"geometry", geometry_json(geometry_for(spec, s.record.config), s.record.config)},
                    {"quiescenceMs", s.record.config.quiescenceMs},
                    {"epsilonPx", s.record.config.epsilonPx}});
  }

  // Geometry the client actually rendered; defaults to the configured one.
  static TrialGeometry client_geometry(const ojson& body, const TrialSpec& spec,
                                       const StudyConfig& c) {
    TrialGeometry g = geometry_for(spec, c);
    if (!body.contains("geometry")) return g;
    const ojson& j = body["geometry"];
    auto num = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_number()) {
        throw ApiError{422, fmt::format("geometry.{} must be a number", key)};
      }
      return j[key].get<double>();
    };
    g.lineHeight = num("lineHeightPx");
    g.viewportHeight = num("viewportHeightPx");
    g.frameTop = num("frameTopPx");
    g.frameBottom = num("frameBottomPx");
    g.targetTop = (spec.targetRowIndex - 1) * g.lineHeight;
    g.targetHeight = g.lineHeight;
    if (!(g.lineHeight > 0.0)) throw ApiError{422, "geometry.lineHeightPx must be positive"};
    if (std::abs(g.viewportHeight - c.visibleRows * g.lineHeight) > 1.0) {
      throw ApiError{422, fmt::format("geometry.viewportHeightPx must show {} rows", c.visibleRows)};
    }
    if (std::abs((g.frameBottom - g.frameTop) - spec.frameHeightFactor * g.lineHeight) > 1.0) {
      throw ApiError{422, fmt::format("geometry frame must be {} rows high", spec.frameHeightFactor)};
    }
    return g;
  }

  void submit(const std::string& id, int seq, const httplib::Request& req, httplib::Response& res) {
    ApiSession& s = session(id);
    std::lock_guard lock(s.mutex);
    if (s.cursor >= s.plan.size()) {
      throw ApiError{409, "session is complete", ojson{{"done", true}}};
    }
    const TrialSpec& spec = s.plan[s.cursor];
    if (seq != spec.seq) {
      throw ApiError{409, fmt::format("trial {} is not the issued trial", seq),
                     ojson{{"expectedSeq", spec.seq}}};
    }
    const ojson body = parse_body(req);
    if (!body.contains("trace") || !body["trace"].is_object()) {
      throw ApiError{422, "missing object field 'trace'"};
    }
    if (!body.contains("clientMetrics")) throw ApiError{422, "missing field 'clientMetrics'"};

    TrialRecord r;
    r.sessionId = id;
    r.seq = seq;
    r.spec = spec;
    r.geometry = client_geometry(body, spec, s.record.config);
    r.epsilonPx = s.record.config.epsilonPx;
    r.trace.quiescenceMs = s.record.config.quiescenceMs;
    try {
      // Reuse the record parser's field checks for events and metrics.
      ojson probe{{"events", body["trace"].value("events", ojson())}};
      if (!probe["events"].is_array()) throw std::invalid_argument("trace.events must be an array");
      for (std::size_t i = 0; i < probe["events"].size(); ++i) {
        const ojson& e = probe["events"][i];
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number()) {
          throw std::invalid_argument(
              fmt::format("trace.events[{}] must be [t, s] with integer ms t and numeric s", i));
        }
        r.trace.events.push_back({e[0].get<std::int64_t>(), e[1].get<double>()});
      }
      if (body["trace"].contains("clickMs")) {
        if (!body["trace"]["clickMs"].is_number_integer()) {
          throw std::invalid_argument("trace.clickMs must be an integer");
        }
        r.trace.clickT = body["trace"]["clickMs"].get<std::int64_t>();
      }
      if (spec.requireClick && !r.trace.clickT) {
        throw std::invalid_argument("trace.clickMs is required for click-to-confirm trials");
      }
      r.clientMetrics = metrics_from_json(body["clientMetrics"]);
    } catch (const std::invalid_argument& e) {
      throw ApiError{422, e.what()};
    }
    TrialRecord stored;
    try {
      stored = store.append_trial(r);
    } catch (const TraceError& e) {
      throw ApiError{422, fmt::format("malformed trace: {}", e.what())};
    } catch (const GeometryError& e) {
      throw ApiError{422, fmt::format("invalid geometry: {}", e.what())};
    } catch (const SequenceError& e) {
      throw ApiError{409, e.what()};
    }
    ++s.cursor;
    s.issued = false;
    send_json(res, 200,
              ojson{{"accepted", true},
                    {"seq", seq},
                    {"serverMetrics", metrics_to_json(stored.serverMetrics)},
                    {"mismatch", stored.mismatch},
                    {"done", s.cursor >= s.plan.size()}});
  }

  void results(const std::string& id, httplib::Response& res) {
    ApiSession& s = session(id);
    std::lock_guard lock(s.mutex);
    const auto trials = store.trials(id);
    int mismatches = 0;
    ojson conditions = ojson::array();
    for (Condition c : {Condition::kUnknown, Condition::kKnown}) {
      double time = 0, sb = 0, os = 0;
      int n = 0, completed = 0;
      for (const TrialRecord& r : trials) {
        if (r.spec.condition != c) continue;
        ++n;
        if (!r.serverMetrics.completed) continue;
        ++completed;
        time += r.serverMetrics.movementTimeMs / 1000.0;
        sb += r.serverMetrics.switchbacks;
        os += r.serverMetrics.maxOvershootPx;
      }
      ojson row{{"condition", to_string(c)}, {"trials", n}, {"completed", completed}};
      row["meanTimeS"] = completed ? ojson(time / completed) : ojson(nullptr);
      row["meanSwitchbacks"] = completed ? ojson(sb / completed) : ojson(nullptr);
      row["meanMaxOvershootPx"] = completed ? ojson(os / completed) : ojson(nullptr);
      conditions.push_back(row);
    }
    for (const TrialRecord& r : trials) mismatches += r.mismatch ? 1 : 0;
    send_json(res, 200,
              ojson{{"sessionId", id},
                    {"participantId", s.record.participantId},
                    {"technique", s.record.technique},
                    {"trialsStored", trials.size()},
                    {"trialsPlanned", s.plan.size()},
                    {"done", s.cursor >= s.plan.size()},
                    {"mismatches", mismatches},
                    {"conditions", conditions}});
  }

  void report(const httplib::Request& req, httplib::Response& res) {
    SessionFilter filter;
    ReportOptions options;
    try {
      if (req.has_param("technique")) filter.technique = req.get_param_value("technique");
      if (req.has_param("participantId")) filter.participantId = req.get_param_value("participantId");
      if (req.has_param("condition")) filter.condition = parse_condition(req.get_param_value("condition"));
      if (req.has_param("provenance")) filter.provenance = parse_provenance(req.get_param_value("provenance"));
    } catch (const std::invalid_argument& e) {
      throw ApiError{422, e.what()};
    }
    options.perTrialFits = req.get_param_value("perTrial") == "1" || req.get_param_value("perTrial") == "true";
    const auto obs = store.observations(filter);
    if (obs.empty()) throw ApiError{404, "no sessions found"};
    Report r;
    try {
      r = aggregate_report(obs, options);
    } catch (const std::invalid_argument& e) {
      throw ApiError{404, e.what()};
    }
    const std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
    if (format == "text") {
      res.set_content(render_text(r), "text/plain; charset=utf-8");
    } else if (format == "csv") {
      res.set_content(summary_csv(r), "text/csv; charset=utf-8");
    } else if (format == "json") {
      send_json(res, 200, report_json(r));
    } else {
      throw ApiError{422, fmt::format("unknown format '{}'", format)};
    }
  }

  // Runs a handler, mapping failures to JSON errors.
  template <typename F>
  auto guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const ApiError& e) {
        send_error(res, e);
      } catch (const StoreError& e) {
        send_error(res, {500, e.what()});
      } catch (const std::exception& e) {
        send_error(res, {500, e.what()});
      }
    };
  }

  void routes(const std::optional<std::filesystem::path>& staticDir) {
    http.Post("/api/sessions", guarded([this](const auto& req, auto& res) { create(req, res); }));
    http.Get(R"(/api/sessions/([^/]+)/trial)",
             guarded([this](const auto& req, auto& res) { next_trial(req.matches[1], res); }));
    http.Post(R"(/api/sessions/([^/]+)/trials/(-?\d+))", guarded([this](const auto& req, auto& res) {
                int seq = 0;
                try {
                  seq = std::stoi(req.matches[2]);
                } catch (const std::exception&) {
                  throw ApiError{404, "invalid trial number"};
                }
                submit(req.matches[1], seq, req, res);
              }));
    http.Get(R"(/api/sessions/([^/]+)/results)",
             guarded([this](const auto& req, auto& res) { results(req.matches[1], res); }));
    http.Get("/api/report", guarded([this](const auto& req, auto& res) { report(req, res); }));
    if (staticDir) {
      if (!http.set_mount_point("/", staticDir->string())) {
        throw std::runtime_error(fmt::format("{}: static directory not found", staticDir->string()));
      }
    } else {
      http.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(kPlaceholderPage, "text/html; charset=utf-8");
      });
    }
  }
};

StudyServer::StudyServer(SessionStore& store, StudyConfig config,
                         std::optional<std::filesystem::path> staticDir)
    : impl_(std::make_unique<Impl>(store, std::move(config))) {
  impl_->config.validate();
  impl_->routes(staticDir);
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error(fmt::format("cannot bind {}", host));
    return bound;
  }
  if (!impl_->http.bind_to_port(host, port)) {
    throw std::runtime_error(fmt::format("cannot bind {}:{}", host, port));
  }
  return port;
}

void StudyServer::run() { impl_->http.listen_after_bind(); }

void StudyServer::wait_until_ready() { impl_->http.wait_until_ready(); }

void StudyServer::stop() { impl_->http.stop(); }

}  // namespace scrolltest
