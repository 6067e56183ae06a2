#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "scrolltest/session_store.h"
#include "scrolltest/study_config.h"

namespace scrolltest {

// HTTP front end for running sessions. One session is one technique block
// (both conditions); trials are issued strictly in plan order and the server
// recomputes every submitted trace.
//
//   POST /api/sessions                  {participantId, technique, deviceLabel, seed?}
//   GET  /api/sessions/{id}/trial       next trial, or {done: true}
//   POST /api/sessions/{id}/trials/{seq} {trace: {events, clickMs?}, clientMetrics, geometry?}
//   GET  /api/sessions/{id}/results     per-condition summary
//   GET  /api/report                    aggregate tables (?technique, condition,
//                                       participantId, provenance, perTrial, format)
//   GET  /                              static UI assets
//
// Errors are JSON {error: ...}: 400 unparseable body, 404 unknown session,
// 409 out-of-order seq, 422 invalid fields or malformed trace.
class StudyServer {
 public:
  StudyServer(SessionStore& store, StudyConfig config,
              std::optional<std::filesystem::path> staticDir = std::nullopt);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  // Binds to host:port; port 0 picks a free port. Returns the bound port.
  // Throws std::runtime_error when binding fails.
  int bind(const std::string& host, int port);
  // Serves until stop() is called.
  void run();
  // Blocks until run() is accepting connections.
  void wait_until_ready();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace scrolltest
