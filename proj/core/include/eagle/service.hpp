#pragma once

#include <filesystem>
#include <memory>
#include <string>

namespace eagle {

struct ServiceConfig {
  std::filesystem::path run_dir;
  std::string host = "127.0.0.1";
  int port = 8000;  // 0 picks a free port
  std::size_t threads = 4;
};

/// Read-only HTTP API over a published run directory:
///   GET /health                      -> "ok"
///   GET /slides[?cohort=]            -> slide summaries
///   GET /slides/{id}/toptiles        -> ranked tiles with coords, scores, weights
///   GET /tiles/{file}.png            -> tile image
///   GET /search?id=&k=3[&cohort=]    -> nearest slides by cosine similarity
/// Unknown ids give 404, malformed parameters 400; bodies are JSON.
class Service {
public:
  /// Loads selections and the slide store. Throws IoError when the run
  /// directory is missing.
  explicit Service(ServiceConfig cfg);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and starts serving on a background thread; returns the bound port.
  /// Calling it again while running returns the same port.
  int start();
  /// Starts if needed, then blocks until stop().
  void run();
  void stop();
  int port() const noexcept;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace eagle
