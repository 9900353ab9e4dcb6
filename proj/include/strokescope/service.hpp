#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "strokescope/image_io.hpp"
#include "strokescope/scorer.hpp"
#include "strokescope/sketch.hpp"

namespace strokescope {

// A scorer plus the optional retrieval gallery that ships with it.
struct LoadedModel {
  std::string id;
  Scorer scorer;
  std::vector<std::string> gallery_names;
  std::vector<std::vector<double>> gallery;
};

// Gallery file: {"items":[{"name":..., "embedding":[...]} | {"name":..., "sketch":{stroke-5}}]}.
// Sketch items are embedded with the model on load.
void load_gallery(LoadedModel& model, const std::filesystem::path& path);

// Models are immutable once registered and shared read-only between jobs.
class ModelRegistry {
public:
  // Registers every <id>.bin in `dir`, with <id>.gallery.json when present.
  static ModelRegistry from_directory(const std::filesystem::path& dir);

  void add(LoadedModel model);
  const LoadedModel* find(std::string_view id) const;
  nlohmann::json describe() const;
  bool empty() const noexcept { return models_.empty(); }

private:
  std::map<std::string, std::shared_ptr<const LoadedModel>, std::less<>> models_;
};

enum class Operation { Render, Attribute, Filter, Attack, Reliability };

std::optional<Operation> operation_from_string(std::string_view name);
std::string_view to_string(Operation op) noexcept;

struct JobRequest {
  Operation operation = Operation::Render;
  std::string sketch;  // stroke-5 JSON document
  std::string model;   // registry id
  nlohmann::json params = nlohmann::json::object();
};

// Parses {"sketch": {...}, "model": "...", "params": {...}}. Malformed JSON
// raises ParseError; a missing or mistyped field raises ValidationError.
JobRequest parse_job_request(Operation op, std::string_view body);

struct Artifact {
  std::string name;
  std::string media_type;
  Bytes data;
};

struct JobResult {
  nlohmann::json payload;
  std::vector<Artifact> artifacts;
};

// Runs one job. `model` may be null for render. Throws strokescope::Error
// subclasses on failure.
JobResult run_job(const JobRequest& request, const LoadedModel* model);

// Sketch limits enforced before any engine work.
struct Limits {
  std::size_t max_body_bytes = std::size_t{1} << 20;
  std::size_t max_points = 5000;
};

nlohmann::json ok_response(const JobResult& result);
nlohmann::json error_response(std::string_view code, std::string_view message);

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

struct ServiceConfig {
  Limits limits;
  std::chrono::milliseconds timeout{30000};
};

// Transport-independent request handling plus an HTTP front end.
class Service {
public:
  Service(ModelRegistry registry, ServiceConfig config = {});
  ~Service();

  HttpReply handle(std::string_view method, std::string_view path, std::string_view body) const;

  // Blocks until stop() is called. Returns false when the address cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds to a free port and returns it; serving starts with listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();

private:
  HttpReply run_operation(Operation op, std::string_view body) const;

  std::shared_ptr<const ModelRegistry> registry_;
  ServiceConfig config_;
  struct Http;
  std::unique_ptr<Http> http_;
};

// Maps an engine error to its HTTP status.
int http_status_for(const std::exception& e) noexcept;

} // namespace strokescope
