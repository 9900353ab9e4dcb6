#include "strokescope/service.hpp"

#include <algorithm>
#include <charconv>
#include <future>
#include <thread>

#include <httplib.h>

#include "strokescope/applications.hpp"
#include "strokescope/attribution.hpp"
#include "strokescope/errors.hpp"
#include "strokescope/report.hpp"

namespace strokescope {

using nlohmann::json;

namespace {

json parse_body(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }
}

template <typename T>
T param(const json& params, const char* key, T fallback) {
  auto it = params.find(key);
  if (it == params.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("parameter \"") + key + "\" has the wrong type");
  }
}

RenderParams render_params(const json& params) {
  RenderParams rp;
  if (auto it = params.find("render"); it != params.end()) {
    if (!it->is_object()) throw ValidationError("\"render\" must be an object");
    rp.offset = param(*it, "offset", rp.offset);
    rp.slope = param(*it, "slope", rp.slope);
    rp.mask_offset = param(*it, "mask_offset", rp.mask_offset);
  }
  rp.validate();
  return rp;
}

const LoadedModel& need_model(const LoadedModel* model, Operation op) {
  if (!model) throw ValidationError(std::string(to_string(op)) + " needs a model");
  return *model;
}

int parse_index(std::string_view text, std::string_view what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || v < 0)
    throw ValidationError("bad " + std::string(what) + " index \"" + std::string(text) + "\"");
  return v;
}

std::vector<double> gallery_embedding(const LoadedModel& model, int index) {
  if (index >= static_cast<int>(model.gallery.size()))
    throw ValidationError("gallery index " + std::to_string(index) + " out of range (gallery has " +
                          std::to_string(model.gallery.size()) + " items)");
  return model.gallery[static_cast<std::size_t>(index)];
}

// "predicted" | "class:N" | "loss:N" | "sum" | "cosine" (with params.reference) | "gallery:N"
ScoreTarget resolve_target(const json& params, const LoadedModel& model) {
  const bool is_embedding = model.scorer.kind() == ScorerKind::Embedding;
  std::string spec = param<std::string>(params, "target", "");
  if (spec.empty()) spec = is_embedding ? (params.contains("reference") ? "cosine" : "sum") : "predicted";
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (head == "predicted") return ScoreTarget::predicted_logit();
  if (head == "class") return ScoreTarget::class_logit(parse_index(arg, "class"));
  if (head == "loss") return ScoreTarget::class_loss(parse_index(arg, "class"));
  if (head == "sum") return ScoreTarget::embedding_sum();
  if (head == "gallery") return ScoreTarget::cosine(gallery_embedding(model, parse_index(arg, "gallery")));
  if (head == "cosine") {
    auto ref = param<std::vector<double>>(params, "reference", {});
    if (ref.empty()) throw ValidationError("cosine target needs a \"reference\" embedding");
    return ScoreTarget::cosine(std::move(ref));
  }
  throw ValidationError("unknown target \"" + spec + "\"");
}

VectorSketch fit_to_model(VectorSketch sketch, const json& params, const Scorer& scorer) {
  if (param(params, "fit", false) &&
      (sketch.canvas_w() != scorer.input_w() || sketch.canvas_h() != scorer.input_h()))
    return normalize(sketch, scorer.input_w(), scorer.input_h());
  return sketch;
}

Artifact json_artifact(std::string name, const json& j) {
  const std::string text = j.dump(2) + "\n";
  return {std::move(name), "application/json", Bytes(text.begin(), text.end())};
}

Artifact text_artifact(std::string name, std::string media_type, const std::string& text) {
  return {std::move(name), std::move(media_type), Bytes(text.begin(), text.end())};
}

JobResult run_render(const VectorSketch& sketch, const json& params) {
  const std::string renderer = param<std::string>(params, "renderer", "bresenham");
  RasterImage image;
  if (renderer == "bresenham")
    image = rasterise(sketch);
  else if (renderer == "soft")
    image = soft_render(sketch, render_params(params));
  else
    throw ValidationError("renderer must be \"bresenham\" or \"soft\"");
  JobResult r;
  r.payload = {{"renderer", renderer}, {"width", image.w()}, {"height", image.h()}, {"ink", image.sum()}};
  r.artifacts.push_back({"render.png", "image/png", encode_png_gray(image)});
  return r;
}

JobResult run_attribute(const VectorSketch& raw, const json& params, const LoadedModel& model) {
  const VectorSketch sketch = fit_to_model(raw, params, model.scorer);
  const std::string mode = param<std::string>(params, "mode", "sla");
  const ScoreTarget target = resolve_target(params, model);
  AttributionResult result;
  std::vector<double> stroke_scores;
  if (mode == "sla") {
    SlaOptions opt;
    opt.absolute = param(params, "absolute", false);
    opt.use_weight_maps = param(params, "weight_maps", true);
    result = sla(model.scorer, target, sketch, opt);
    stroke_scores = result.scores;
  } else if (mode == "psla") {
    result = psla(model.scorer, target, sketch, render_params(params));
    stroke_scores = stroke_order_from_points(result, sketch);
  } else {
    throw ValidationError("attribution mode must be \"sla\" or \"psla\"");
  }
  const auto measure = param<std::string>(params, "corr", "spearman") == "kendall" ? CorrMeasure::Kendall
                                                                                    : CorrMeasure::Spearman;
  const CorrReport corr = temporal_correlation(rank_descending(stroke_scores), sketch, measure);
  JobResult r;
  r.payload = attribution_json(result, sketch, corr);
  r.payload["mode"] = mode;
  r.artifacts.push_back(json_artifact("scores.json", r.payload));
  r.artifacts.push_back(text_artifact("overlay.svg", "image/svg+xml", overlay_svg(sketch, result)));
  r.artifacts.push_back({"heatmap.png", "image/png", heatmap_png(result.pixel_grad)});
  return r;
}

JobResult run_filter(const VectorSketch& raw, const json& params, const LoadedModel& model) {
  const VectorSketch sketch = fit_to_model(raw, params, model.scorer);
  const std::string gran = param<std::string>(params, "granularity", "stroke");
  FilterConfig cfg;
  if (gran == "stroke")
    cfg = FilterConfig::strokes();
  else if (gran == "point")
    cfg = FilterConfig::points();
  else
    throw ValidationError("granularity must be \"stroke\" or \"point\"");
  cfg.delta = param(params, "delta", cfg.delta);
  cfg.stochastic = param(params, "stochastic", false);
  cfg.gumbel_temperature = param(params, "temperature", cfg.gumbel_temperature);
  cfg.seed = param<std::uint64_t>(params, "seed", 0);
  cfg.render = render_params(params);
  const ScoreTarget target = resolve_target(params, model);
  if (target.mode != ScoreTarget::Mode::CosineSim)
    throw ValidationError("filtering needs a cosine target (\"gallery:N\" or a reference embedding)");
  const FilterReport rep = cfg.granularity == Granularity::Stroke
                               ? filter_noisy_strokes(sketch, model.scorer, target.reference, cfg)
                               : filter_noisy_points(sketch, model.scorer, target.reference, cfg);
  JobResult r;
  r.payload = filter_json(rep);
  r.payload["granularity"] = gran;
  r.payload["delta"] = cfg.delta;
  r.artifacts.push_back(text_artifact("filtered.json", "application/json", serialize_stroke5(rep.filtered) + "\n"));
  return r;
}

JobResult run_attack_job(const VectorSketch& raw, const json& params, const LoadedModel& model) {
  const VectorSketch sketch = fit_to_model(raw, params, model.scorer);
  AttackConfig cfg;
  const std::string mode = param<std::string>(params, "mode", "sla");
  if (mode == "sla")
    cfg.mode = AttackMode::SlaRemoveStroke;
  else if (mode == "psla")
    cfg.mode = AttackMode::PslaRemovePoints;
  else
    throw ValidationError("attack mode must be \"sla\" or \"psla\"");
  cfg.epsilon = param(params, "epsilon", cfg.epsilon);
  if (params.contains("true_class") && !params["true_class"].is_null())
    cfg.true_class = param(params, "true_class", 0);
  cfg.gradient_fast_path = param(params, "fast", false);
  cfg.render = render_params(params);
  const AttackOutcome out = run_attack(model.scorer, sketch, cfg);
  JobResult r;
  r.payload = attack_json(out, cfg.mode, cfg.epsilon);
  r.artifacts.push_back(text_artifact("adversarial.json", "application/json", serialize_stroke5(out.adversarial) + "\n"));
  r.artifacts.push_back({"adversarial.png", "image/png", encode_png_gray(render_for(cfg.mode, out.adversarial, cfg.render))});
  return r;
}

JobResult run_reliability(const VectorSketch& raw, const json& params, const LoadedModel& model) {
  const VectorSketch sketch = fit_to_model(raw, params, model.scorer);
  std::vector<std::vector<double>> gallery = model.gallery;
  if (params.contains("gallery")) gallery = param<std::vector<std::vector<double>>>(params, "gallery", {});
  ReliabilityConfig cfg;
  cfg.granularity = param<std::string>(params, "granularity", "stroke") == "point" ? Granularity::Point
                                                                                   : Granularity::Stroke;
  cfg.measure = param<std::string>(params, "corr", "spearman") == "kendall" ? CorrMeasure::Kendall
                                                                            : CorrMeasure::Spearman;
  cfg.render = render_params(params);
  std::optional<std::size_t> true_index;
  if (params.contains("true_index") && !params["true_index"].is_null())
    true_index = param<std::size_t>(params, "true_index", 0);
  const ReliabilityReport rep = retrieval_reliability(sketch, model.scorer, gallery, true_index, cfg);
  JobResult r;
  r.payload = reliability_json(rep);
  if (!params.contains("gallery") && rep.retrieved < model.gallery_names.size())
    r.payload["retrieved_name"] = model.gallery_names[rep.retrieved];
  return r;
}

HttpReply reply(int status, const json& body) { return {status, body.dump()}; }

HttpReply execute(const ModelRegistry& registry, const Limits& limits, Operation op, std::string_view body) {
  if (body.size() > limits.max_body_bytes)
    return reply(413, error_response("payload_too_large", "request body exceeds " +
                                                              std::to_string(limits.max_body_bytes) + " bytes"));
  JobRequest req;
  try {
    req = parse_job_request(op, body);
  } catch (const Error& e) {
    return reply(400, error_response("bad_request", e.what()));
  }
  const LoadedModel* model = nullptr;
  if (!req.model.empty()) {
    model = registry.find(req.model);
    if (!model) return reply(404, error_response("unknown_model", "no model named \"" + req.model + "\""));
  }
  try {
    const VectorSketch sketch = parse_vector_sketch(req.sketch, SketchFormat::Stroke5Json);
    if (sketch.size() > limits.max_points)
      return reply(413, error_response("too_many_points", "sketch has " + std::to_string(sketch.size()) +
                                                             " points, limit is " + std::to_string(limits.max_points)));
    return reply(200, ok_response(run_job(req, model)));
  } catch (const Error& e) {
    return reply(http_status_for(e), error_response(e.code(), e.what()));
  } catch (const std::exception& e) {
    return reply(500, error_response("internal", e.what()));
  }
}

} // namespace

void load_gallery(LoadedModel& model, const std::filesystem::path& path) {
  const json doc = parse_body(read_file(path));
  if (!doc.is_object() || !doc.contains("items") || !doc["items"].is_array())
    throw ValidationError("gallery file needs an \"items\" array");
  model.gallery.clear();
  model.gallery_names.clear();
  for (const json& item : doc["items"]) {
    std::vector<double> e;
    if (item.contains("embedding")) {
      e = item["embedding"].get<std::vector<double>>();
      if (static_cast<int>(e.size()) != model.scorer.output_dim())
        throw DimensionError("gallery embedding size does not match model output");
    } else if (item.contains("sketch")) {
      VectorSketch s = parse_vector_sketch(item["sketch"].dump(), SketchFormat::Stroke5Json);
      if (s.canvas_w() != model.scorer.input_w() || s.canvas_h() != model.scorer.input_h())
        s = normalize(s, model.scorer.input_w(), model.scorer.input_h());
      e = embed(model.scorer, rasterise(s));
    } else {
      throw ValidationError("gallery item needs \"embedding\" or \"sketch\"");
    }
    model.gallery_names.push_back(item.value("name", std::to_string(model.gallery.size())));
    model.gallery.push_back(std::move(e));
  }
}

ModelRegistry ModelRegistry::from_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("model directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".bin") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  ModelRegistry reg;
  for (const auto& f : files) {
    LoadedModel m{f.stem().string(), load_model(f), {}, {}};
    const auto gallery = dir / (m.id + ".gallery.json");
    if (std::filesystem::exists(gallery)) load_gallery(m, gallery);
    reg.add(std::move(m));
  }
  return reg;
}

void ModelRegistry::add(LoadedModel model) {
  std::string id = model.id;
  models_[std::move(id)] = std::make_shared<const LoadedModel>(std::move(model));
}

const LoadedModel* ModelRegistry::find(std::string_view id) const {
  auto it = models_.find(id);
  return it == models_.end() ? nullptr : it->second.get();
}

json ModelRegistry::describe() const {
  json list = json::array();
  for (const auto& [id, m] : models_)
    list.push_back({{"id", id},
                    {"kind", to_string(m->scorer.kind())},
                    {"input", {m->scorer.input_w(), m->scorer.input_h()}},
                    {"output_dim", m->scorer.output_dim()},
                    {"gallery", m->gallery_names}});
  return {{"models", list}};
}

std::optional<Operation> operation_from_string(std::string_view name) {
  if (name == "render") return Operation::Render;
  if (name == "attribute") return Operation::Attribute;
  if (name == "filter") return Operation::Filter;
  if (name == "attack") return Operation::Attack;
  if (name == "reliability") return Operation::Reliability;
  return std::nullopt;
}

std::string_view to_string(Operation op) noexcept {
  switch (op) {
  case Operation::Render: return "render";
  case Operation::Attribute: return "attribute";
  case Operation::Filter: return "filter";
  case Operation::Attack: return "attack";
  case Operation::Reliability: return "reliability";
  }
  return "?";
}

JobRequest parse_job_request(Operation op, std::string_view body) {
  const json doc = parse_body(body);
  if (!doc.is_object()) throw ValidationError("request body must be a JSON object");
  JobRequest req;
  req.operation = op;
  auto sk = doc.find("sketch");
  if (sk == doc.end()) throw ValidationError("missing \"sketch\"");
  req.sketch = sk->is_string() ? sk->get<std::string>() : sk->dump();
  if (auto m = doc.find("model"); m != doc.end() && !m->is_null()) {
    if (!m->is_string()) throw ValidationError("\"model\" must be a string");
    req.model = m->get<std::string>();
  }
  if (auto p = doc.find("params"); p != doc.end() && !p->is_null()) {
    if (!p->is_object()) throw ValidationError("\"params\" must be an object");
    req.params = *p;
  }
  return req;
}

JobResult run_job(const JobRequest& request, const LoadedModel* model) {
  const VectorSketch sketch = parse_vector_sketch(request.sketch, SketchFormat::Stroke5Json);
  const json& p = request.params;
  switch (request.operation) {
  case Operation::Render: return run_render(sketch, p);
  case Operation::Attribute: return run_attribute(sketch, p, need_model(model, request.operation));
  case Operation::Filter: return run_filter(sketch, p, need_model(model, request.operation));
  case Operation::Attack: return run_attack_job(sketch, p, need_model(model, request.operation));
  case Operation::Reliability: return run_reliability(sketch, p, need_model(model, request.operation));
  }
  throw ValidationError("unknown operation");
}

json ok_response(const JobResult& result) {
  json arts = json::array();
  for (const Artifact& a : result.artifacts)
    arts.push_back({{"name", a.name}, {"media_type", a.media_type}, {"base64", base64_encode(a.data)}});
  return {{"status", "ok"}, {"payload", result.payload}, {"artifacts", arts}};
}

json error_response(std::string_view code, std::string_view message) {
  return {{"status", "error"}, {"error", {{"code", code}, {"message", message}}}};
}

int http_status_for(const std::exception& e) noexcept {
  if (dynamic_cast<const IoError*>(&e)) return 500;
  if (dynamic_cast<const Error*>(&e)) return 400;
  return 500;
}

struct Service::Http {
  httplib::Server server;
};

Service::Service(ModelRegistry registry, ServiceConfig config)
    : registry_(std::make_shared<const ModelRegistry>(std::move(registry))), config_(config),
      http_(std::make_unique<Http>()) {
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpReply r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  http_->server.Get(".*", route);
  http_->server.Post(".*", route);
  http_->server.set_payload_max_length(config_.limits.max_body_bytes * 4 + 4096);
}

Service::~Service() { stop(); }

HttpReply Service::handle(std::string_view method, std::string_view path, std::string_view body) const {
  if (path == "/health") {
    if (method != "GET") return reply(405, error_response("method_not_allowed", "use GET"));
    return reply(200, {{"status", "ok"}});
  }
  if (path == "/v1/models") {
    if (method != "GET") return reply(405, error_response("method_not_allowed", "use GET"));
    return reply(200, {{"status", "ok"}, {"payload", registry_->describe()}, {"artifacts", json::array()}});
  }
  constexpr std::string_view prefix = "/v1/";
  if (path.starts_with(prefix)) {
    if (const auto op = operation_from_string(path.substr(prefix.size()))) {
      if (method != "POST") return reply(405, error_response("method_not_allowed", "use POST"));
      return run_operation(*op, body);
    }
  }
  return reply(404, error_response("not_found", "no route for " + std::string(path)));
}

HttpReply Service::run_operation(Operation op, std::string_view body) const {
  // The job owns copies of everything it touches so that a timed-out job can
  // finish in the background without dangling references.
  auto task = std::make_shared<std::packaged_task<HttpReply()>>(
      [registry = registry_, limits = config_.limits, op, text = std::string(body)] {
        return execute(*registry, limits, op, text);
      });
  auto result = task->get_future();
  std::thread([task] { (*task)(); }).detach();
  if (result.wait_for(config_.timeout) != std::future_status::ready)
    return reply(504, error_response("timeout", "job exceeded " + std::to_string(config_.timeout.count()) + " ms"));
  return result.get();
}

bool Service::listen(const std::string& host, int port) { return http_->server.listen(host, port); }

int Service::bind_any_port(const std::string& host) { return http_->server.bind_to_any_port(host); }

bool Service::listen_after_bind() { return http_->server.listen_after_bind(); }

void Service::stop() {
  if (http_) http_->server.stop();
}

} // namespace strokescope
