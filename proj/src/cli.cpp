#include "strokescope/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "strokescope/applications.hpp"
#include "strokescope/corpus.hpp"
#include "strokescope/errors.hpp"
#include "strokescope/image_io.hpp"
#include "strokescope/report.hpp"
#include "strokescope/service.hpp"

namespace strokescope {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kModelsEnv = "STROKESCOPE_MODELS_DIR";

struct Common {
  std::string input;
  std::string input_format = "auto";
  std::string out_dir;
  std::string model;
  std::string gallery;
  bool fit = false;
  double offset = 2.0;
  double slope = 5.0;
};

std::string read_input(const std::string& name, std::istream& in) {
  if (name == "-") return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return read_file(name);
}

// Returns a stroke-5 document for the input, converting stroke-3 NDJSON.
std::string load_sketch_text(const Common& c, std::istream& in) {
  const std::string text = read_input(c.input, in);
  std::string fmt = c.input_format;
  if (fmt == "auto") {
    fmt = "ndjson";
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
      const json doc = json::parse(text, nullptr, false);
      if (!doc.is_discarded() && doc.is_object() && doc.contains("points")) fmt = "stroke5";
    }
  }
  if (fmt == "stroke5") {
    parse_vector_sketch(text, SketchFormat::Stroke5Json);  // validate early for a precise error
    return text;
  }
  if (fmt == "ndjson") return serialize_stroke5(parse_vector_sketch(text, SketchFormat::Stroke3Ndjson));
  throw ValidationError("input format must be auto, stroke5 or ndjson");
}

fs::path resolve_model_path(const std::string& spec) {
  if (fs::exists(spec)) return spec;
  if (const char* dir = std::getenv(kModelsEnv)) {
    const fs::path p = fs::path(dir) / (spec + ".bin");
    if (fs::exists(p)) return p;
  }
  throw IoError("model file " + spec + " not found");
}

LoadedModel load_cli_model(const Common& c) {
  const fs::path path = resolve_model_path(c.model);
  LoadedModel m{path.stem().string(), load_model(path), {}, {}};
  fs::path gallery = c.gallery;
  if (gallery.empty()) {
    const fs::path sibling = path.parent_path() / (m.id + ".gallery.json");
    if (fs::exists(sibling)) gallery = sibling;
  }
  if (!gallery.empty()) load_gallery(m, gallery);
  return m;
}

void write_artifacts(const JobResult& r, const std::string& dir) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  for (const Artifact& a : r.artifacts) write_file(fs::path(dir) / a.name, a.data);
}

void add_common(CLI::App* sub, Common& c, bool needs_model) {
  sub->add_option("sketch", c.input, "Sketch file (stroke-5 JSON or stroke-3 NDJSON), - for stdin")->required();
  sub->add_option("--input-format", c.input_format, "auto | stroke5 | ndjson")->capture_default_str();
  sub->add_option("-o,--out", c.out_dir, "Directory for artifacts");
  if (needs_model) {
    sub->add_option("--model", c.model, "Model file or id in $STROKESCOPE_MODELS_DIR")->required();
    sub->add_option("--gallery", c.gallery, "Gallery JSON for the model");
    sub->add_flag("--fit", c.fit, "Normalise the sketch onto the model's input canvas");
  }
  sub->add_option("--offset", c.offset, "Soft render offset")->capture_default_str();
  sub->add_option("--slope", c.slope, "Soft render slope")->capture_default_str();
}

json base_params(const Common& c) {
  return {{"fit", c.fit}, {"render", {{"offset", c.offset}, {"slope", c.slope}}}};
}

json reference_json(const std::string& path, const LoadedModel& model, bool fit) {
  const json doc = json::parse(read_file(path));
  if (doc.is_array()) return doc;
  VectorSketch s = parse_vector_sketch(doc.dump(), SketchFormat::Stroke5Json);
  if (fit && (s.canvas_w() != model.scorer.input_w() || s.canvas_h() != model.scorer.input_h()))
    s = normalize(s, model.scorer.input_w(), model.scorer.input_h());
  return embed(model.scorer, rasterise(s));
}

int run_engine_job(Operation op, const Common& c, json params, std::istream& in, std::ostream& out,
                   const std::string& reference = {}) {
  JobRequest req;
  req.operation = op;
  req.sketch = load_sketch_text(c, in);
  std::optional<LoadedModel> model;
  if (!c.model.empty()) {
    model.emplace(load_cli_model(c));
    if (!reference.empty()) params["reference"] = reference_json(reference, *model, c.fit);
  }
  req.params = std::move(params);
  const JobResult r = run_job(req, model ? &*model : nullptr);
  write_artifacts(r, c.out_dir);
  out << r.payload.dump(2) << '\n';
  return kExitOk;
}

struct TrainOptions {
  std::string kind = "classifier";
  bool synthetic = false;
  std::string data;
  int canvas = 48;
  int per_class = 1000;
  int instances = 600;
  int max_noise = 2;
  int epochs = 0;
  double lr = 2e-3;
  std::uint64_t seed = 7;
  bool bresenham_only = false;
  std::string output;
  std::string gallery_out;
};

int run_train(const TrainOptions& o, std::ostream& out) {
  const ShapeConfig shapes = ShapeConfig::for_canvas(o.canvas);
  if (o.kind == "classifier") {
    std::vector<LabeledSketch> corpus;
    std::vector<std::string> names;
    if (o.synthetic) {
      corpus = shapes_corpus(o.per_class, o.seed, shapes);
      for (int c = 0; c < kShapeClassCount; ++c) names.emplace_back(to_string(static_cast<ShapeClass>(c)));
    } else if (!o.data.empty()) {
      corpus = load_labeled_ndjson(o.data, o.canvas, &names);
    } else {
      throw ValidationError("train needs --synthetic or --data");
    }
    TrainConfig cfg;
    if (o.epochs > 0) cfg.epochs = o.epochs;
    cfg.learning_rate = o.lr;
    cfg.seed = o.seed;
    cfg.group_size = o.bresenham_only ? 1 : 2;
    cfg.output_path = o.output;
    TrainReport rep;
    const auto images = training_images(corpus, !o.bresenham_only);
    train_tiny_classifier(images, cfg, &rep);
    out << json{{"kind", "classifier"},
                {"classes", names},
                {"train_accuracy", rep.train_accuracy},
                {"val_accuracy", rep.val_accuracy},
                {"train_size", rep.train_size},
                {"val_size", rep.val_size},
                {"output", o.output}}
               .dump(2)
        << '\n';
    return kExitOk;
  }
  if (o.kind == "embedding") {
    if (!o.synthetic) throw ValidationError("embedding training supports --synthetic data only");
    const auto items = retrieval_corpus(o.instances, o.seed, o.max_noise, shapes);
    EmbeddingTrainConfig cfg;
    if (o.epochs > 0) cfg.epochs = o.epochs;
    cfg.learning_rate = o.lr;
    cfg.seed = o.seed;
    cfg.output_path = o.output;
    const Scorer model = train_embedding(embedding_pairs(items), cfg);
    if (!o.gallery_out.empty()) {
      json arr = json::array();
      for (const auto& it : items)
        arr.push_back({{"name", "instance-" + std::to_string(it.instance)},
                       {"embedding", embed(model, it.photo)}});
      write_file(o.gallery_out, json{{"items", arr}}.dump() + "\n");
    }
    out << json{{"kind", "embedding"}, {"pairs", items.size()}, {"dim", cfg.dim}, {"output", o.output}}.dump(2)
        << '\n';
    return kExitOk;
  }
  throw ValidationError("--kind must be classifier or embedding");
}

struct BenchOptions {
  std::string model;
  int per_class = 100;
  std::uint64_t seed = 99;
  int canvas = 48;
  std::vector<int> epsilons{5, 15};
  std::string csv;
  std::string summary;
};

int run_bench(const BenchOptions& o, std::ostream& out) {
  const Scorer model = load_model(resolve_model_path(o.model));
  const auto shapes = ShapeConfig::for_canvas(o.canvas);
  const auto sketches = shapes_corpus(o.per_class, o.seed, shapes);
  const AttackMode modes[] = {AttackMode::SlaRemoveStroke, AttackMode::PslaRemovePoints};
  const auto result = attack_benchmark(model, sketches, o.epsilons, modes);
  if (!o.csv.empty()) write_file(o.csv, benchmark_csv(result));
  const std::string summary = benchmark_summary_json(result);
  if (!o.summary.empty()) write_file(o.summary, summary + "\n");
  out << summary << '\n';
  return kExitOk;
}

} // namespace

int cli_main(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stroke attribution engine for vector sketches", "strokescope"};
  app.require_subcommand(1);

  Common render_c, attr_c, filter_c, attack_c, rel_c;
  std::string renderer = "bresenham", image_format = "png", render_out;
  int render_canvas = 0;
  auto* render = app.add_subcommand("render", "Rasterise a sketch");
  add_common(render, render_c, false);
  render->add_option("--renderer", renderer, "bresenham | soft")->capture_default_str();
  render->add_option("--format", image_format, "png | pgm")->capture_default_str();
  render->add_option("--canvas", render_canvas, "Normalise onto an N x N canvas first");
  render->add_option("--image", render_out, "Write the image to this file instead of the artifact directory");

  std::string attr_mode = "sla", attr_target, attr_reference, attr_corr = "spearman";
  bool attr_abs = false, attr_no_weights = false;
  auto* attribute = app.add_subcommand("attribute", "Stroke (SLA) or point (P-SLA) attribution");
  add_common(attribute, attr_c, true);
  attribute->add_option("--mode", attr_mode, "sla | psla")->capture_default_str();
  attribute->add_option("--target", attr_target, "predicted | class:N | loss:N | sum | gallery:N | cosine");
  attribute->add_option("--reference", attr_reference, "Reference embedding (JSON array) or stroke-5 sketch");
  attribute->add_flag("--absolute", attr_abs, "Sum absolute pixel gradients");
  attribute->add_flag("--no-weight-maps", attr_no_weights, "Disable weight maps (every stroke sees all pixels)");
  attribute->add_option("--corr", attr_corr, "spearman | kendall")->capture_default_str();

  std::string filter_gran = "stroke", filter_target, filter_reference;
  double filter_delta = -1.0, filter_temp = 1.0;
  bool filter_stochastic = false;
  std::uint64_t filter_seed = 0;
  auto* filter = app.add_subcommand("filter", "Remove weakly attributed strokes or points");
  add_common(filter, filter_c, true);
  filter->add_option("--granularity", filter_gran, "stroke | point")->capture_default_str();
  filter->add_option("--delta", filter_delta, "Keep slack (default 0.3 strokes, 0.1 points)");
  filter->add_option("--target", filter_target, "gallery:N | cosine");
  filter->add_option("--reference", filter_reference, "Reference embedding (JSON array) or stroke-5 sketch");
  filter->add_flag("--stochastic", filter_stochastic, "Gumbel-softmax sampling instead of the hard threshold");
  filter->add_option("--temperature", filter_temp, "Gumbel-softmax temperature")->capture_default_str();
  filter->add_option("--seed", filter_seed, "Seed for stochastic filtering")->capture_default_str();

  std::string attack_mode = "sla";
  int attack_eps = 5, attack_true = -1;
  bool attack_fast = false;
  auto* attack = app.add_subcommand("attack", "Untargeted stroke/point removal attack");
  add_common(attack, attack_c, true);
  attack->add_option("--mode", attack_mode, "sla | psla")->capture_default_str();
  attack->add_option("--epsilon", attack_eps, "Point budget")->capture_default_str();
  attack->add_option("--true-class", attack_true, "Ground-truth class (default: clean prediction)");
  attack->add_flag("--fast", attack_fast, "P-SLA: rank points by gradient instead of leave-one-out");

  std::string rel_gran = "stroke", rel_corr = "spearman";
  int rel_true = -1;
  auto* reliability = app.add_subcommand("reliability", "Retrieval with attribution/drawing-order correlation");
  add_common(reliability, rel_c, true);
  reliability->add_option("--granularity", rel_gran, "stroke | point")->capture_default_str();
  reliability->add_option("--corr", rel_corr, "spearman | kendall")->capture_default_str();
  reliability->add_option("--true-index", rel_true, "Gallery index of the true match");

  TrainOptions train_o;
  auto* train = app.add_subcommand("train", "Train a toy classifier or embedding scorer");
  train->add_option("--kind", train_o.kind, "classifier | embedding")->capture_default_str();
  train->add_flag("--synthetic", train_o.synthetic, "Use the built-in synthetic shapes corpus");
  train->add_option("--data", train_o.data, "Labelled stroke-3 NDJSON corpus");
  train->add_option("--canvas", train_o.canvas, "Input canvas size")->capture_default_str();
  train->add_option("--per-class", train_o.per_class, "Synthetic sketches per class")->capture_default_str();
  train->add_option("--instances", train_o.instances, "Synthetic retrieval instances")->capture_default_str();
  train->add_option("--max-noise", train_o.max_noise, "Max noise strokes per retrieval sketch")->capture_default_str();
  train->add_option("--epochs", train_o.epochs, "Epochs (default per kind)");
  train->add_option("--lr", train_o.lr, "Adam learning rate")->capture_default_str();
  train->add_option("--seed", train_o.seed, "Seed")->capture_default_str();
  train->add_flag("--bresenham-only", train_o.bresenham_only, "Do not add soft renders to the training set");
  train->add_option("-o,--output", train_o.output, "Model file")->required();
  train->add_option("--gallery-out", train_o.gallery_out, "Embedding: write the training gallery here");

  BenchOptions bench_o;
  auto* bench = app.add_subcommand("benchmark", "Attack benchmark on the synthetic shapes corpus");
  bench->add_option("--model", bench_o.model, "Classifier model")->required();
  bench->add_option("--per-class", bench_o.per_class, "Sketches per class")->capture_default_str();
  bench->add_option("--seed", bench_o.seed, "Corpus seed")->capture_default_str();
  bench->add_option("--canvas", bench_o.canvas, "Canvas size")->capture_default_str();
  bench->add_option("--epsilon", bench_o.epsilons, "Budgets")->capture_default_str();
  bench->add_option("--csv", bench_o.csv, "Per-sketch CSV output");
  bench->add_option("--summary", bench_o.summary, "JSON summary output");

  std::string host = "127.0.0.1", models_dir;
  int port = 8080, timeout_ms = 30000;
  auto* serve = app.add_subcommand("serve", "HTTP JSON service");
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port")->capture_default_str();
  serve->add_option("--models-dir", models_dir, "Model registry (default $STROKESCOPE_MODELS_DIR)");
  serve->add_option("--timeout-ms", timeout_ms, "Per-request timeout")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (render->parsed()) {
      if (image_format != "png" && image_format != "pgm") throw ValidationError("--format must be png or pgm");
      json params = base_params(render_c);
      params["renderer"] = renderer;
      Common c = render_c;
      JobRequest req;
      req.operation = Operation::Render;
      req.sketch = load_sketch_text(c, in);
      if (render_canvas > 0)
        req.sketch = serialize_stroke5(
            normalize(parse_vector_sketch(req.sketch, SketchFormat::Stroke5Json), render_canvas, render_canvas));
      req.params = params;
      JobResult r = run_job(req, nullptr);
      if (image_format == "pgm") {
        const VectorSketch s = parse_vector_sketch(req.sketch, SketchFormat::Stroke5Json);
        RenderParams rp;
        rp.offset = c.offset;
        rp.slope = c.slope;
        r.artifacts = {{"render.pgm", "image/x-portable-graymap",
                        encode_pgm(renderer == "soft" ? soft_render(s, rp) : rasterise(s))}};
      }
      if (!render_out.empty()) write_file(render_out, r.artifacts.front().data);
      write_artifacts(r, c.out_dir);
      out << r.payload.dump(2) << '\n';
      return kExitOk;
    }
    if (attribute->parsed()) {
      json p = base_params(attr_c);
      p["mode"] = attr_mode;
      if (!attr_target.empty()) p["target"] = attr_target;
      p["absolute"] = attr_abs;
      p["weight_maps"] = !attr_no_weights;
      p["corr"] = attr_corr;
      return run_engine_job(Operation::Attribute, attr_c, p, in, out, attr_reference);
    }
    if (filter->parsed()) {
      json p = base_params(filter_c);
      p["granularity"] = filter_gran;
      if (filter_delta >= 0.0) p["delta"] = filter_delta;
      if (!filter_target.empty()) p["target"] = filter_target;
      p["stochastic"] = filter_stochastic;
      p["temperature"] = filter_temp;
      p["seed"] = filter_seed;
      return run_engine_job(Operation::Filter, filter_c, p, in, out, filter_reference);
    }
    if (attack->parsed()) {
      json p = base_params(attack_c);
      p["mode"] = attack_mode;
      p["epsilon"] = attack_eps;
      if (attack_true >= 0) p["true_class"] = attack_true;
      p["fast"] = attack_fast;
      return run_engine_job(Operation::Attack, attack_c, p, in, out);
    }
    if (reliability->parsed()) {
      json p = base_params(rel_c);
      p["granularity"] = rel_gran;
      p["corr"] = rel_corr;
      if (rel_true >= 0) p["true_index"] = rel_true;
      return run_engine_job(Operation::Reliability, rel_c, p, in, out);
    }
    if (train->parsed()) return run_train(train_o, out);
    if (bench->parsed()) return run_bench(bench_o, out);
    if (serve->parsed()) {
      if (models_dir.empty())
        if (const char* env = std::getenv(kModelsEnv)) models_dir = env;
      ModelRegistry registry = models_dir.empty() ? ModelRegistry{} : ModelRegistry::from_directory(models_dir);
      ServiceConfig cfg;
      cfg.timeout = std::chrono::milliseconds(timeout_ms);
      Service service(std::move(registry), cfg);
      err << "listening on " << host << ':' << port << '\n';
      if (!service.listen(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error [" << e.code() << "]: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cin, std::cout, std::cerr);
}

} // namespace strokescope
