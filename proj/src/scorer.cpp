#include "strokescope/scorer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <random>

#include "convnet.hpp"
#include "strokescope/errors.hpp"
#include "strokescope/image_io.hpp"

namespace strokescope {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'C', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<std::pair<std::string, std::vector<int>>> expected_layout(ScorerKind kind, int w, int h, int out) {
  if (kind == ScorerKind::Linear) return {{"linear.w", {out, h, w}}, {"linear.b", {out}}};
  const auto s = detail::conv_shape(w, h, out);
  return {{"conv1.w", {s.c1, 1, 3, 3}}, {"conv1.b", {s.c1}},          {"conv2.w", {s.c2, s.c1, 3, 3}},
          {"conv2.b", {s.c2}},          {"fc1.w", {s.hidden, s.features()}}, {"fc1.b", {s.hidden}},
          {"fc2.w", {s.out, s.hidden}}, {"fc2.b", {s.out}}};
}

void check_input(const Scorer& s, const RasterImage& image) {
  if (image.w() != s.input_w() || image.h() != s.input_h())
    throw DimensionError("image is " + std::to_string(image.w()) + "x" + std::to_string(image.h()) +
                         ", scorer expects " + std::to_string(s.input_w()) + "x" + std::to_string(s.input_h()));
}

// y = z / |z| and its vector-Jacobian product.
void l2_normalize(std::vector<double>& z, double& norm) {
  norm = std::sqrt(std::inner_product(z.begin(), z.end(), z.begin(), 0.0));
  if (norm > 0.0)
    for (double& v : z) v /= norm;
}

std::vector<double> l2_normalize_backward(std::span<const double> y, double norm, std::span<const double> dy) {
  std::vector<double> dz(y.size(), 0.0);
  if (norm == 0.0) return dz;
  const double proj = std::inner_product(y.begin(), y.end(), dy.begin(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) dz[i] = (dy[i] - y[i] * proj) / norm;
  return dz;
}

struct ForwardState {
  detail::ConvActivations acts;
  std::vector<double> out;  // final output (normalised for Embedding)
  double norm = 1.0;
};

ForwardState run_forward(const Scorer& s, const RasterImage& image) {
  check_input(s, image);
  s.check_finite();
  ForwardState st;
  const auto& t = s.tensors();
  if (s.kind() == ScorerKind::Linear) {
    const std::size_t n = image.size();
    st.out.assign(s.output_dim(), 0.0);
    for (int c = 0; c < s.output_dim(); ++c) {
      const double* wc = t[0].data.data() + c * n;
      double acc = t[1].data[c];
      for (std::size_t i = 0; i < n; ++i) acc += wc[i] * image[i];
      st.out[c] = acc;
    }
    return st;
  }
  const auto shape = detail::conv_shape(s.input_w(), s.input_h(), s.output_dim());
  detail::conv_forward(shape, t, image.values(), st.acts);
  st.out = st.acts.out;
  if (s.kind() == ScorerKind::Embedding) l2_normalize(st.out, st.norm);
  return st;
}

void run_backward(const Scorer& s, const RasterImage& image, const ForwardState& st, std::span<const double> upstream,
                  std::vector<std::vector<double>>* param_grads, Grid* d_input) {
  if (upstream.size() != static_cast<std::size_t>(s.output_dim()))
    throw DimensionError("upstream size does not match scorer output");
  const auto& t = s.tensors();
  if (s.kind() == ScorerKind::Linear) {
    const std::size_t n = image.size();
    for (int c = 0; c < s.output_dim(); ++c) {
      const double g = upstream[c];
      const double* wc = t[0].data.data() + c * n;
      if (d_input)
        for (std::size_t i = 0; i < n; ++i) (*d_input)[i] += g * wc[i];
      if (param_grads) {
        double* gw = (*param_grads)[0].data() + c * n;
        for (std::size_t i = 0; i < n; ++i) gw[i] += g * image[i];
        (*param_grads)[1][c] += g;
      }
    }
    return;
  }
  std::vector<double> d_raw(upstream.begin(), upstream.end());
  if (s.kind() == ScorerKind::Embedding) d_raw = l2_normalize_backward(st.out, st.norm, upstream);
  const auto shape = detail::conv_shape(s.input_w(), s.input_h(), s.output_dim());
  std::vector<double> d_in;
  detail::conv_backward(shape, t, image.values(), st.acts, d_raw, param_grads, d_input ? &d_in : nullptr);
  if (d_input)
    for (std::size_t i = 0; i < d_in.size(); ++i) (*d_input)[i] += d_in[i];
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Scalar value and d value / d output for a target.
double target_value(const Scorer& s, std::span<const double> out, const ScoreTarget& target,
                    std::vector<double>& d_out) {
  d_out.assign(out.size(), 0.0);
  auto resolve_class = [&] {
    const int c = target.cls < 0 ? argmax(out) : target.cls;
    if (c >= static_cast<int>(out.size()))
      throw ScorerError("class index " + std::to_string(c) + " out of range for " + std::to_string(out.size()) +
                        " outputs");
    return c;
  };
  switch (target.mode) {
  case ScoreTarget::Mode::ClassLogit: {
    const int c = resolve_class();
    d_out[c] = 1.0;
    return out[c];
  }
  case ScoreTarget::Mode::ClassLoss: {
    const int c = resolve_class();
    const double mx = *std::max_element(out.begin(), out.end());
    double z = 0.0;
    for (double v : out) z += std::exp(v - mx);
    for (std::size_t i = 0; i < out.size(); ++i) d_out[i] = std::exp(out[i] - mx) / z;
    d_out[c] -= 1.0;
    return mx + std::log(z) - out[c];
  }
  case ScoreTarget::Mode::CosineSim: {
    if (target.reference.size() != out.size())
      throw ScorerError("reference embedding has " + std::to_string(target.reference.size()) +
                        " entries, scorer outputs " + std::to_string(out.size()));
    const auto& r = target.reference;
    const double no = std::sqrt(std::inner_product(out.begin(), out.end(), out.begin(), 0.0));
    const double nr = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
    if (no == 0.0 || nr == 0.0) return 0.0;
    const double c = std::inner_product(out.begin(), out.end(), r.begin(), 0.0) / (no * nr);
    for (std::size_t i = 0; i < out.size(); ++i) d_out[i] = r[i] / (no * nr) - c * out[i] / (no * no);
    return c;
  }
  case ScoreTarget::Mode::EmbeddingSum:
    std::fill(d_out.begin(), d_out.end(), 1.0);
    return std::accumulate(out.begin(), out.end(), 0.0);
  }
  (void)s;
  return 0.0;
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) b.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b_[pos_ + k]) << (8 * k);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw IoError("model file truncated");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

// Adam with bias correction.
class Adam {
public:
  Adam(const std::vector<Tensor>& params, double lr) : lr_(lr) {
    for (const auto& t : params) {
      m_.emplace_back(t.data.size(), 0.0);
      v_.emplace_back(t.data.size(), 0.0);
    }
  }
  void step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads, double scale) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_), c2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k].data;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = grads[k][i] * scale;
        m_[k][i] = kBeta1 * m_[k][i] + (1.0 - kBeta1) * g;
        v_[k][i] = kBeta2 * v_[k][i] + (1.0 - kBeta2) * g * g;
        p[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + 1e-8);
      }
    }
  }

private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999;
  double lr_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

std::vector<std::vector<double>> zero_grads(const Scorer& s) {
  std::vector<std::vector<double>> g;
  for (const auto& t : s.tensors()) g.emplace_back(t.data.size(), 0.0);
  return g;
}

void clear(std::vector<std::vector<double>>& g) {
  for (auto& v : g) std::fill(v.begin(), v.end(), 0.0);
}

double accuracy(const Scorer& s, std::span<const LabeledImage> corpus, std::span<const std::size_t> idx) {
  if (idx.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i : idx) ok += predict_class(s, corpus[i].image) == corpus[i].label;
  return static_cast<double>(ok) / static_cast<double>(idx.size());
}

} // namespace

std::string_view to_string(ScorerKind kind) noexcept {
  switch (kind) {
  case ScorerKind::Linear: return "linear";
  case ScorerKind::TinyConvClassifier: return "tiny_conv_classifier";
  case ScorerKind::Embedding: return "embedding";
  }
  return "?";
}

Scorer::Scorer(ScorerKind kind, int w, int h, int out, std::vector<Tensor> tensors)
    : kind_(kind), w_(w), h_(h), out_(out), tensors_(std::move(tensors)) {
  if (w <= 0 || h <= 0 || out <= 0) throw ScorerError("scorer dimensions must be positive");
  const auto layout = expected_layout(kind, w, h, out);
  if (layout.size() != tensors_.size()) throw ScorerError("unexpected tensor count for " + std::string(to_string(kind)));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (tensors_[i].name != layout[i].first || tensors_[i].shape != layout[i].second ||
        tensors_[i].data.size() != element_count(layout[i].second))
      throw ScorerError("tensor " + std::to_string(i) + " (" + tensors_[i].name + ") has an unexpected name or shape");
  }
  quantize();
}

Scorer Scorer::linear(int w, int h, std::vector<double> weights, std::vector<double> bias) {
  const int classes = static_cast<int>(bias.size());
  if (classes == 0 || weights.size() != static_cast<std::size_t>(classes) * w * h)
    throw ScorerError("linear scorer needs weights of size classes*h*w and one bias per class");
  return Scorer(ScorerKind::Linear, w, h, classes,
                {{"linear.w", {classes, h, w}, std::move(weights)}, {"linear.b", {classes}, std::move(bias)}});
}

Scorer Scorer::tiny_conv_classifier(int w, int h, int classes, std::uint64_t seed) {
  if (classes < 2) throw ScorerError("a classifier needs at least two classes");
  return Scorer(ScorerKind::TinyConvClassifier, w, h, classes, detail::conv_init(detail::conv_shape(w, h, classes), seed));
}

Scorer Scorer::embedding(int w, int h, int dim, std::uint64_t seed) {
  return Scorer(ScorerKind::Embedding, w, h, dim, detail::conv_init(detail::conv_shape(w, h, dim), seed));
}

Scorer Scorer::from_tensors(ScorerKind kind, int w, int h, int output_dim, std::vector<Tensor> tensors) {
  return Scorer(kind, w, h, output_dim, std::move(tensors));
}

std::size_t Scorer::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.data.size();
  return n;
}

void Scorer::quantize() {
  for (auto& t : tensors_)
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

void Scorer::check_finite() const {
  for (const auto& t : tensors_)
    for (double v : t.data)
      if (!std::isfinite(v)) throw ScorerError("parameter tensor " + t.name + " holds a non-finite value");
}

std::vector<double> Scorer::forward(const RasterImage& image) const { return run_forward(*this, image).out; }

Grid Scorer::backward_input(const RasterImage& image, std::span<const double> upstream) const {
  const ForwardState st = run_forward(*this, image);
  Grid g(w_, h_, 0.0);
  run_backward(*this, image, st, upstream, nullptr, &g);
  return g;
}

void Scorer::accumulate_parameter_gradient(const RasterImage& image, std::span<const double> upstream,
                                           std::vector<std::vector<double>>& grads) const {
  const ForwardState st = run_forward(*this, image);
  run_backward(*this, image, st, upstream, &grads, nullptr);
}

ScoredGradient score_and_gradient(const Scorer& scorer, const RasterImage& image, const ScoreTarget& target) {
  const ForwardState st = run_forward(scorer, image);
  std::vector<double> d_out;
  ScoredGradient r{target_value(scorer, st.out, target, d_out), Grid(scorer.input_w(), scorer.input_h(), 0.0)};
  run_backward(scorer, image, st, d_out, nullptr, &r.gradient);
  return r;
}

double score(const Scorer& scorer, const RasterImage& image, const ScoreTarget& target) {
  const ForwardState st = run_forward(scorer, image);
  std::vector<double> d_out;
  return target_value(scorer, st.out, target, d_out);
}

Grid pixel_gradient(const Scorer& scorer, const RasterImage& image, const ScoreTarget& target) {
  return score_and_gradient(scorer, image, target).gradient;
}

int predict_class(const Scorer& scorer, const RasterImage& image) { return argmax(scorer.forward(image)); }

double cross_entropy(std::span<const double> logits, int cls) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return mx + std::log(z) - logits[cls];
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine similarity of vectors with different sizes");
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0) / (na * nb);
}

std::vector<double> embed(const Scorer& scorer, const RasterImage& image) {
  if (scorer.kind() != ScorerKind::Embedding) throw ScorerError("embed requires an embedding scorer");
  return scorer.forward(image);
}

std::vector<std::uint8_t> serialize_model(const Scorer& scorer) {
  std::vector<std::uint8_t> b(kMagic, kMagic + 4);
  put_u32(b, kFormatVersion);
  put_u32(b, static_cast<std::uint32_t>(scorer.kind()));
  put_u32(b, static_cast<std::uint32_t>(scorer.input_w()));
  put_u32(b, static_cast<std::uint32_t>(scorer.input_h()));
  put_u32(b, static_cast<std::uint32_t>(scorer.output_dim()));
  put_u32(b, static_cast<std::uint32_t>(scorer.tensors().size()));
  for (const Tensor& t : scorer.tensors()) {
    put_u32(b, static_cast<std::uint32_t>(t.name.size()));
    b.insert(b.end(), t.name.begin(), t.name.end());
    put_u32(b, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(b, static_cast<std::uint32_t>(d));
    for (double v : t.data) put_u32(b, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return b;
}

Scorer deserialize_model(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.bytes(4) != std::string(kMagic, 4)) throw IoError("not a model file (bad magic)");
  if (const auto v = r.u32(); v != kFormatVersion) throw IoError("unsupported model format version " + std::to_string(v));
  const auto kind = static_cast<ScorerKind>(r.u32());
  if (kind != ScorerKind::Linear && kind != ScorerKind::TinyConvClassifier && kind != ScorerKind::Embedding)
    throw IoError("unknown scorer kind tag");
  const int w = static_cast<int>(r.u32()), h = static_cast<int>(r.u32()), out = static_cast<int>(r.u32());
  const std::uint32_t n = r.u32();
  if (n > 64) throw IoError("implausible tensor count");
  std::vector<Tensor> tensors;
  for (std::uint32_t k = 0; k < n; ++k) {
    Tensor t;
    const std::uint32_t len = r.u32();
    if (len > 256) throw IoError("implausible tensor name length");
    t.name = r.bytes(len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw IoError("implausible tensor rank");
    for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(static_cast<int>(r.u32()));
    const std::size_t count = element_count(t.shape);
    if (count > (std::size_t{1} << 28)) throw IoError("implausible tensor size");
    t.data.resize(count);
    for (double& v : t.data) v = r.f32();
    tensors.push_back(std::move(t));
  }
  if (!r.done()) throw IoError("trailing bytes after model tensors");
  return Scorer::from_tensors(kind, w, h, out, std::move(tensors));
}

void save_model(const Scorer& scorer, const std::filesystem::path& path) { write_file(path, serialize_model(scorer)); }

Scorer load_model(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  return deserialize_model(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
}

Scorer train_tiny_classifier(std::span<const LabeledImage> corpus, const TrainConfig& config, TrainReport* report) {
  if (corpus.empty()) throw ScorerError("training corpus is empty");
  std::map<int, std::size_t> per_class;
  for (const auto& ex : corpus) {
    if (ex.label < 0) throw ScorerError("labels must be non-negative");
    ++per_class[ex.label];
  }
  if (per_class.size() < 2) throw ScorerError("training needs at least two classes");
  for (const auto& [label, count] : per_class)
    if (count < 20)
      throw ScorerError("class " + std::to_string(label) + " has " + std::to_string(count) + " examples, need >= 20");
  const int classes = per_class.rbegin()->first + 1;
  const int w = corpus[0].image.w(), h = corpus[0].image.h();

  std::mt19937_64 rng(config.seed);
  const std::size_t group = std::max<std::size_t>(1, config.group_size);
  std::vector<std::size_t> groups((corpus.size() + group - 1) / group);
  std::iota(groups.begin(), groups.end(), 0);
  std::shuffle(groups.begin(), groups.end(), rng);
  const auto n_val = static_cast<std::size_t>(config.val_fraction * static_cast<double>(groups.size()));
  std::vector<std::size_t> val, train;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t i = groups[g] * group; i < std::min(corpus.size(), (groups[g] + 1) * group); ++i)
      (g < n_val ? val : train).push_back(i);

  Scorer model = Scorer::tiny_conv_classifier(w, h, classes, rng());
  Adam adam(model.tensors(), config.learning_rate);
  auto grads = zero_grads(model);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    for (std::size_t start = 0; start < train.size(); start += config.batch_size) {
      const std::size_t end = std::min(train.size(), start + static_cast<std::size_t>(config.batch_size));
      clear(grads);
      for (std::size_t k = start; k < end; ++k) {
        const LabeledImage& ex = corpus[train[k]];
        const auto logits = model.forward(ex.image);
        std::vector<double> d_out;
        target_value(model, logits, ScoreTarget::class_loss(ex.label), d_out);
        model.accumulate_parameter_gradient(ex.image, d_out, grads);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      model.update_parameters([&](std::vector<Tensor>& p) { adam.step(p, grads, scale); });
    }
  }
  if (report) {
    report->train_size = train.size();
    report->val_size = val.size();
    report->train_accuracy = accuracy(model, corpus, train);
    report->val_accuracy = accuracy(model, corpus, val);
  }
  if (!config.output_path.empty()) save_model(model, config.output_path);
  return model;
}

Scorer train_embedding(std::span<const EmbeddingPair> pairs, const EmbeddingTrainConfig& config) {
  if (pairs.size() < 2) throw ScorerError("embedding training needs at least two pairs");
  const int w = pairs[0].sketch.w(), h = pairs[0].sketch.h();
  std::mt19937_64 rng(config.seed);
  Scorer model = Scorer::embedding(w, h, config.dim, rng());
  Adam adam(model.tensors(), config.learning_rate);
  auto grads = zero_grads(model);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      clear(grads);
      for (std::size_t k = start; k < end; ++k) {
        const EmbeddingPair& anchor = pairs[order[k]];
        std::size_t neg = pick(rng);
        for (int tries = 0; pairs[neg].instance == anchor.instance && tries < 16; ++tries) neg = pick(rng);
        if (pairs[neg].instance == anchor.instance) continue;
        const auto a = model.forward(anchor.sketch);
        const auto p = model.forward(anchor.target);
        const auto n = model.forward(pairs[neg].target);
        const double ap = std::inner_product(a.begin(), a.end(), p.begin(), 0.0);
        const double an = std::inner_product(a.begin(), a.end(), n.begin(), 0.0);
        if (config.margin - ap + an <= 0.0) continue;
        std::vector<double> da(a.size()), dp(a.size()), dn(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
          da[i] = n[i] - p[i];
          dp[i] = -a[i];
          dn[i] = a[i];
        }
        model.accumulate_parameter_gradient(anchor.sketch, da, grads);
        model.accumulate_parameter_gradient(anchor.target, dp, grads);
        model.accumulate_parameter_gradient(pairs[neg].target, dn, grads);
      }
      for (std::size_t k = start; k < end; ++k) {
        const EmbeddingPair& pair = pairs[order[k]];
        if (pair.degraded.empty()) continue;
        const auto t = model.forward(pair.target);
        const auto s = model.forward(pair.sketch);
        const double ts = std::inner_product(t.begin(), t.end(), s.begin(), 0.0);
        for (const RasterImage& img : pair.degraded) {
          const auto d = model.forward(img);
          const double td = std::inner_product(t.begin(), t.end(), d.begin(), 0.0);
          if (config.margin - ts + td <= 0.0) continue;
          std::vector<double> dt(t.size()), ds(t.size()), dd(t.size());
          for (std::size_t i = 0; i < t.size(); ++i) {
            dt[i] = d[i] - s[i];
            ds[i] = -t[i];
            dd[i] = t[i];
          }
          model.accumulate_parameter_gradient(pair.target, dt, grads);
          model.accumulate_parameter_gradient(pair.sketch, ds, grads);
          model.accumulate_parameter_gradient(img, dd, grads);
        }
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      model.update_parameters([&](std::vector<Tensor>& p) { adam.step(p, grads, scale); });
    }
  }
  if (!config.output_path.empty()) save_model(model, config.output_path);
  return model;
}

} // namespace strokescope
