#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "strokescope/raster.hpp"

namespace strokescope {

enum class ScorerKind : std::uint32_t { Linear = 1, TinyConvClassifier = 2, Embedding = 3 };

std::string_view to_string(ScorerKind kind) noexcept;

struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
};

// A differentiable map from an h x w image to an output vector (class logits
// or a unit-norm embedding). Immutable once built; all parameters are kept
// exactly representable as float32 so that the model file round-trips
// bit-exactly.
//
//   Linear              out_c = <W_c, X> + b_c
//   TinyConvClassifier  conv3x3/s2 (8) -> ReLU -> conv3x3/s2 (16) -> ReLU
//                       -> dense 64 -> ReLU -> dense C
//   Embedding           same trunk -> dense D -> L2 normalisation
class Scorer {
public:
  static Scorer linear(int w, int h, std::vector<double> weights, std::vector<double> bias);
  static Scorer tiny_conv_classifier(int w, int h, int classes, std::uint64_t seed);
  static Scorer embedding(int w, int h, int dim, std::uint64_t seed);

  // Rebuilds a scorer from a tensor table; validates names and shapes.
  static Scorer from_tensors(ScorerKind kind, int w, int h, int output_dim, std::vector<Tensor> tensors);

  ScorerKind kind() const noexcept { return kind_; }
  int input_w() const noexcept { return w_; }
  int input_h() const noexcept { return h_; }
  int output_dim() const noexcept { return out_; }
  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
  std::size_t parameter_count() const noexcept;

  // Throws DimensionError on input shape mismatch, ScorerError when a
  // parameter is not finite.
  std::vector<double> forward(const RasterImage& image) const;

  // d(sum_j upstream_j * out_j) / d image.
  Grid backward_input(const RasterImage& image, std::span<const double> upstream) const;

  // Same product w.r.t. the parameters, accumulated into `grads` (one entry
  // per tensor, same layout). Used by training.
  void accumulate_parameter_gradient(const RasterImage& image, std::span<const double> upstream,
                                     std::vector<std::vector<double>>& grads) const;

  // Training hook: applies `update` to the raw parameter storage.
  template <typename Fn>
  void update_parameters(Fn&& update) {
    update(tensors_);
    quantize();
  }

  void check_finite() const;

private:
  Scorer(ScorerKind kind, int w, int h, int out, std::vector<Tensor> tensors);
  void quantize();

  ScorerKind kind_;
  int w_;
  int h_;
  int out_;
  std::vector<Tensor> tensors_;
};

// Which scalar of the scorer output is differentiated.
struct ScoreTarget {
  enum class Mode { ClassLogit, ClassLoss, CosineSim, EmbeddingSum };

  Mode mode = Mode::ClassLogit;
  int cls = -1;                    // -1 with ClassLogit/ClassLoss: the predicted class
  std::vector<double> reference;   // CosineSim only

  static ScoreTarget class_logit(int c) { return {Mode::ClassLogit, c, {}}; }
  static ScoreTarget predicted_logit() { return {Mode::ClassLogit, -1, {}}; }
  static ScoreTarget class_loss(int c) { return {Mode::ClassLoss, c, {}}; }
  static ScoreTarget cosine(std::vector<double> ref) { return {Mode::CosineSim, -1, std::move(ref)}; }
  static ScoreTarget embedding_sum() { return {Mode::EmbeddingSum, -1, {}}; }
};

double score(const Scorer& scorer, const RasterImage& image, const ScoreTarget& target);
Grid pixel_gradient(const Scorer& scorer, const RasterImage& image, const ScoreTarget& target);

// Score and gradient from a single forward pass.
struct ScoredGradient {
  double value = 0.0;
  Grid gradient;
};
ScoredGradient score_and_gradient(const Scorer& scorer, const RasterImage& image, const ScoreTarget& target);

int predict_class(const Scorer& scorer, const RasterImage& image);
double cross_entropy(std::span<const double> logits, int cls);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Unit-norm embedding; the scorer must be of kind Embedding.
std::vector<double> embed(const Scorer& scorer, const RasterImage& image);

// Model file: "SSCM", u32 version, u32 kind, u32 w, u32 h, u32 output dim,
// u32 tensor count, then per tensor u32 name length, name bytes, u32 rank,
// u32 dims, float32 data. All integers and floats little-endian.
std::vector<std::uint8_t> serialize_model(const Scorer& scorer);
Scorer deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const Scorer& scorer, const std::filesystem::path& path);
Scorer load_model(const std::filesystem::path& path);

struct LabeledImage {
  RasterImage image;
  int label = 0;
};

struct TrainConfig {
  int epochs = 6;
  double learning_rate = 2e-3;
  int batch_size = 16;
  double val_fraction = 0.2;
  std::size_t group_size = 1;  // runs of consecutive examples stay on one side of the split
  std::uint64_t seed = 7;
  std::filesystem::path output_path;  // written when non-empty
};

struct TrainReport {
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
};

// Adam on softmax cross-entropy. Requires >= 2 classes and >= 20 examples per
// class (ScorerError otherwise). Deterministic for a fixed seed.
Scorer train_tiny_classifier(std::span<const LabeledImage> corpus, const TrainConfig& config,
                             TrainReport* report = nullptr);

// Sketch/target pair sharing an instance id; targets with equal ids match.
struct EmbeddingPair {
  RasterImage sketch;
  RasterImage target;
  int instance = 0;
  // Same-instance images that must sit at least `margin` further from the
  // target than `sketch` does (partial or scribbled-over versions).
  std::vector<RasterImage> degraded;
};

struct EmbeddingTrainConfig {
  int dim = 32;
  int epochs = 30;
  double learning_rate = 2e-3;
  double margin = 0.2;
  int batch_size = 16;
  std::uint64_t seed = 11;
  std::filesystem::path output_path;
};

// Siamese encoder trained with the triplet objective
// max(0, margin - cos(a, p) + cos(a, n)) on random negatives, plus one
// target-anchored triplet per degraded image.
Scorer train_embedding(std::span<const EmbeddingPair> pairs, const EmbeddingTrainConfig& config);

} // namespace strokescope
