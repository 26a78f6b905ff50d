#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "neurokernel/error.hpp"

namespace neurokernel::rabab {

inline constexpr std::size_t kEmbeddingDim = 32;
inline constexpr double kGraphLearningRate = 0.1;

// ---------------------------------------------------------------------------
// Embeddings

class NeuralEmbedding {
 public:
  /// Rejects empty or non-finite vectors.
  static Result<NeuralEmbedding> create(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  double norm() const;

  friend bool operator==(const NeuralEmbedding&, const NeuralEmbedding&) = default;

 private:
  explicit NeuralEmbedding(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

/// 64-bit FNV-1a followed by a splitmix64 finalizer.
std::uint64_t stable_hash(std::span<const std::byte> bytes);

/// Deterministic unit-norm hash embedding: slot i is hash(input || le32(i))
/// mapped onto [-1, 1], then the vector is normalized.
Result<NeuralEmbedding> embed(std::span<const std::byte> input, std::size_t dim = kEmbeddingDim);
Result<NeuralEmbedding> embed(std::string_view input, std::size_t dim = kEmbeddingDim);

/// dot(a, b) / (|a| |b|), clamped to [-1, 1]. Zero-norm inputs are errors.
Result<double> cosine_similarity(std::span<const double> a, std::span<const double> b);
Result<double> cosine_similarity(const NeuralEmbedding& a, const NeuralEmbedding& b);

// ---------------------------------------------------------------------------
// Predicates

using PredicateInput = std::variant<std::int64_t, NeuralEmbedding>;
using IntRule = std::function<bool(std::int64_t)>;
using EmbeddingRule = std::function<bool(const NeuralEmbedding&)>;
using Rule = std::variant<IntRule, EmbeddingRule>;

/// Named pure rule with a Beta(alpha, beta) confidence in its own outputs.
class Predicate {
 public:
  Predicate(std::string name, Rule rule) : name_(std::move(name)), rule_(std::move(rule)) {}

  const std::string& name() const { return name_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double confidence() const { return alpha_ / (alpha_ + beta_); }
  std::uint64_t observations() const { return observations_; }

  /// InvalidArgument when the input kind does not match the rule.
  Result<bool> evaluate(const PredicateInput& input) const;
  /// Beta-Bernoulli update: alpha += 1 if the rule agreed with truth, else beta += 1.
  Result<bool> observe(const PredicateInput& input, bool truth);

 private:
  std::string name_;
  Rule rule_;
  double alpha_ = 1.0;
  double beta_ = 1.0;
  std::uint64_t observations_ = 0;
};

// ---------------------------------------------------------------------------
// Knowledge graph

/// Directed (subject, object) -> weight edges, weights kept in [0, 1].
class KnowledgeGraph {
 public:
  /// w' = w + eta * (target - w), absent edges start at 0.
  Result<double> evolve(const std::string& subject, const std::string& object, double target,
                        double eta = kGraphLearningRate);
  std::optional<double> weight(const std::string& subject, const std::string& object) const;
  std::vector<std::pair<std::string, double>> neighbors(const std::string& subject) const;
  std::size_t edge_count() const { return edges_.size(); }
  const std::map<std::pair<std::string, std::string>, double>& edges() const { return edges_; }

 private:
  std::map<std::pair<std::string, std::string>, double> edges_;
};

// ---------------------------------------------------------------------------
// Linear resources

struct LinearResource {
  std::uint64_t id = 0;
};

struct ShutdownReport {
  std::size_t allocated = 0;
  std::size_t consumed = 0;
  std::size_t leaked = 0;
  std::vector<std::uint64_t> leaked_ids;
};

// ---------------------------------------------------------------------------
// Intents and framebuffer

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
  friend auto operator<=>(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kRed{255, 0, 0};

struct DrawPixel {
  int x = 0;
  int y = 0;
  Rgb color;
  friend bool operator==(const DrawPixel&, const DrawPixel&) = default;
  friend auto operator<=>(const DrawPixel&, const DrawPixel&) = default;
};

using Intent = std::variant<DrawPixel>;

/// Parses "pixel:x,y,#RRGGBB".
Result<Intent> parse_intent(std::string_view text);

class Framebuffer {
 public:
  static constexpr int kDefaultWidth = 128;
  static constexpr int kDefaultHeight = 128;

  Framebuffer(int width = kDefaultWidth, int height = kDefaultHeight, Rgb fill = kBlack);

  int width() const { return width_; }
  int height() const { return height_; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  Rgb at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int x, int y, Rgb c) { pixels_[static_cast<std::size_t>(y) * width_ + x] = c; }

  /// Plain-text PPM (P3).
  std::string to_ppm() const;

  friend bool operator==(const Framebuffer&, const Framebuffer&) = default;

 private:
  int width_;
  int height_;
  std::vector<Rgb> pixels_;
};

Status interpret_intent(const Intent& intent, Framebuffer& fb);

// ---------------------------------------------------------------------------
// Transform paths

struct Identity {
  friend bool operator==(const Identity&, const Identity&) = default;
};

struct Translate {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const Translate&, const Translate&) = default;
};

/// A Translate shifts every later DrawPixel in the path.
using PathOp = std::variant<Identity, DrawPixel, Translate>;
using TransformPath = std::vector<PathOp>;

std::string to_string(const TransformPath& path);

/// Drops Identity, merges Translates and folds the running offset into each
/// DrawPixel. Result is draws only, in original order.
Result<TransformPath> fold_path(const TransformPath& path, int width, int height);

/// Normal form for effect equivalence: the folded draws with every draw that
/// a later draw to the same pixel overwrites removed, ordered by (y, x).
Result<TransformPath> canonicalize_path(const TransformPath& path, int width = Framebuffer::kDefaultWidth,
                                        int height = Framebuffer::kDefaultHeight);

Result<bool> paths_equivalent(const TransformPath& p, const TransformPath& q,
                              int width = Framebuffer::kDefaultWidth, int height = Framebuffer::kDefaultHeight);

// ---------------------------------------------------------------------------
// Engine

/// Owner of all mutable reasoning state. Mutations go through one instance at
/// a time; evaluation and similarity are pure.
class RababEngine {
 public:
  explicit RababEngine(std::size_t embedding_dim = kEmbeddingDim) : dim_(embedding_dim) {}

  Status register_predicate(const std::string& name, Rule rule);
  Result<bool> evaluate(const std::string& name, const PredicateInput& input) const;
  Result<Predicate> evolve_predicate(const std::string& name, const PredicateInput& input, bool truth);
  const Predicate* find_predicate(const std::string& name) const;

  Result<double> evolve_kernel_state(const std::string& subject, const std::string& object, double target);
  const KnowledgeGraph& graph() const { return graph_; }

  Result<NeuralEmbedding> embed(std::string_view input) const { return rabab::embed(input, dim_); }

  LinearResource allocate_linear(std::string descriptor);
  Result<std::string> consume_linear(const LinearResource& res);
  /// Reads the descriptor without consuming; ResourceConsumed after consume.
  Result<std::string> inspect_linear(const LinearResource& res) const;
  std::size_t live_linear() const;
  ShutdownReport shutdown() const;

 private:
  struct LinearSlot {
    std::string payload;
    bool consumed = false;
  };

  std::size_t dim_;
  std::map<std::string, Predicate> predicates_;
  KnowledgeGraph graph_;
  std::unordered_map<std::uint64_t, LinearSlot> linear_;
  std::uint64_t next_linear_ = 0;
};

/// The learning-loop detector: true iff n is even.
Rule even_number_rule();

}  // namespace neurokernel::rabab
