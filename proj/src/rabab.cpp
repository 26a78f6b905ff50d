#include "neurokernel/rabab.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace neurokernel::rabab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string hex_color(Rgb c) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out = "#";
  for (std::uint8_t v : {c.r, c.g, c.b}) {
    out.push_back(kDigits[v >> 4]);
    out.push_back(kDigits[v & 0xf]);
  }
  return out;
}

bool parse_int(std::string_view s, int& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

// Embeddings --------------------------------------------------------------

Result<NeuralEmbedding> NeuralEmbedding::create(std::vector<double> values) {
  if (values.empty()) return make_error(ErrorKind::InvalidArgument, "embedding must be non-empty");
  for (double v : values) {
    if (!std::isfinite(v)) return make_error(ErrorKind::InvalidArgument, "embedding entries must be finite");
  }
  return NeuralEmbedding(std::move(values));
}

double NeuralEmbedding::norm() const {
  double sq = 0.0;
  for (double v : values_) sq += v * v;
  return std::sqrt(sq);
}

std::uint64_t stable_hash(std::span<const std::byte> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

Result<NeuralEmbedding> embed(std::span<const std::byte> input, std::size_t dim) {
  if (input.empty()) return make_error(ErrorKind::InvalidArgument, "cannot embed empty input");
  if (dim == 0) return make_error(ErrorKind::InvalidArgument, "embedding dimension must be positive");

  std::vector<std::byte> buf(input.begin(), input.end());
  buf.resize(input.size() + 4);
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const auto slot = static_cast<std::uint32_t>(i);
    for (int b = 0; b < 4; ++b) buf[input.size() + b] = static_cast<std::byte>((slot >> (8 * b)) & 0xff);
    const std::uint64_t h = stable_hash(buf);
    v[i] = static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  }
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double n = std::sqrt(sq);
  if (n == 0.0) return make_error(ErrorKind::InvalidArgument, "embedding hashed to the zero vector");
  for (double& x : v) x /= n;
  return NeuralEmbedding::create(std::move(v));
}

Result<NeuralEmbedding> embed(std::string_view input, std::size_t dim) {
  return embed(std::as_bytes(std::span(input.data(), input.size())), dim);
}

Result<double> cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    return make_error(ErrorKind::InvalidArgument, "cosine needs equal, non-zero dimensions (" +
                                                      std::to_string(a.size()) + " vs " +
                                                      std::to_string(b.size()) + ")");
  }
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return make_error(ErrorKind::InvalidArgument, "cosine of a zero-norm vector");
  const double c = dot / (std::sqrt(aa) * std::sqrt(bb));
  if (!std::isfinite(c)) return make_error(ErrorKind::Overflow, "cosine is not finite");
  return std::clamp(c, -1.0, 1.0);
}

Result<double> cosine_similarity(const NeuralEmbedding& a, const NeuralEmbedding& b) {
  return cosine_similarity(a.values(), b.values());
}

// Predicates --------------------------------------------------------------

Result<bool> Predicate::evaluate(const PredicateInput& input) const {
  return std::visit(
      Overloaded{
          [&](const IntRule& rule, std::int64_t n) -> Result<bool> { return rule(n); },
          [&](const EmbeddingRule& rule, const NeuralEmbedding& e) -> Result<bool> { return rule(e); },
          [&](const auto&, const auto&) -> Result<bool> {
            return make_error(ErrorKind::InvalidArgument, "input kind does not match predicate " + name_);
          },
      },
      rule_, input);
}

Result<bool> Predicate::observe(const PredicateInput& input, bool truth) {
  auto out = evaluate(input);
  if (!out) return out.error();
  const bool correct = *out == truth;
  if (correct) {
    alpha_ += 1.0;
  } else {
    beta_ += 1.0;
  }
  ++observations_;
  return correct;
}

Rule even_number_rule() {
  return IntRule([](std::int64_t n) { return n % 2 == 0; });
}

// Knowledge graph ---------------------------------------------------------

Result<double> KnowledgeGraph::evolve(const std::string& subject, const std::string& object, double target,
                                      double eta) {
  if (subject == object) return make_error(ErrorKind::InvalidArgument, "self-loop on '" + subject + "'");
  if (!(target >= 0.0 && target <= 1.0)) {
    return make_error(ErrorKind::InvalidArgument, "target must be in [0, 1]");
  }
  if (!(eta > 0.0 && eta <= 1.0)) return make_error(ErrorKind::InvalidArgument, "eta must be in (0, 1]");
  double& w = edges_[{subject, object}];
  const double next = w + eta * (target - w);
  w = std::clamp(next, 0.0, 1.0);
  return w;
}

std::optional<double> KnowledgeGraph::weight(const std::string& subject, const std::string& object) const {
  auto it = edges_.find({subject, object});
  if (it == edges_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::pair<std::string, double>> KnowledgeGraph::neighbors(const std::string& subject) const {
  std::vector<std::pair<std::string, double>> out;
  for (auto it = edges_.lower_bound({subject, std::string()}); it != edges_.end() && it->first.first == subject;
       ++it) {
    out.emplace_back(it->first.second, it->second);
  }
  return out;
}

// Intents -----------------------------------------------------------------

Result<Intent> parse_intent(std::string_view text) {
  constexpr std::string_view kPrefix = "pixel:";
  auto bad = [&] { return make_error(ErrorKind::InvalidArgument, "expected pixel:x,y,#RRGGBB, got '" + std::string(text) + "'"); };
  if (text.substr(0, kPrefix.size()) != kPrefix) return bad();
  std::string_view rest = text.substr(kPrefix.size());
  const auto c1 = rest.find(',');
  if (c1 == std::string_view::npos) return bad();
  const auto c2 = rest.find(',', c1 + 1);
  if (c2 == std::string_view::npos) return bad();
  DrawPixel px;
  if (!parse_int(rest.substr(0, c1), px.x) || !parse_int(rest.substr(c1 + 1, c2 - c1 - 1), px.y)) return bad();
  std::string_view color = rest.substr(c2 + 1);
  if (color.size() != 7 || color[0] != '#') return bad();
  std::uint8_t channels[3];
  for (int i = 0; i < 3; ++i) {
    auto part = color.substr(1 + 2 * i, 2);
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + 2, channels[i], 16);
    if (ec != std::errc() || ptr != part.data() + 2) return bad();
  }
  px.color = Rgb{channels[0], channels[1], channels[2]};
  return Intent{px};
}

Framebuffer::Framebuffer(int width, int height, Rgb fill)
    : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height, fill) {}

std::string Framebuffer::to_ppm() const {
  std::ostringstream out;
  out << "P3\n" << width_ << ' ' << height_ << "\n255\n";
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      const Rgb c = at(x, y);
      if (x) out << ' ';
      out << int{c.r} << ' ' << int{c.g} << ' ' << int{c.b};
    }
    out << '\n';
  }
  return out.str();
}

Status interpret_intent(const Intent& intent, Framebuffer& fb) {
  const DrawPixel& px = std::get<DrawPixel>(intent);
  if (!fb.in_bounds(px.x, px.y)) {
    return make_error(ErrorKind::InvalidArgument, "pixel (" + std::to_string(px.x) + "," + std::to_string(px.y) +
                                                      ") outside " + std::to_string(fb.width()) + "x" +
                                                      std::to_string(fb.height()));
  }
  fb.set(px.x, px.y, px.color);
  return ok_status();
}

// Paths -------------------------------------------------------------------

std::string to_string(const TransformPath& path) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out << ", ";
    std::visit(Overloaded{
                   [&](const Identity&) { out << "Identity"; },
                   [&](const Translate& t) { out << "Translate(" << t.dx << ',' << t.dy << ')'; },
                   [&](const DrawPixel& d) {
                     out << "DrawPixel(" << d.x << ',' << d.y << ',' << hex_color(d.color) << ')';
                   },
               },
               path[i]);
  }
  out << ']';
  return out.str();
}

Result<TransformPath> fold_path(const TransformPath& path, int width, int height) {
  long long dx = 0, dy = 0;
  TransformPath out;
  for (const PathOp& op : path) {
    if (const auto* t = std::get_if<Translate>(&op)) {
      dx += t->dx;
      dy += t->dy;
    } else if (const auto* d = std::get_if<DrawPixel>(&op)) {
      const long long x = d->x + dx, y = d->y + dy;
      if (x < 0 || y < 0 || x >= width || y >= height) {
        return make_error(ErrorKind::InvalidArgument, "folded draw (" + std::to_string(x) + "," +
                                                          std::to_string(y) + ") is out of bounds");
      }
      out.push_back(DrawPixel{static_cast<int>(x), static_cast<int>(y), d->color});
    }
  }
  return out;
}

Result<TransformPath> canonicalize_path(const TransformPath& path, int width, int height) {
  auto folded = fold_path(path, width, height);
  if (!folded) return folded.error();
  std::set<std::pair<int, int>> written;
  std::vector<DrawPixel> live;
  for (auto it = folded->rbegin(); it != folded->rend(); ++it) {
    const auto& d = std::get<DrawPixel>(*it);
    if (written.insert({d.y, d.x}).second) live.push_back(d);
  }
  std::sort(live.begin(), live.end(),
            [](const DrawPixel& a, const DrawPixel& b) { return std::pair(a.y, a.x) < std::pair(b.y, b.x); });
  return TransformPath(live.begin(), live.end());
}

Result<bool> paths_equivalent(const TransformPath& p, const TransformPath& q, int width, int height) {
  auto cp = canonicalize_path(p, width, height);
  if (!cp) return cp.error();
  auto cq = canonicalize_path(q, width, height);
  if (!cq) return cq.error();
  return *cp == *cq;
}

// Engine ------------------------------------------------------------------

Status RababEngine::register_predicate(const std::string& name, Rule rule) {
  if (predicates_.count(name)) return make_error(ErrorKind::InvalidArgument, "predicate '" + name + "' exists");
  predicates_.emplace(name, Predicate(name, std::move(rule)));
  return ok_status();
}

const Predicate* RababEngine::find_predicate(const std::string& name) const {
  auto it = predicates_.find(name);
  return it == predicates_.end() ? nullptr : &it->second;
}

Result<bool> RababEngine::evaluate(const std::string& name, const PredicateInput& input) const {
  const Predicate* p = find_predicate(name);
  if (!p) return make_error(ErrorKind::InvalidArgument, "unknown predicate '" + name + "'");
  return p->evaluate(input);
}

Result<Predicate> RababEngine::evolve_predicate(const std::string& name, const PredicateInput& input, bool truth) {
  auto it = predicates_.find(name);
  if (it == predicates_.end()) return make_error(ErrorKind::InvalidArgument, "unknown predicate '" + name + "'");
  auto out = it->second.observe(input, truth);
  if (!out) return out.error();
  return it->second;
}

Result<double> RababEngine::evolve_kernel_state(const std::string& subject, const std::string& object,
                                                double target) {
  return graph_.evolve(subject, object, target);
}

LinearResource RababEngine::allocate_linear(std::string descriptor) {
  const std::uint64_t id = next_linear_++;
  linear_.emplace(id, LinearSlot{std::move(descriptor), false});
  return LinearResource{id};
}

Result<std::string> RababEngine::consume_linear(const LinearResource& res) {
  auto it = linear_.find(res.id);
  if (it == linear_.end()) return make_error(ErrorKind::InvalidArgument, "unknown linear resource");
  if (it->second.consumed) {
    return make_error(ErrorKind::ResourceConsumed, "resource " + std::to_string(res.id) + " already consumed");
  }
  it->second.consumed = true;
  return std::move(it->second.payload);
}

Result<std::string> RababEngine::inspect_linear(const LinearResource& res) const {
  auto it = linear_.find(res.id);
  if (it == linear_.end()) return make_error(ErrorKind::InvalidArgument, "unknown linear resource");
  if (it->second.consumed) {
    return make_error(ErrorKind::ResourceConsumed, "resource " + std::to_string(res.id) + " already consumed");
  }
  return it->second.payload;
}

std::size_t RababEngine::live_linear() const {
  return static_cast<std::size_t>(
      std::count_if(linear_.begin(), linear_.end(), [](const auto& kv) { return !kv.second.consumed; }));
}

ShutdownReport RababEngine::shutdown() const {
  ShutdownReport r;
  r.allocated = linear_.size();
  for (const auto& [id, slot] : linear_) {
    if (slot.consumed) {
      ++r.consumed;
    } else {
      r.leaked_ids.push_back(id);
    }
  }
  std::sort(r.leaked_ids.begin(), r.leaked_ids.end());
  r.leaked = r.leaked_ids.size();
  return r;
}

}  // namespace neurokernel::rabab
