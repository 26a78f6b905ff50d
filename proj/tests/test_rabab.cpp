#include <gtest/gtest.h>

#include <cmath>

#include "neurokernel/rabab.hpp"
#include "neurokernel/random.hpp"

namespace nk = neurokernel;
using namespace nk::rabab;

namespace {

TEST(Predicates, RegisterAndEvaluate) {
  RababEngine e;
  ASSERT_TRUE(e.register_predicate("even", even_number_rule()));
  EXPECT_EQ(e.register_predicate("even", even_number_rule()).error().kind, nk::ErrorKind::InvalidArgument);
  EXPECT_TRUE(*e.evaluate("even", std::int64_t{4}));
  EXPECT_FALSE(*e.evaluate("even", std::int64_t{7}));
  EXPECT_FALSE(e.evaluate("odd", std::int64_t{7}));
  EXPECT_FALSE(e.evaluate("even", *embed("x")));
  EXPECT_DOUBLE_EQ(e.find_predicate("even")->confidence(), 0.5);
}

TEST(Predicates, BetaBernoulliConfidence) {
  RababEngine e;
  ASSERT_TRUE(e.register_predicate("even", even_number_rule()));
  ASSERT_TRUE(e.evolve_predicate("even", std::int64_t{2}, true));
  EXPECT_DOUBLE_EQ(e.find_predicate("even")->confidence(), 2.0 / 3.0);
  // Nine agreeing and two disagreeing observations on a Beta(1, 1) prior.
  for (int i = 0; i < 8; ++i) ASSERT_TRUE(e.evolve_predicate("even", std::int64_t{2 * i}, true));
  for (int i = 0; i < 2; ++i) ASSERT_TRUE(e.evolve_predicate("even", std::int64_t{2 * i}, false));
  const Predicate* p = e.find_predicate("even");
  EXPECT_DOUBLE_EQ(p->alpha(), 10.0);
  EXPECT_DOUBLE_EQ(p->beta(), 3.0);
  EXPECT_DOUBLE_EQ(p->confidence(), 10.0 / 13.0);
  EXPECT_EQ(p->observations(), 11u);
}

TEST(Predicates, ConfidenceTrackingIsMonotoneForCorrectRule) {
  RababEngine e;
  ASSERT_TRUE(e.register_predicate("even", even_number_rule()));
  double prev = 0.5;
  for (std::int64_t n = 0; n < 50; ++n) {
    auto p = e.evolve_predicate("even", n, n % 2 == 0);
    ASSERT_TRUE(p);
    ASSERT_GT(p->confidence(), prev);
    prev = p->confidence();
  }
  EXPECT_DOUBLE_EQ(prev, 51.0 / 52.0);
}

TEST(Graph, Updates) {
  KnowledgeGraph g;
  EXPECT_DOUBLE_EQ(*g.evolve("a", "b", 1.0), 0.1);
  EXPECT_DOUBLE_EQ(*g.evolve("a", "b", 1.0), 0.19);
  EXPECT_FALSE(g.evolve("a", "b", 1.5));
  EXPECT_FALSE(g.evolve("a", "b", 0.5, 0.0));
  for (int i = 0; i < 200; ++i) ASSERT_TRUE(g.evolve("x", "y", 0.5));
  EXPECT_NEAR(*g.weight("x", "y"), 0.5, 1e-9);
  EXPECT_EQ(g.evolve("s", "s", 1.0).error().kind, nk::ErrorKind::InvalidArgument);
  EXPECT_FALSE(g.weight("s", "s"));
  EXPECT_FALSE(g.weight("b", "a"));
  EXPECT_EQ(g.neighbors("a").size(), 1u);
}

TEST(Graph, ClosedForm) {
  KnowledgeGraph g;
  for (int n = 1; n <= 30; ++n) {
    const double w = *g.evolve("p", "q", 1.0);
    EXPECT_NEAR(w, 1.0 - std::pow(0.9, n), 1e-12);
  }
}

TEST(Embedding, DeterministicUnitNorm) {
  auto a = *embed("a");
  EXPECT_EQ(a, *embed("a"));
  EXPECT_EQ(a.dim(), kEmbeddingDim);
  EXPECT_NEAR(a.norm(), 1.0, 1e-12);
  EXPECT_LT(*cosine_similarity(a, *embed("b")), 1.0);
  EXPECT_FALSE(embed("a", 0));
  EXPECT_FALSE(NeuralEmbedding::create({}));
  EXPECT_FALSE(NeuralEmbedding::create({1.0, NAN}));
}

TEST(Cosine, ExamplesAndErrors) {
  const std::vector<double> x{1, 0}, y{0, 1}, nx{-1, 0}, z{0, 0}, three{1, 2, 3};
  EXPECT_DOUBLE_EQ(*cosine_similarity(x, x), 1.0);
  EXPECT_DOUBLE_EQ(*cosine_similarity(x, y), 0.0);
  EXPECT_DOUBLE_EQ(*cosine_similarity(x, nx), -1.0);
  EXPECT_EQ(cosine_similarity(x, z).error().kind, nk::ErrorKind::InvalidArgument);
  EXPECT_EQ(cosine_similarity(x, three).error().kind, nk::ErrorKind::InvalidArgument);
}

TEST(Cosine, Properties) {
  nk::Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> a(8), b(8);
    for (auto& v : a) v = nk::uniform_real(rng, -10, 10);
    for (auto& v : b) v = nk::uniform_real(rng, -10, 10);
    const double ab = *cosine_similarity(a, b);
    ASSERT_GE(ab, -1.0);
    ASSERT_LE(ab, 1.0);
    ASSERT_NEAR(ab, *cosine_similarity(b, a), 1e-12);
    auto scaled = a;
    for (auto& v : scaled) v *= 3.5;
    ASSERT_NEAR(ab, *cosine_similarity(scaled, b), 1e-12);
  }
}

TEST(Linear, ConsumeOnce) {
  RababEngine e;
  auto r = e.allocate_linear("buffer");
  auto leak = e.allocate_linear("leak");
  EXPECT_EQ(*e.inspect_linear(r), "buffer");
  EXPECT_EQ(*e.consume_linear(r), "buffer");
  EXPECT_EQ(e.consume_linear(r).error().kind, nk::ErrorKind::ResourceConsumed);
  EXPECT_EQ(e.inspect_linear(r).error().kind, nk::ErrorKind::ResourceConsumed);
  EXPECT_FALSE(e.consume_linear(LinearResource{999}));
  EXPECT_EQ(e.live_linear(), 1u);
  const auto report = e.shutdown();
  EXPECT_EQ(report.allocated, 2u);
  EXPECT_EQ(report.consumed, 1u);
  EXPECT_EQ(report.leaked, 1u);
  EXPECT_EQ(report.leaked_ids, std::vector<std::uint64_t>{leak.id});
}

TEST(Intents, Draw) {
  Framebuffer fb;
  ASSERT_TRUE(interpret_intent(DrawPixel{100, 50, kRed}, fb));
  EXPECT_EQ(fb.at(100, 50), kRed);
  EXPECT_EQ(fb.at(99, 50), kBlack);
  EXPECT_EQ(interpret_intent(DrawPixel{128, 0, kRed}, fb).error().kind, nk::ErrorKind::InvalidArgument);
  Framebuffer before = fb;
  ASSERT_TRUE(interpret_intent(DrawPixel{0, 0, kBlack}, fb));
  EXPECT_EQ(fb, before);
  EXPECT_EQ(Framebuffer(2, 1).to_ppm().rfind("P3\n2 1\n255\n", 0), 0u);
  auto parsed = parse_intent("pixel:100,50,#ff0000");
  ASSERT_TRUE(parsed);
  EXPECT_EQ(std::get<DrawPixel>(*parsed), (DrawPixel{100, 50, kRed}));
  EXPECT_FALSE(parse_intent("pixel:1,2"));
  EXPECT_FALSE(parse_intent("line:1,2,#000000"));
}

TEST(Paths, Canonicalization) {
  const Rgb g{0, 255, 0};
  TransformPath two_steps{Translate{1, 0}, Translate{0, 1}, DrawPixel{2, 2, g}};
  TransformPath one_step{Translate{1, 1}, Identity{}, DrawPixel{2, 2, g}};
  EXPECT_TRUE(*paths_equivalent(two_steps, one_step));
  auto canon = *canonicalize_path(two_steps);
  ASSERT_EQ(canon.size(), 1u);
  EXPECT_EQ(std::get<DrawPixel>(canon[0]), (DrawPixel{3, 3, g}));

  TransformPath overwrite{DrawPixel{0, 0, kRed}, DrawPixel{0, 0, g}};
  TransformPath just_green{DrawPixel{0, 0, g}};
  EXPECT_TRUE(*paths_equivalent(overwrite, just_green));
  TransformPath reversed{DrawPixel{0, 0, g}, DrawPixel{0, 0, kRed}};
  EXPECT_FALSE(*paths_equivalent(overwrite, reversed));

  TransformPath disjoint_a{DrawPixel{5, 1, kRed}, DrawPixel{1, 5, g}};
  TransformPath disjoint_b{DrawPixel{1, 5, g}, DrawPixel{5, 1, kRed}};
  EXPECT_TRUE(*paths_equivalent(disjoint_a, disjoint_b));

  EXPECT_FALSE(canonicalize_path({Translate{200, 0}, DrawPixel{0, 0, kRed}}));
  EXPECT_TRUE(canonicalize_path({Identity{}})->empty());
  auto c = *canonicalize_path(overwrite);
  EXPECT_EQ(*canonicalize_path(c), c);
}

TEST(Paths, CanonicalEquivalenceMatchesRendering) {
  nk::Rng rng(13);
  const Rgb palette[] = {kBlack, kRed, Rgb{0, 0, 255}};
  auto random_path = [&] {
    TransformPath p;
    const std::size_t len = nk::uniform_index(rng, 5);
    for (std::size_t i = 0; i < len; ++i) {
      switch (nk::uniform_index(rng, 3)) {
        case 0: p.push_back(Identity{}); break;
        case 1: p.push_back(Translate{static_cast<int>(nk::uniform_index(rng, 2)), static_cast<int>(nk::uniform_index(rng, 2))}); break;
        default:
          p.push_back(DrawPixel{static_cast<int>(nk::uniform_index(rng, 3)), static_cast<int>(nk::uniform_index(rng, 3)),
                                palette[nk::uniform_index(rng, 3)]});
      }
    }
    return p;
  };
  auto render = [](const TransformPath& p, Rgb fill) {
    Framebuffer fb(8, 8, fill);
    const auto canon = canonicalize_path(p, 8, 8);
    for (const auto& op : *canon) {
      if (!interpret_intent(std::get<DrawPixel>(op), fb)) std::abort();
    }
    return fb;
  };
  for (int i = 0; i < 3000; ++i) {
    auto p = random_path();
    auto q = random_path();
    bool same_effect = true;
    for (Rgb fill : {kBlack, kRed, Rgb{0, 0, 255}, Rgb{1, 2, 3}}) same_effect = same_effect && render(p, fill) == render(q, fill);
    ASSERT_EQ(*paths_equivalent(p, q, 8, 8), same_effect) << to_string(p) << " vs " << to_string(q);
  }
}

}  // namespace
