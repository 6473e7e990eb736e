#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"
#include "threadsel/error.hpp"

using namespace threadsel;
using threadsel::testing::TempDir;

namespace {

void expect_error(const std::function<void()>& fn, const std::string& fragment) {
  try {
    fn();
    FAIL() << "expected an error containing \"" << fragment << "\"";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(ValidateForest, Chain) {
  const auto f = validate_forest(3, {{2, 1, 0.9}, {3, 2, 0.8}});
  EXPECT_EQ(f.size(), 3u);
  EXPECT_EQ(f.edges().size(), 2u);
  ASSERT_NE(f.parent_edge(3), nullptr);
  EXPECT_EQ(f.parent_edge(3)->parent, 2u);
  EXPECT_EQ(f.parent_edge(1), nullptr);
}

TEST(ValidateForest, Errors) {
  expect_error([] { validate_forest(3, {{2, 3, 0.9}}); }, "forward edge");
  expect_error([] { validate_forest(3, {{3, 1, 0.5}, {3, 2, 0.6}}); }, "multiple parents");
  expect_error([] { validate_forest(3, {{4, 1, 0.5}}); }, "index out of range");
  expect_error([] { validate_forest(3, {{2, 0, 0.5}}); }, "index out of range");
  expect_error([] { validate_forest(3, {{2, 1, 1.2}}); }, "confidence out of range");
  expect_error([] { validate_forest(3, {{2, 2, 0.5}}); }, "forward edge");
}

TEST(ValidateForest, EmptyEdgesAreSingletonRoots) {
  const auto f = validate_forest(5, {});
  for (TurnIndex i = 1; i <= 5; ++i) EXPECT_EQ(f.parent_edge(i), nullptr);
}

TEST(ValidateForest, ParentWalkTerminates) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    const auto f = validate_forest(n, threadsel::testing::random_edges(n, rng));
    for (TurnIndex start = 1; start <= n; ++start) {
      std::size_t steps = 0;
      for (TurnIndex cur = start; f.parent_edge(cur) != nullptr; cur = f.parent_edge(cur)->parent) {
        EXPECT_LT(f.parent_edge(cur)->parent, cur);
        ASSERT_LE(++steps, n);
      }
    }
  }
}

TEST(ResolveNearestParent, KeepsLargestParent) {
  const auto resolved = resolve_nearest_parent({{3, 1, 0.5}, {3, 2, 0.6}, {2, 1, 0.9}});
  const auto f = validate_forest(3, resolved);
  EXPECT_EQ(f.parent_edge(3)->parent, 2u);
  EXPECT_DOUBLE_EQ(f.parent_edge(3)->confidence, 0.6);
}

TEST(LoadEdges, OneRecord) {
  const auto forests = parse_edges(R"({"dialogue_id":"d1","n":3,"edges":[{"child":2,"parent":1,"confidence":0.9}]})");
  ASSERT_EQ(forests.size(), 1u);
  EXPECT_EQ(forests.at("d1").size(), 3u);
}

TEST(LoadEdges, ErrorsNameDialogue) {
  expect_error(
      [] {
        parse_edges(
            R"({"dialogue_id":"dup-child","n":3,"edges":[{"child":3,"parent":1,"confidence":0.5},{"child":3,"parent":2,"confidence":0.6}]})");
      },
      "dup-child");
  expect_error(
      [] { parse_edges(R"({"dialogue_id":"c","n":3,"edges":[{"child":2,"parent":1,"confidence":1.2}]})"); },
      "confidence out of range");
  expect_error([] { parse_edges(R"({"dialogue_id":"c","n":3,"edges":[{"child":2,"parent":1}]})"); }, "confidence");
  expect_error([] { parse_edges("{oops"); }, "line 1");
}

TEST(LoadEdges, ResolveFlagFixesMultiParents) {
  const auto forests = parse_edges(
      R"({"dialogue_id":"m","n":3,"edges":[{"child":3,"parent":1,"confidence":0.5},{"child":3,"parent":2,"confidence":0.6}]})",
      true);
  EXPECT_EQ(forests.at("m").parent_edge(3)->parent, 2u);
}

TEST(LoadEdges, FileRoundTrip) {
  TempDir dir("edges");
  ForestMap forests;
  forests.emplace("a", threadsel::testing::seven_turn_forest());
  forests.emplace("b", chain_parser(4));
  save_edges(forests, dir / "e.jsonl");
  EXPECT_EQ(load_edges(dir / "e.jsonl"), forests);
}

TEST(ChainParser, Shapes) {
  EXPECT_TRUE(chain_parser(1).edges().empty());
  const auto f = chain_parser(4);
  EXPECT_EQ(f.edges(), (std::vector<DependencyEdge>{{2, 1, 1.0}, {3, 2, 1.0}, {4, 3, 1.0}}));
}

TEST(ChainParser, ExtractionGivesFullHistory) {
  for (std::size_t n = 1; n <= 10; ++n) {
    for (double p : {0.0, 0.2, 0.5, 1.0}) {
      const auto threads = extract_threads(chain_parser(n), {p, 4});
      EXPECT_EQ(threads.threads, full_history(n).threads);
    }
  }
}

TEST(RestrictForest, DropsLaterTurns) {
  const auto f = restrict_forest(threadsel::testing::seven_turn_forest(), 4);
  EXPECT_EQ(f.size(), 4u);
  EXPECT_EQ(f.edges().size(), 3u);
}
