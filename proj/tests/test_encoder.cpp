#include <gtest/gtest.h>

#include <random>
#include <set>

#include "support.hpp"
#include "threadsel/encoder.hpp"
#include "threadsel/error.hpp"
#include "threadsel/grad_check.hpp"
#include "threadsel/model.hpp"

using namespace threadsel;
using threadsel::testing::make_dialogue;

namespace {

EncoderConfig tiny_config(std::size_t vocab) {
  EncoderConfig c;
  c.layers = 1;
  c.heads = 2;
  c.dim = 8;
  c.ffn_dim = 16;
  c.vocab_size = vocab;
  return c;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

TokenSequence random_tokens(std::size_t n, std::size_t vocab, std::mt19937_64& rng) {
  TokenSequence s;
  for (std::size_t i = 0; i < n; ++i) s.ids.push_back(static_cast<TokenId>(Tokenizer::kNumSpecials + rng() % (vocab - Tokenizer::kNumSpecials)));
  return s;
}

}  // namespace

TEST(EncoderConfig, Presets) {
  const auto desk = EncoderConfig::desk();
  EXPECT_EQ(desk.layers, 2u);
  EXPECT_EQ(desk.heads, 4u);
  EXPECT_EQ(desk.dim, 64u);
  const auto large = EncoderConfig::paper_scale();
  EXPECT_EQ(large.layers, 12u);
  EXPECT_EQ(large.heads, 12u);
  EXPECT_EQ(large.dim, 768u);
}

TEST(EncoderConfig, Validation) {
  auto c = tiny_config(20);
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.max_len = 361;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.num_codes = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.dropout = 0.1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(PrepareThreadInput, ReverseChronologicalWithBoundaries) {
  const auto d = make_dialogue("d", {"a", "b", "c"});
  const Tokenizer tok({"a", "b", "c", "x"});
  const auto ids = prepare_thread_input({1, 3}, d, tok).ids;
  EXPECT_EQ(ids, (std::vector<TokenId>{Tokenizer::kBoundary, *tok.id("c"), *tok.id("a"), Tokenizer::kBoundary}));
  const auto single = make_dialogue("s", {"x"});
  EXPECT_EQ(prepare_thread_input({1}, single, tok).ids,
            (std::vector<TokenId>{Tokenizer::kBoundary, *tok.id("x"), Tokenizer::kBoundary}));
}

TEST(PrepareThreadInput, LongThreadKeepsMostRecentTokens) {
  // Four 100-token turns; the oldest 40 tokens fall out of the window.
  std::vector<std::string> texts;
  std::vector<std::string> vocab;
  for (int t = 0; t < 4; ++t) {
    std::string text;
    for (int i = 0; i < 100; ++i) {
      const std::string w = "t" + std::to_string(t) + "w" + std::to_string(i);
      vocab.push_back(w);
      text += (i ? " " : "") + w;
    }
    texts.push_back(text);
  }
  const Tokenizer tok(vocab);
  const auto ids = prepare_thread_input({1, 2, 3, 4}, make_dialogue("long", texts), tok).ids;
  ASSERT_EQ(ids.size(), 362u);
  EXPECT_EQ(ids.front(), Tokenizer::kBoundary);
  EXPECT_EQ(ids.back(), Tokenizer::kBoundary);
  EXPECT_EQ(ids[1], *tok.id("t3w0"));  // newest turn first
  EXPECT_EQ(ids[301], *tok.id("t0w40"));  // oldest turn, first surviving token
  EXPECT_EQ(ids[360], *tok.id("t0w99"));
  for (TokenId id : ids) EXPECT_NE(id, *tok.id("t0w39"));
}

TEST(PrepareCandidateInput, TruncatesHead) {
  std::string text;
  std::vector<std::string> vocab;
  for (int i = 0; i < 100; ++i) {
    vocab.push_back("w" + std::to_string(i));
    text += " w" + std::to_string(i);
  }
  const Tokenizer tok(vocab);
  const auto ids = prepare_candidate_input(tok, text).ids;
  ASSERT_EQ(ids.size(), 74u);
  EXPECT_EQ(ids[1], *tok.id("w0"));
  EXPECT_EQ(ids[72], *tok.id("w71"));
}

TEST(Encode, ShapeAndDeterminism) {
  const auto config = tiny_config(30);
  std::mt19937_64 rng(1);
  const auto params = init_encoder(config, false, "enc", rng);
  const auto input = random_tokens(9, 30, rng);
  const Matrix a = encode(config, params, input);
  EXPECT_EQ(a.rows(), 9);
  EXPECT_EQ(a.cols(), 8);
  EXPECT_EQ(a, encode(config, params, input));
}

TEST(Encode, PositionsBreakPermutationSymmetry) {
  const auto config = tiny_config(30);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    const auto params = init_encoder(config, false, "enc", rng);
    auto input = random_tokens(6, 30, rng);
    input.ids[2] = 5;
    input.ids[4] = 9;
    auto swapped = input;
    std::swap(swapped.ids[2], swapped.ids[4]);
    const Matrix a = encode(config, params, input);
    const Matrix b = encode(config, params, swapped);
    // Row i of the swapped input should differ from the permuted row of the original.
    EXPECT_FALSE(a.row(2).isApprox(b.row(4), 1e-12));
  }
}

TEST(Encode, RejectsOverlongAndEmpty) {
  const auto config = tiny_config(30);
  std::mt19937_64 rng(1);
  const auto params = init_encoder(config, false, "enc", rng);
  EXPECT_THROW(encode(config, params, random_tokens(config.max_len + 1, 30, rng)), ShapeError);
  EXPECT_THROW(encode(config, params, TokenSequence{}), ShapeError);
  EXPECT_NO_THROW(encode(config, params, random_tokens(config.max_len, 30, rng)));
}

TEST(Encode, GradientsPassCheck) {
  const auto config = tiny_config(12);
  std::mt19937_64 rng(2);
  auto params = init_encoder(config, false, "enc", rng);
  const auto input = random_tokens(5, 12, rng);
  const Matrix projection = random_matrix(5, 8, rng);
  const LossClosure loss = [&](bool with_gradients) {
    Graph g;
    const Var out = encode(g, config, params, input);
    const double total = g.value(out).cwiseProduct(projection).sum();
    if (with_gradients) g.backward(out, projection);
    return total;
  };
  const auto result = grad_check(loss, params.parameters());
  EXPECT_LT(result.max_relative_error, 1e-4);
  EXPECT_GT(result.nonzero, 200u);
}

TEST(AggregateAverage, Examples) {
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  const RowVector avg = aggregate_average(m);
  EXPECT_DOUBLE_EQ(avg(0), 2.0);
  EXPECT_DOUBLE_EQ(avg(1), 3.0);
  const Matrix one = m.topRows(1);
  EXPECT_EQ(RowVector(aggregate_average(one)), RowVector(one.row(0)));
  Matrix same(3, 2);
  same << 0.1, 0.7, 0.1, 0.7, 0.1, 0.7;
  EXPECT_TRUE(aggregate_average(same).isApprox(same.row(0), 1e-15));
  EXPECT_THROW(aggregate_average(Matrix(0, 2)), ShapeError);
}

TEST(AggregateCodes, HandSoftmax) {
  Matrix rows(2, 2);
  rows << 1, 0, 0, 1;
  Matrix code(1, 2);
  code << 1, 0;
  const Matrix out = aggregate_codes(rows, code);
  const double e = std::exp(1.0);
  EXPECT_NEAR(out(0, 0), e / (e + 1.0), 1e-12);
  EXPECT_NEAR(out(0, 1), 1.0 / (e + 1.0), 1e-12);
  EXPECT_NEAR(out(0, 0), 0.7311, 1e-4);
  EXPECT_NEAR(out(0, 1), 0.2689, 1e-4);
}

TEST(AggregateCodes, SingleRowAndShape) {
  std::mt19937_64 rng(6);
  const Matrix row = random_matrix(1, 5, rng);
  const Matrix codes = random_matrix(4, 5, rng);
  const Matrix out = aggregate_codes(row, codes);
  ASSERT_EQ(out.rows(), 4);
  ASSERT_EQ(out.cols(), 5);
  for (int k = 0; k < 4; ++k) EXPECT_TRUE(out.row(k).isApprox(row.row(0), 1e-15));
  EXPECT_THROW(aggregate_codes(Matrix(0, 5), codes), ShapeError);
}

TEST(AggregateCodes, WeightRowsSumToOne) {
  std::mt19937_64 rng(7);
  const Matrix rows = random_matrix(9, 6, rng);
  const Matrix codes = random_matrix(3, 6, rng);
  const Matrix weights = softmax_rows(codes * rows.transpose());
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(weights.row(k).sum(), 1.0, 1e-9);
}

TEST(AggregateCodes, ZeroCodeEqualsAverageBitwise) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix rows = random_matrix(1 + static_cast<Eigen::Index>(rng() % 40), 16, rng);
    const Matrix coded = aggregate_codes(rows, Matrix::Zero(1, 16));
    const RowVector averaged = aggregate_average(rows);
    ASSERT_EQ(coded.cols(), averaged.cols());
    for (Eigen::Index c = 0; c < coded.cols(); ++c) ASSERT_EQ(coded(0, c), averaged(c)) << "trial " << trial;
  }
}

TEST(EmbedCandidate, DeterministicAndDistinct) {
  const auto config = tiny_config(40);
  std::mt19937_64 rng(3);
  std::vector<std::string> vocab;
  for (int i = 0; i < 37; ++i) vocab.push_back("w" + std::to_string(i));
  const Tokenizer tok(vocab);
  const auto params = init_encoder(config, false, "cand", rng);
  std::vector<RowVector> embeddings;
  for (int i = 0; i < 5; ++i) {
    const std::string text = "w" + std::to_string(i) + " w" + std::to_string(i * 3 + 1);
    const RowVector e = embed_candidate(config, params, text, tok);
    EXPECT_EQ(e.cols(), 8);
    EXPECT_EQ(e, embed_candidate(config, params, text, tok));
    embeddings.push_back(e);
  }
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    for (std::size_t j = i + 1; j < embeddings.size(); ++j) distinct += embeddings[i] != embeddings[j];
  }
  EXPECT_EQ(distinct, 10u);
}

TEST(ThreadEncoderModel, EncodersShareNoParameters) {
  auto config = tiny_config(20);
  config.num_codes = 3;
  const auto model = ThreadEncoderModel::create(config, 5);
  std::set<const Parameter*> thread_params;
  std::set<std::string> names;
  for (const auto* p : model.thread_encoder.parameters()) {
    thread_params.insert(p);
    names.insert(p->name);
  }
  for (const auto* p : model.candidate_encoder.parameters()) {
    EXPECT_EQ(thread_params.count(p), 0u);
    EXPECT_EQ(names.count(p->name), 0u) << p->name;
    EXPECT_EQ(p->name.rfind("candidate.", 0), 0u);
  }
  EXPECT_EQ(model.thread_encoder.codes.value.rows(), 3);
  EXPECT_EQ(model.candidate_encoder.codes.value.size(), 0);
}
