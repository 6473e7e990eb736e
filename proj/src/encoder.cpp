#include "threadsel/encoder.hpp"

#include <cmath>

#include "threadsel/error.hpp"

namespace threadsel {

EncoderConfig EncoderConfig::desk() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::paper_scale() {
  EncoderConfig config;
  config.layers = 12;
  config.heads = 12;
  config.dim = 768;
  config.ffn_dim = 3072;
  config.max_len = 512;
  return config;
}

void EncoderConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder needs at least one layer");
  if (heads < 1 || dim % heads != 0) throw ConfigError("dim must be divisible by heads");
  if (ffn_dim < 1) throw ConfigError("ffn_dim must be positive");
  if (max_len < kThreadTokenLimit + 2) {
    throw ConfigError("max_len must be at least " + std::to_string(kThreadTokenLimit + 2));
  }
  if (vocab_size <= Tokenizer::kNumSpecials) throw ConfigError("vocab_size must exceed the special tokens");
  if (num_codes < 1) throw ConfigError("num_codes must be at least 1");
  if (dropout != 0.0) throw ConfigError("dropout is not supported; it must be 0");
}

namespace {

Matrix normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 0.02);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix zeros(std::size_t rows, std::size_t cols) {
  return Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Matrix ones(std::size_t rows, std::size_t cols) {
  return Matrix::Ones(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename Self, typename Out>
void collect(Self& params, Out& out) {
  out.push_back(&params.token_embedding);
  out.push_back(&params.position_embedding);
  out.push_back(&params.embedding_norm_gain);
  out.push_back(&params.embedding_norm_bias);
  for (auto& layer : params.layers) {
    for (auto* p : {&layer.query_weight, &layer.query_bias, &layer.key_weight, &layer.key_bias,
                    &layer.value_weight, &layer.value_bias, &layer.output_weight, &layer.output_bias,
                    &layer.attention_norm_gain, &layer.attention_norm_bias, &layer.ffn_in_weight,
                    &layer.ffn_in_bias, &layer.ffn_out_weight, &layer.ffn_out_bias, &layer.ffn_norm_gain,
                    &layer.ffn_norm_bias}) {
      out.push_back(p);
    }
  }
  if (params.codes.size() > 0) out.push_back(&params.codes);
}

Var linear(Graph& g, Var x, const Parameter& weight, const Parameter& bias) {
  return ops::add_row(g, ops::matmul(g, x, g.param(weight)), g.param(bias));
}

}  // namespace

std::vector<Parameter*> EncoderParams::parameters() {
  std::vector<Parameter*> out;
  collect(*this, out);
  return out;
}

std::vector<const Parameter*> EncoderParams::parameters() const {
  std::vector<const Parameter*> out;
  collect(*this, out);
  return out;
}

EncoderParams init_encoder(const EncoderConfig& config, bool with_codes, const std::string& prefix,
                           std::mt19937_64& rng) {
  config.validate();
  const std::size_t d = config.dim;
  EncoderParams p;
  p.token_embedding = Parameter(prefix + ".token_embedding", normal(config.vocab_size, d, rng));
  p.position_embedding = Parameter(prefix + ".position_embedding", normal(config.max_len, d, rng));
  p.embedding_norm_gain = Parameter(prefix + ".embedding_norm.gain", ones(1, d));
  p.embedding_norm_bias = Parameter(prefix + ".embedding_norm.bias", zeros(1, d));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string name = prefix + ".layer" + std::to_string(l);
    EncoderLayerParams layer;
    layer.query_weight = Parameter(name + ".query.weight", normal(d, d, rng));
    layer.query_bias = Parameter(name + ".query.bias", zeros(1, d));
    layer.key_weight = Parameter(name + ".key.weight", normal(d, d, rng));
    layer.key_bias = Parameter(name + ".key.bias", zeros(1, d));
    layer.value_weight = Parameter(name + ".value.weight", normal(d, d, rng));
    layer.value_bias = Parameter(name + ".value.bias", zeros(1, d));
    layer.output_weight = Parameter(name + ".output.weight", normal(d, d, rng));
    layer.output_bias = Parameter(name + ".output.bias", zeros(1, d));
    layer.attention_norm_gain = Parameter(name + ".attention_norm.gain", ones(1, d));
    layer.attention_norm_bias = Parameter(name + ".attention_norm.bias", zeros(1, d));
    layer.ffn_in_weight = Parameter(name + ".ffn_in.weight", normal(d, config.ffn_dim, rng));
    layer.ffn_in_bias = Parameter(name + ".ffn_in.bias", zeros(1, config.ffn_dim));
    layer.ffn_out_weight = Parameter(name + ".ffn_out.weight", normal(config.ffn_dim, d, rng));
    layer.ffn_out_bias = Parameter(name + ".ffn_out.bias", zeros(1, d));
    layer.ffn_norm_gain = Parameter(name + ".ffn_norm.gain", ones(1, d));
    layer.ffn_norm_bias = Parameter(name + ".ffn_norm.bias", zeros(1, d));
    p.layers.push_back(std::move(layer));
  }
  if (with_codes && config.num_codes > 1) {
    p.codes = Parameter(prefix + ".codes", normal(config.num_codes, d, rng));
  }
  return p;
}

TokenSequence prepare_thread_input(const Thread& thread, const Dialogue& dialogue, const Tokenizer& tokenizer) {
  std::vector<std::size_t> lengths;
  TokenSequence chronological;
  for (TurnIndex index : thread) {
    if (index < 1 || index > dialogue.num_turns()) {
      throw DataError("dialogue " + dialogue.id + ": thread references turn " + std::to_string(index));
    }
    auto tokens = tokenizer.encode(dialogue.turn(index).text);
    lengths.push_back(tokens.size());
    chronological.ids.insert(chronological.ids.end(), tokens.ids.begin(), tokens.ids.end());
  }
  const TokenSequence kept = truncate_thread(chronological);
  std::size_t dropped = chronological.size() - kept.size();

  // Re-split the retained tail into turns and emit them newest first.
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // [begin, end) into kept
  std::size_t offset = 0;
  for (std::size_t len : lengths) {
    const std::size_t skip = std::min(dropped, len);
    dropped -= skip;
    spans.emplace_back(offset, offset + len - skip);
    offset += len - skip;
  }
  TokenSequence out;
  out.ids.reserve(kept.size() + 2);
  out.ids.push_back(Tokenizer::kBoundary);
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    out.ids.insert(out.ids.end(), kept.ids.begin() + static_cast<std::ptrdiff_t>(it->first),
                   kept.ids.begin() + static_cast<std::ptrdiff_t>(it->second));
  }
  out.ids.push_back(Tokenizer::kBoundary);
  return out;
}

TokenSequence prepare_candidate_input(const Tokenizer& tokenizer, std::string_view text) {
  const TokenSequence body = truncate_candidate(tokenizer.encode(text));
  TokenSequence out;
  out.ids.reserve(body.size() + 2);
  out.ids.push_back(Tokenizer::kBoundary);
  out.ids.insert(out.ids.end(), body.ids.begin(), body.ids.end());
  out.ids.push_back(Tokenizer::kBoundary);
  return out;
}

Var encode(Graph& g, const EncoderConfig& config, const EncoderParams& params, const TokenSequence& input) {
  if (input.empty()) throw ShapeError("encode: empty input");
  if (input.size() > config.max_len) {
    throw ShapeError("encode: input length " + std::to_string(input.size()) + " exceeds max_len " +
                     std::to_string(config.max_len));
  }
  const std::size_t head_dim = config.dim / config.heads;
  const double attention_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var x = ops::add(g, ops::embedding_lookup(g, g.param(params.token_embedding), input.ids),
                   ops::take_rows(g, g.param(params.position_embedding), input.size()));
  x = ops::layer_norm(g, x, g.param(params.embedding_norm_gain), g.param(params.embedding_norm_bias));

  for (const auto& layer : params.layers) {
    const Var q = ops::scale(g, linear(g, x, layer.query_weight, layer.query_bias), attention_scale);
    const Var k = linear(g, x, layer.key_weight, layer.key_bias);
    const Var v = linear(g, x, layer.value_weight, layer.value_bias);
    std::vector<Var> heads;
    heads.reserve(config.heads);
    for (std::size_t h = 0; h < config.heads; ++h) {
      const std::size_t start = h * head_dim;
      const Var qh = ops::slice_cols(g, q, start, head_dim);
      const Var kh = ops::slice_cols(g, k, start, head_dim);
      const Var vh = ops::slice_cols(g, v, start, head_dim);
      const Var probs = ops::softmax_rows(g, ops::matmul(g, qh, ops::transpose(g, kh)));
      heads.push_back(ops::matmul(g, probs, vh));
    }
    const Var attended = linear(g, ops::concat_cols(g, heads), layer.output_weight, layer.output_bias);
    x = ops::layer_norm(g, ops::add(g, x, attended), g.param(layer.attention_norm_gain),
                        g.param(layer.attention_norm_bias));
    const Var hidden = ops::gelu(g, linear(g, x, layer.ffn_in_weight, layer.ffn_in_bias));
    const Var projected = linear(g, hidden, layer.ffn_out_weight, layer.ffn_out_bias);
    x = ops::layer_norm(g, ops::add(g, x, projected), g.param(layer.ffn_norm_gain), g.param(layer.ffn_norm_bias));
  }
  return x;
}

Matrix encode(const EncoderConfig& config, const EncoderParams& params, const TokenSequence& input) {
  Graph g;
  return g.value(encode(g, config, params, input));
}

Var aggregate_average(Graph& g, Var vectors) {
  if (g.value(vectors).rows() == 0) throw ShapeError("aggregate_average: empty matrix");
  return ops::mean(g, vectors, 0);
}

Var aggregate_codes(Graph& g, Var vectors, Var codes) {
  const Matrix& rows = g.value(vectors);
  const Matrix& cv = g.value(codes);
  if (rows.rows() == 0) throw ShapeError("aggregate_codes: empty matrix");
  if (cv.cols() != rows.cols()) {
    throw ShapeError("aggregate_codes: codes " + shape_string(cv) + " do not match vectors " + shape_string(rows));
  }
  const Var weights = ops::softmax_rows(g, ops::matmul(g, codes, ops::transpose(g, vectors)));
  return ops::weighted_row_sum(g, weights, vectors);
}

RowVector aggregate_average(const Matrix& vectors) {
  Graph g;
  return g.value(aggregate_average(g, g.constant(vectors)));
}

Matrix aggregate_codes(const Matrix& vectors, const Matrix& codes) {
  Graph g;
  return g.value(aggregate_codes(g, g.constant(vectors), g.constant(codes)));
}

RowVector embed_candidate(const EncoderConfig& config, const EncoderParams& candidate_encoder,
                          std::string_view text, const Tokenizer& tokenizer) {
  Graph g;
  const Var tokens = encode(g, config, candidate_encoder, prepare_candidate_input(tokenizer, text));
  return g.value(aggregate_average(g, tokens));
}

}  // namespace threadsel
