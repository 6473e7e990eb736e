#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "threadsel/autodiff.hpp"
#include "threadsel/corpus.hpp"
#include "threadsel/extraction.hpp"
#include "threadsel/tensor.hpp"

namespace threadsel {

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t dim = 64;
  std::size_t ffn_dim = 256;
  // Must host a truncated thread plus two boundary tokens.
  std::size_t max_len = kThreadTokenLimit + 2;
  std::size_t vocab_size = 0;
  // 1 selects average pooling over thread tokens (Thread-bi); K > 1 selects
  // attention pooling with K learned codes (Thread-poly).
  std::size_t num_codes = 1;
  double dropout = 0.0;

  static EncoderConfig desk();
  static EncoderConfig paper_scale();
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncoderLayerParams {
  Parameter query_weight, query_bias;
  Parameter key_weight, key_bias;
  Parameter value_weight, value_bias;
  Parameter output_weight, output_bias;
  Parameter attention_norm_gain, attention_norm_bias;
  Parameter ffn_in_weight, ffn_in_bias;
  Parameter ffn_out_weight, ffn_out_bias;
  Parameter ffn_norm_gain, ffn_norm_bias;
};

// Post-norm transformer stack with learned token and position embeddings.
// `codes` is K x d for a Thread-poly thread encoder and empty otherwise.
struct EncoderParams {
  Parameter token_embedding;
  Parameter position_embedding;
  Parameter embedding_norm_gain, embedding_norm_bias;
  std::vector<EncoderLayerParams> layers;
  Parameter codes;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

// Weights ~ N(0, 0.02^2), biases 0, layer-norm gain 1. Codes are created only
// when `with_codes` and config.num_codes > 1.
EncoderParams init_encoder(const EncoderConfig& config, bool with_codes, const std::string& prefix,
                           std::mt19937_64& rng);

// Turns of the thread, most recent first, restricted to the most recent
// kThreadTokenLimit tokens of the thread and wrapped in [S] ... [S].
TokenSequence prepare_thread_input(const Thread& thread, const Dialogue& dialogue, const Tokenizer& tokenizer);
// Head of the response wrapped in [S] ... [S].
TokenSequence prepare_candidate_input(const Tokenizer& tokenizer, std::string_view text);

// Returns the T x d contextual token matrix.
Var encode(Graph& g, const EncoderConfig& config, const EncoderParams& params, const TokenSequence& input);
Matrix encode(const EncoderConfig& config, const EncoderParams& params, const TokenSequence& input);

Var aggregate_average(Graph& g, Var vectors);
// One attention-pooled row per code: softmax over rows of (code . row).
Var aggregate_codes(Graph& g, Var vectors, Var codes);
RowVector aggregate_average(const Matrix& vectors);
Matrix aggregate_codes(const Matrix& vectors, const Matrix& codes);

RowVector embed_candidate(const EncoderConfig& config, const EncoderParams& candidate_encoder,
                          std::string_view text, const Tokenizer& tokenizer);

}  // namespace threadsel
