#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "threadsel/autodiff.hpp"
#include "threadsel/encoder.hpp"

namespace threadsel {

// Thread encoder T1 (with optional codes) and an independent candidate encoder T2.
struct ThreadEncoderModel {
  EncoderConfig config;
  EncoderParams thread_encoder;
  EncoderParams candidate_encoder;

  static ThreadEncoderModel create(const EncoderConfig& config, std::uint64_t seed);

  bool uses_codes() const { return config.num_codes > 1; }

  // (M * K) x d context vectors, one block of K rows per thread.
  Var context_embedding(Graph& g, std::span<const TokenSequence> thread_inputs) const;
  // 1 x d candidate vector.
  Var candidate_embedding(Graph& g, const TokenSequence& candidate_input) const;

  Matrix context_embedding(std::span<const TokenSequence> thread_inputs) const;
  RowVector candidate_embedding(const TokenSequence& candidate_input) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

// Prepared encoder inputs of one example.
struct ExampleInputs {
  std::vector<TokenSequence> threads;
  std::vector<TokenSequence> candidates;
  std::size_t label = 0;
};

ExampleInputs prepare_example(const Dialogue& dialogue, const ThreadSet& threads, const Tokenizer& tokenizer);

// Raw matching scores of every candidate against the context.
std::vector<double> score_candidates(const ThreadEncoderModel& model, const ExampleInputs& inputs);

}  // namespace threadsel
