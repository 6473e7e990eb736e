#include "threadsel/model.hpp"

#include <random>

#include "threadsel/matching.hpp"

namespace threadsel {

ThreadEncoderModel ThreadEncoderModel::create(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ThreadEncoderModel model;
  model.config = config;
  model.thread_encoder = init_encoder(config, /*with_codes=*/true, "thread", rng);
  model.candidate_encoder = init_encoder(config, /*with_codes=*/false, "candidate", rng);
  return model;
}

Var ThreadEncoderModel::context_embedding(Graph& g, std::span<const TokenSequence> thread_inputs) const {
  std::vector<Var> blocks;
  blocks.reserve(thread_inputs.size());
  for (const auto& input : thread_inputs) {
    const Var tokens = encode(g, config, thread_encoder, input);
    blocks.push_back(uses_codes() ? aggregate_codes(g, tokens, g.param(thread_encoder.codes))
                                  : aggregate_average(g, tokens));
  }
  return blocks.size() == 1 ? blocks.front() : ops::concat_rows(g, blocks);
}

Var ThreadEncoderModel::candidate_embedding(Graph& g, const TokenSequence& candidate_input) const {
  return aggregate_average(g, encode(g, config, candidate_encoder, candidate_input));
}

Matrix ThreadEncoderModel::context_embedding(std::span<const TokenSequence> thread_inputs) const {
  Graph g;
  return g.value(context_embedding(g, thread_inputs));
}

RowVector ThreadEncoderModel::candidate_embedding(const TokenSequence& candidate_input) const {
  Graph g;
  return g.value(candidate_embedding(g, candidate_input));
}

std::vector<Parameter*> ThreadEncoderModel::parameters() {
  auto out = thread_encoder.parameters();
  for (auto* p : candidate_encoder.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> ThreadEncoderModel::parameters() const {
  auto out = thread_encoder.parameters();
  for (const auto* p : candidate_encoder.parameters()) out.push_back(p);
  return out;
}

ExampleInputs prepare_example(const Dialogue& dialogue, const ThreadSet& threads, const Tokenizer& tokenizer) {
  ExampleInputs inputs;
  for (const auto& thread : threads.threads) inputs.threads.push_back(prepare_thread_input(thread, dialogue, tokenizer));
  for (const auto& candidate : dialogue.candidates) {
    inputs.candidates.push_back(prepare_candidate_input(tokenizer, candidate));
  }
  inputs.label = dialogue.label.value_or(0);
  return inputs;
}

std::vector<double> score_candidates(const ThreadEncoderModel& model, const ExampleInputs& inputs) {
  const Matrix context = model.context_embedding(inputs.threads);
  std::vector<double> scores;
  scores.reserve(inputs.candidates.size());
  for (const auto& candidate : inputs.candidates) {
    scores.push_back(match_score(context, model.candidate_embedding(candidate)).score);
  }
  return scores;
}

}  // namespace threadsel
