#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "threadsel/corpus.hpp"
#include "threadsel/dependency.hpp"
#include "threadsel/extraction.hpp"
#include "threadsel/model.hpp"

namespace threadsel {

struct RankingResult {
  std::string dialogue_id;
  std::size_t rank = 0;  // 1-based rank of the correct candidate
  std::vector<std::size_t> order;  // candidate indices by descending score
};

struct MetricsReport {
  std::map<std::size_t, double> hits;
  double mrr = 0.0;
  std::size_t examples = 0;
};

// Sorts by descending score; equal scores keep the lower candidate index first.
RankingResult rank_by_scores(const std::string& dialogue_id, std::span<const double> scores, std::size_t label);

// Builds threads for `mode` (falling back to chain_parser when no forest is
// given), embeds the context once and scores every candidate.
RankingResult rank_candidates(const ThreadEncoderModel& model, const Tokenizer& tokenizer, const Dialogue& dialogue,
                              const DependencyForest* forest, ThreadMode mode, const ExtractionConfig& config);

double hits_at_k(std::span<const RankingResult> results, std::size_t k);
double mrr(std::span<const RankingResult> results);
MetricsReport compute_metrics(std::span<const RankingResult> results, std::span<const std::size_t> ks);

// Ranks every labeled dialogue, splitting the work over `workers` threads.
// Results are in corpus order and independent of the worker count.
std::vector<RankingResult> rank_corpus(const ThreadEncoderModel& model, const Tokenizer& tokenizer,
                                       const std::vector<Dialogue>& dialogues, const ForestMap* forests,
                                       ThreadMode mode, const ExtractionConfig& config, std::size_t workers = 1);

// Ranks prepared examples; used for validation during training.
std::vector<RankingResult> rank_prepared(const ThreadEncoderModel& model, std::span<const ExampleInputs> examples,
                                         std::size_t workers = 1);

std::string format_metrics_table(const MetricsReport& report, const std::string& label = "model");

}  // namespace threadsel
