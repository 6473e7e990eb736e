#include "threadsel/eval.hpp"

#include <algorithm>
#include <exception>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "threadsel/error.hpp"

namespace threadsel {

namespace {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < count; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

RankingResult rank_by_scores(const std::string& dialogue_id, std::span<const double> scores, std::size_t label) {
  if (label >= scores.size()) throw DataError("dialogue " + dialogue_id + ": label out of range");
  RankingResult result;
  result.dialogue_id = dialogue_id;
  result.order.resize(scores.size());
  std::iota(result.order.begin(), result.order.end(), 0);
  std::stable_sort(result.order.begin(), result.order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  result.rank = static_cast<std::size_t>(std::find(result.order.begin(), result.order.end(), label) -
                                         result.order.begin()) + 1;
  return result;
}

RankingResult rank_candidates(const ThreadEncoderModel& model, const Tokenizer& tokenizer, const Dialogue& dialogue,
                              const DependencyForest* forest, ThreadMode mode, const ExtractionConfig& config) {
  if (!dialogue.label) {
    throw DataError("dialogue " + dialogue.id + ": missing label (use predict for unlabeled dialogues)");
  }
  const auto threads = build_threads(mode, dialogue.num_turns(), forest, config);
  const auto inputs = prepare_example(dialogue, threads, tokenizer);
  const auto scores = score_candidates(model, inputs);
  return rank_by_scores(dialogue.id, scores, *dialogue.label);
}

double hits_at_k(std::span<const RankingResult> results, std::size_t k) {
  if (results.empty()) throw DataError("hits@k over no results");
  if (k < 1) throw ConfigError("hits@k needs k >= 1");
  const auto hits = std::count_if(results.begin(), results.end(), [k](const auto& r) { return r.rank <= k; });
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double mrr(std::span<const RankingResult> results) {
  if (results.empty()) throw DataError("MRR over no results");
  double sum = 0.0;
  for (const auto& r : results) sum += 1.0 / static_cast<double>(r.rank);
  return sum / static_cast<double>(results.size());
}

MetricsReport compute_metrics(std::span<const RankingResult> results, std::span<const std::size_t> ks) {
  MetricsReport report;
  report.examples = results.size();
  for (auto k : ks) report.hits[k] = hits_at_k(results, k);
  report.mrr = mrr(results);
  return report;
}

std::vector<RankingResult> rank_corpus(const ThreadEncoderModel& model, const Tokenizer& tokenizer,
                                       const std::vector<Dialogue>& dialogues, const ForestMap* forests,
                                       ThreadMode mode, const ExtractionConfig& config, std::size_t workers) {
  std::vector<RankingResult> results(dialogues.size());
  parallel_for(dialogues.size(), workers, [&](std::size_t i) {
    const DependencyForest* forest = nullptr;
    if (forests) {
      auto it = forests->find(dialogues[i].id);
      if (it != forests->end()) forest = &it->second;
    }
    results[i] = rank_candidates(model, tokenizer, dialogues[i], forest, mode, config);
  });
  return results;
}

std::vector<RankingResult> rank_prepared(const ThreadEncoderModel& model, std::span<const ExampleInputs> examples,
                                         std::size_t workers) {
  std::vector<RankingResult> results(examples.size());
  parallel_for(examples.size(), workers, [&](std::size_t i) {
    const auto scores = score_candidates(model, examples[i]);
    results[i] = rank_by_scores(std::to_string(i), scores, examples[i].label);
  });
  return results;
}

std::string format_metrics_table(const MetricsReport& report, const std::string& label) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "model" << std::right;
  for (const auto& [k, v] : report.hits) out << std::setw(10) << ("hits@" + std::to_string(k));
  out << std::setw(10) << "MRR" << std::setw(10) << "N" << '\n';
  out << std::left << std::setw(14) << label << std::right << std::fixed << std::setprecision(2);
  for (const auto& [k, v] : report.hits) out << std::setw(10) << 100.0 * v;
  out << std::setw(10) << 100.0 * report.mrr << std::setw(10) << report.examples << '\n';
  return out.str();
}

}  // namespace threadsel
