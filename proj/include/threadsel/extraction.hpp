#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "threadsel/corpus.hpp"
#include "threadsel/dependency.hpp"

namespace threadsel {

enum class ThreadMode { kDependency, kDistance, kFullHistory };

std::string to_string(ThreadMode mode);
// Accepts "dep-extr", "dist-seg" and "full-hty".
ThreadMode parse_thread_mode(std::string_view name);

// Strictly increasing turn indices.
using Thread = std::vector<TurnIndex>;

// Threads ordered most recent first: a larger final turn index comes earlier.
struct ThreadSet {
  std::vector<Thread> threads;
  ThreadMode source = ThreadMode::kDependency;

  std::size_t size() const { return threads.size(); }
  friend bool operator==(const ThreadSet&, const ThreadSet&) = default;
};

struct ExtractionConfig {
  double threshold = 0.2;
  std::size_t max_threads = 4;

  void validate() const;
};

// Prunes edges with confidence below the threshold, turns every leaf of the
// remaining forest into its leaf-to-root path, orders by leaf descending and
// keeps the first max_threads paths.
ThreadSet extract_threads(const DependencyForest& forest, const ExtractionConfig& config);

// Chunks of ceil(n/M) consecutive turns, cut from the most recent turn backward.
ThreadSet dist_seg(std::size_t n, std::size_t max_threads);

ThreadSet full_history(std::size_t n);

// Dispatches on mode. Dependency mode falls back to chain_parser when
// `forest` is null.
ThreadSet build_threads(ThreadMode mode, std::size_t n, const DependencyForest* forest,
                        const ExtractionConfig& config);

struct ThreadStats {
  double avg_thd = 0.0;
  double avg_turn = 0.0;
  double std_turn = 0.0;
  std::size_t dialogues = 0;
  // Percentage of dialogues with exactly k threads, k = 1..M.
  std::map<std::size_t, double> thd_distribution;
};

ThreadStats thread_stats(std::span<const ThreadSet> thread_sets, std::size_t max_threads);

std::string format_stats_table(const ThreadStats& stats, const std::string& label = "corpus");

}  // namespace threadsel
