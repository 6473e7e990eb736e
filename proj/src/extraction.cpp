#include "threadsel/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "threadsel/error.hpp"

namespace threadsel {

std::string to_string(ThreadMode mode) {
  switch (mode) {
    case ThreadMode::kDependency:
      return "dep-extr";
    case ThreadMode::kDistance:
      return "dist-seg";
    case ThreadMode::kFullHistory:
      return "full-hty";
  }
  return "unknown";
}

ThreadMode parse_thread_mode(std::string_view name) {
  if (name == "dep-extr") return ThreadMode::kDependency;
  if (name == "dist-seg") return ThreadMode::kDistance;
  if (name == "full-hty") return ThreadMode::kFullHistory;
  throw ConfigError("unknown thread mode \"" + std::string(name) + "\"");
}

void ExtractionConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
  if (max_threads < 1) throw ConfigError("max_threads must be at least 1");
}

ThreadSet extract_threads(const DependencyForest& forest, const ExtractionConfig& config) {
  config.validate();
  const std::size_t n = forest.size();
  // parent[j] == 0 marks a root.
  std::vector<TurnIndex> parent(n + 1, 0);
  std::vector<bool> has_child(n + 1, false);
  for (const auto& e : forest.edges()) {
    if (e.confidence < config.threshold) continue;
    parent[e.child] = e.parent;
    has_child[e.parent] = true;
  }

  ThreadSet out;
  out.source = ThreadMode::kDependency;
  for (TurnIndex leaf = n; leaf >= 1 && out.threads.size() < config.max_threads; --leaf) {
    if (has_child[leaf]) continue;
    Thread path;
    // parent < child, so this walk terminates within n steps.
    for (TurnIndex node = leaf; node != 0; node = parent[node]) path.push_back(node);
    std::reverse(path.begin(), path.end());
    out.threads.push_back(std::move(path));
  }
  return out;
}

ThreadSet dist_seg(std::size_t n, std::size_t max_threads) {
  if (n < 1 || max_threads < 1) throw ConfigError("dist_seg needs n >= 1 and M >= 1");
  const std::size_t chunk = (n + max_threads - 1) / max_threads;
  ThreadSet out;
  out.source = ThreadMode::kDistance;
  for (std::size_t end = n; end >= 1;) {
    const std::size_t begin = end >= chunk ? end - chunk + 1 : 1;
    Thread thread;
    for (TurnIndex t = begin; t <= end; ++t) thread.push_back(t);
    out.threads.push_back(std::move(thread));
    if (begin == 1) break;
    end = begin - 1;
  }
  return out;
}

ThreadSet full_history(std::size_t n) {
  if (n < 1) throw ConfigError("full_history needs n >= 1");
  Thread all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i + 1;
  return ThreadSet{{std::move(all)}, ThreadMode::kFullHistory};
}

ThreadSet build_threads(ThreadMode mode, std::size_t n, const DependencyForest* forest,
                        const ExtractionConfig& config) {
  switch (mode) {
    case ThreadMode::kDependency:
      if (forest) {
        if (forest->size() != n) {
          throw DataError("forest covers " + std::to_string(forest->size()) + " turns but dialogue has " +
                          std::to_string(n));
        }
        return extract_threads(*forest, config);
      }
      return extract_threads(chain_parser(n), config);
    case ThreadMode::kDistance:
      return dist_seg(n, config.max_threads);
    case ThreadMode::kFullHistory:
      return full_history(n);
  }
  throw ConfigError("unknown thread mode");
}

ThreadStats thread_stats(std::span<const ThreadSet> thread_sets, std::size_t max_threads) {
  if (thread_sets.empty()) throw DataError("empty corpus");
  ThreadStats stats;
  stats.dialogues = thread_sets.size();
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t k = 1; k <= max_threads; ++k) counts[k] = 0;
  double sum_thd = 0.0, sum_turn = 0.0, sum_std = 0.0;
  for (const auto& set : thread_sets) {
    const std::size_t m = set.threads.size();
    if (m == 0) throw DataError("thread set without threads");
    if (m > max_threads) throw DataError("thread set exceeds the thread cap");
    ++counts[m];
    sum_thd += static_cast<double>(m);
    double mean = 0.0;
    for (const auto& t : set.threads) mean += static_cast<double>(t.size());
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (const auto& t : set.threads) {
      const double d = static_cast<double>(t.size()) - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    sum_turn += mean;
    sum_std += std::sqrt(var);
  }
  const auto total = static_cast<double>(thread_sets.size());
  stats.avg_thd = sum_thd / total;
  stats.avg_turn = sum_turn / total;
  stats.std_turn = sum_std / total;
  for (const auto& [k, c] : counts) stats.thd_distribution[k] = 100.0 * static_cast<double>(c) / total;
  return stats;
}

std::string format_stats_table(const ThreadStats& stats, const std::string& label) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "dataset" << std::right << std::setw(10) << "avg#thd" << std::setw(10)
      << "avg#turn" << std::setw(10) << "std#turn";
  for (const auto& [k, pct] : stats.thd_distribution) {
    out << std::setw(11) << (std::to_string(k) + "-thd(%)");
  }
  out << '\n' << std::fixed << std::setprecision(2);
  out << std::left << std::setw(12) << label << std::right << std::setw(10) << stats.avg_thd << std::setw(10)
      << stats.avg_turn << std::setw(10) << stats.std_turn;
  for (const auto& [k, pct] : stats.thd_distribution) out << std::setw(11) << pct;
  out << '\n';
  return out.str();
}

}  // namespace threadsel
