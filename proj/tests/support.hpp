#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "threadsel/corpus.hpp"
#include "threadsel/dependency.hpp"
#include "threadsel/extraction.hpp"

namespace threadsel::testing {

// Brute-force thread enumeration written independently of extract_threads:
// build the kept parent array, then for every node test whether anything
// points at it, and walk every leaf to its root.
inline std::vector<Thread> brute_force_threads(std::size_t n, const std::vector<DependencyEdge>& edges,
                                               double threshold, std::size_t max_threads) {
  std::vector<std::size_t> parent(n + 1, 0);
  for (const auto& e : edges) {
    if (!(e.confidence < threshold)) parent[e.child] = e.parent;
  }
  std::vector<Thread> paths;
  for (std::size_t node = 1; node <= n; ++node) {
    bool has_child = false;
    for (std::size_t other = 1; other <= n; ++other) has_child = has_child || parent[other] == node;
    if (has_child) continue;
    Thread path;
    for (std::size_t cur = node; cur != 0; cur = parent[cur]) path.insert(path.begin(), cur);
    paths.push_back(path);
  }
  std::sort(paths.begin(), paths.end(), [](const Thread& a, const Thread& b) { return a.back() > b.back(); });
  if (paths.size() > max_threads) paths.resize(max_threads);
  return paths;
}

// Random forest with n turns: each turn after the first gets a parent with
// probability 0.8 and a confidence drawn from a small grid that includes the
// threshold values themselves.
inline std::vector<DependencyEdge> random_edges(std::size_t n, std::mt19937_64& rng) {
  static const double grid[] = {0.0, 0.1, 0.2, 0.35, 0.5, 0.7, 0.9, 1.0};
  std::vector<DependencyEdge> edges;
  std::bernoulli_distribution has_parent(0.8);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(grid) - 1);
  for (std::size_t child = 2; child <= n; ++child) {
    if (!has_parent(rng)) continue;
    const std::size_t parent = std::uniform_int_distribution<std::size_t>(1, child - 1)(rng);
    edges.push_back({child, parent, grid[pick(rng)]});
  }
  return edges;
}

// The 7-turn forest from the extraction example.
inline DependencyForest seven_turn_forest() {
  return validate_forest(7, {{2, 1, 0.9}, {3, 1, 0.1}, {4, 3, 0.8}, {5, 2, 0.5}, {6, 4, 0.9}, {7, 5, 0.3}});
}

inline Dialogue make_dialogue(const std::string& id, const std::vector<std::string>& texts,
                              std::vector<std::string> candidates = {"ok"}, std::optional<std::size_t> label = 0) {
  Dialogue d;
  d.id = id;
  for (std::size_t i = 0; i < texts.size(); ++i) d.turns.push_back({i + 1, "s" + std::to_string(i % 2), texts[i]});
  d.candidates = std::move(candidates);
  d.label = label;
  return d;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("threadsel-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace threadsel::testing
