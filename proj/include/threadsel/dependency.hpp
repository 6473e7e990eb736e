#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "threadsel/corpus.hpp"

namespace threadsel {

// "child replies to parent" with the parser's confidence.
struct DependencyEdge {
  TurnIndex child = 0;
  TurnIndex parent = 0;
  double confidence = 0.0;

  friend bool operator==(const DependencyEdge&, const DependencyEdge&) = default;
};

// Validated reply-to forest over turns 1..n. A turn without an edge is a root.
class DependencyForest {
 public:
  DependencyForest() = default;

  std::size_t size() const { return n_; }
  // Edges ordered by child index.
  const std::vector<DependencyEdge>& edges() const { return edges_; }
  const DependencyEdge* parent_edge(TurnIndex child) const;

  friend bool operator==(const DependencyForest&, const DependencyForest&) = default;

 private:
  friend DependencyForest validate_forest(std::size_t n, std::vector<DependencyEdge> edges);

  std::size_t n_ = 0;
  std::vector<DependencyEdge> edges_;
};

using ForestMap = std::map<std::string, DependencyForest>;

DependencyForest validate_forest(std::size_t n, std::vector<DependencyEdge> edges);

// For every child with several parents, keeps only the edge to the latest parent.
std::vector<DependencyEdge> resolve_nearest_parent(std::vector<DependencyEdge> edges);

ForestMap parse_edges(std::string_view jsonl, bool resolve_multi_parents = false,
                      const std::string& source = "<memory>");
ForestMap load_edges(const std::filesystem::path& path, bool resolve_multi_parents = false);
std::string serialize_forest(const std::string& dialogue_id, const DependencyForest& forest);
void save_edges(const ForestMap& forests, const std::filesystem::path& path);

// Fallback parser: every turn replies to the one before it.
DependencyForest chain_parser(std::size_t n);
inline DependencyForest chain_parser(const Dialogue& dialogue) { return chain_parser(dialogue.num_turns()); }

// Keeps turns 1..n and the edges among them.
DependencyForest restrict_forest(const DependencyForest& forest, std::size_t n);

}  // namespace threadsel
