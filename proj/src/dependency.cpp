#include "threadsel/dependency.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "threadsel/error.hpp"

namespace threadsel {

const DependencyEdge* DependencyForest::parent_edge(TurnIndex child) const {
  auto it = std::lower_bound(edges_.begin(), edges_.end(), child,
                             [](const DependencyEdge& e, TurnIndex c) { return e.child < c; });
  if (it == edges_.end() || it->child != child) return nullptr;
  return &*it;
}

DependencyForest validate_forest(std::size_t n, std::vector<DependencyEdge> edges) {
  for (const auto& e : edges) {
    if (e.child < 1 || e.child > n || e.parent < 1 || e.parent > n) {
      throw DataError("index out of range: edge " + std::to_string(e.child) + "->" + std::to_string(e.parent) +
                      " with n=" + std::to_string(n));
    }
    if (e.parent >= e.child) {
      throw DataError("forward edge: " + std::to_string(e.child) + "->" + std::to_string(e.parent));
    }
    if (!(e.confidence >= 0.0 && e.confidence <= 1.0)) {
      throw DataError("confidence out of range: " + std::to_string(e.confidence));
    }
  }
  std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) { return a.child < b.child; });
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i].child == edges[i - 1].child) {
      throw DataError("multiple parents for turn " + std::to_string(edges[i].child));
    }
  }
  DependencyForest forest;
  forest.n_ = n;
  forest.edges_ = std::move(edges);
  return forest;
}

std::vector<DependencyEdge> resolve_nearest_parent(std::vector<DependencyEdge> edges) {
  std::stable_sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    if (a.child != b.child) return a.child < b.child;
    return a.parent > b.parent;
  });
  auto last = std::unique(edges.begin(), edges.end(),
                          [](const auto& a, const auto& b) { return a.child == b.child; });
  edges.erase(last, edges.end());
  return edges;
}

ForestMap parse_edges(std::string_view jsonl, bool resolve_multi_parents, const std::string& source) {
  ForestMap forests;
  std::size_t line_number = 0;
  std::size_t start = 0;
  while (start <= jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    ++line_number;
    auto line = jsonl.substr(start, end - start);
    start = end + 1;
    if (std::all_of(line.begin(), line.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
      continue;
    }
    const std::string where = source + ": line " + std::to_string(line_number);
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw DataError(where + ": malformed JSON");
    }
    if (!record.is_object() || !record.contains("dialogue_id") || !record["dialogue_id"].is_string() ||
        !record.contains("n") || !record["n"].is_number_integer() || !record.contains("edges") ||
        !record["edges"].is_array()) {
      throw DataError(where + ": expected {dialogue_id, n, edges}");
    }
    const auto id = record["dialogue_id"].get<std::string>();
    const auto n = record["n"].get<long long>();
    if (n < 1) throw DataError(where + ": dialogue " + id + ": n must be positive");
    std::vector<DependencyEdge> edges;
    for (const auto& e : record["edges"]) {
      if (!e.is_object() || !e.contains("child") || !e.contains("parent") || !e["child"].is_number_integer() ||
          !e["parent"].is_number_integer()) {
        throw DataError(where + ": dialogue " + id + ": edge needs integer child and parent");
      }
      if (!e.contains("confidence") || !e["confidence"].is_number()) {
        throw DataError(where + ": dialogue " + id + ": edge lacks a confidence");
      }
      const auto child = e["child"].get<long long>();
      const auto parent = e["parent"].get<long long>();
      if (child < 1 || parent < 1) {
        throw DataError(where + ": dialogue " + id + ": index out of range");
      }
      edges.push_back({static_cast<TurnIndex>(child), static_cast<TurnIndex>(parent), e["confidence"].get<double>()});
    }
    if (resolve_multi_parents) edges = resolve_nearest_parent(std::move(edges));
    try {
      auto forest = validate_forest(static_cast<std::size_t>(n), std::move(edges));
      if (!forests.emplace(id, std::move(forest)).second) {
        throw DataError("duplicate record");
      }
    } catch (const DataError& e) {
      throw DataError(where + ": dialogue " + id + ": " + e.what());
    }
  }
  return forests;
}

ForestMap load_edges(const std::filesystem::path& path, bool resolve_multi_parents) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open edges file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_edges(buffer.str(), resolve_multi_parents, path.string());
}

std::string serialize_forest(const std::string& dialogue_id, const DependencyForest& forest) {
  nlohmann::ordered_json record;
  record["dialogue_id"] = dialogue_id;
  record["n"] = forest.size();
  record["edges"] = nlohmann::ordered_json::array();
  for (const auto& e : forest.edges()) {
    nlohmann::ordered_json edge;
    edge["child"] = e.child;
    edge["parent"] = e.parent;
    edge["confidence"] = e.confidence;
    record["edges"].push_back(std::move(edge));
  }
  return record.dump();
}

void save_edges(const ForestMap& forests, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write edges file " + path.string());
  for (const auto& [id, forest] : forests) out << serialize_forest(id, forest) << '\n';
}

DependencyForest chain_parser(std::size_t n) {
  if (n < 1) throw DataError("chain parser needs at least one turn");
  std::vector<DependencyEdge> edges;
  for (TurnIndex j = 2; j <= n; ++j) edges.push_back({j, j - 1, 1.0});
  return validate_forest(n, std::move(edges));
}

DependencyForest restrict_forest(const DependencyForest& forest, std::size_t n) {
  std::vector<DependencyEdge> kept;
  for (const auto& e : forest.edges()) {
    if (e.child <= n) kept.push_back(e);
  }
  return validate_forest(std::min(n, forest.size()), std::move(kept));
}

}  // namespace threadsel
