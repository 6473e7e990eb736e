#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "threadsel/corpus.hpp"
#include "threadsel/dependency.hpp"
#include "threadsel/extraction.hpp"

namespace threadsel {

enum class DistractorPolicy {
  // Distractors continue topics that do not occur in the dialogue.
  kAbsentTopics,
  // Distractors first continue the other active threads, then absent topics.
  kActiveTopics,
};

DistractorPolicy parse_distractor_policy(std::string_view name);
std::string to_string(DistractorPolicy policy);

// Interleaved-topic dialogues. Every thread draws its words from its own
// topic vocabulary. All threads interleave over a head segment; afterwards
// only the non-target threads keep talking for `tail_turns` turns each. The
// correct response continues the least recently active thread.
struct SyntheticSpec {
  std::size_t num_dialogues = 100;
  std::size_t threads = 3;
  std::size_t head_turns_min = 3;
  std::size_t head_turns_max = 5;
  std::size_t tail_turns_min = 0;
  std::size_t tail_turns_max = 0;
  std::size_t tokens_per_turn_min = 6;
  std::size_t tokens_per_turn_max = 10;
  std::size_t num_topics = 20;
  std::size_t topic_vocab = 50;
  std::size_t pool_size = 10;
  DistractorPolicy distractors = DistractorPolicy::kAbsentTopics;
  std::string id_prefix = "syn";

  void validate() const;
};

struct SyntheticCorpus {
  std::vector<Dialogue> dialogues;
  ForestMap forests;  // gold reply-to edges, confidence 1.0
  // Per dialogue: the construction threads (chronological turn lists) and
  // the index of the thread the correct response continues.
  std::vector<std::vector<Thread>> threads;
  std::vector<std::size_t> target_thread;
  std::vector<std::size_t> topics_of_target;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Gold forest for a turn -> thread assignment (0-based thread ids): each turn
// replies to the previous turn of its own thread.
DependencyForest gold_forest(const std::vector<std::size_t>& thread_of_turn);

std::string topic_word(std::size_t topic, std::size_t word);

}  // namespace threadsel
