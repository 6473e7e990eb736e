#include "threadsel/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>

#include "threadsel/error.hpp"

namespace threadsel {

namespace {

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::string topic_text(std::size_t topic, std::size_t length, const SyntheticSpec& spec, std::mt19937_64& rng) {
  std::string text;
  for (std::size_t i = 0; i < length; ++i) {
    if (i) text += ' ';
    text += topic_word(topic, uniform(rng, 0, spec.topic_vocab - 1));
  }
  return text;
}

}  // namespace

DistractorPolicy parse_distractor_policy(std::string_view name) {
  if (name == "absent") return DistractorPolicy::kAbsentTopics;
  if (name == "active") return DistractorPolicy::kActiveTopics;
  throw ConfigError("unknown distractor policy \"" + std::string(name) + "\"");
}

std::string to_string(DistractorPolicy policy) {
  return policy == DistractorPolicy::kAbsentTopics ? "absent" : "active";
}

void SyntheticSpec::validate() const {
  if (threads < 1) throw ConfigError("synthetic corpus needs at least one thread per dialogue");
  if (threads > num_topics) throw ConfigError("more threads than topics");
  if (head_turns_min < 1 || head_turns_min > head_turns_max) throw ConfigError("bad head turn range");
  if (tail_turns_min > tail_turns_max) throw ConfigError("bad tail turn range");
  if (tokens_per_turn_min < 1 || tokens_per_turn_min > tokens_per_turn_max) throw ConfigError("bad token range");
  if (topic_vocab < 1) throw ConfigError("topic vocabulary must be non-empty");
  if (pool_size < 2) throw ConfigError("candidate pool size must be at least 2");
  if (distractors == DistractorPolicy::kAbsentTopics && num_topics == threads) {
    throw ConfigError("absent-topic distractors need more topics than threads");
  }
}

std::string topic_word(std::size_t topic, std::size_t word) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "t%02zuw%02zu", topic, word);
  return buffer;
}

DependencyForest gold_forest(const std::vector<std::size_t>& thread_of_turn) {
  std::vector<DependencyEdge> edges;
  std::vector<TurnIndex> last_turn;
  for (std::size_t i = 0; i < thread_of_turn.size(); ++i) {
    const std::size_t t = thread_of_turn[i];
    if (t >= last_turn.size()) last_turn.resize(t + 1, 0);
    if (last_turn[t] != 0) edges.push_back({i + 1, last_turn[t], 1.0});
    last_turn[t] = i + 1;
  }
  return validate_forest(thread_of_turn.size(), std::move(edges));
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  SyntheticCorpus corpus;
  const std::size_t width = std::to_string(spec.num_dialogues).size();

  std::vector<std::size_t> all_topics(spec.num_topics);
  std::iota(all_topics.begin(), all_topics.end(), 0);

  for (std::size_t d = 0; d < spec.num_dialogues; ++d) {
    std::vector<std::size_t> topics = all_topics;
    std::shuffle(topics.begin(), topics.end(), rng);
    const std::vector<std::size_t> active(topics.begin(), topics.begin() + static_cast<std::ptrdiff_t>(spec.threads));
    const std::vector<std::size_t> absent(topics.begin() + static_cast<std::ptrdiff_t>(spec.threads), topics.end());

    // Thread 0 stays quiet after the head segment.
    std::vector<std::size_t> head;
    for (std::size_t t = 0; t < spec.threads; ++t) {
      head.insert(head.end(), uniform(rng, spec.head_turns_min, spec.head_turns_max), t);
    }
    std::shuffle(head.begin(), head.end(), rng);
    std::vector<std::size_t> tail;
    for (std::size_t t = 1; t < spec.threads; ++t) {
      tail.insert(tail.end(), uniform(rng, spec.tail_turns_min, spec.tail_turns_max), t);
    }
    std::shuffle(tail.begin(), tail.end(), rng);
    std::vector<std::size_t> sequence = head;
    sequence.insert(sequence.end(), tail.begin(), tail.end());

    Dialogue dialogue;
    char id[64];
    std::snprintf(id, sizeof(id), "%s-%0*zu", spec.id_prefix.c_str(), static_cast<int>(width), d);
    dialogue.id = id;
    std::vector<Thread> threads(spec.threads);
    std::vector<std::size_t> turns_in_thread(spec.threads, 0);
    for (std::size_t i = 0; i < sequence.size(); ++i) {
      const std::size_t t = sequence[i];
      Turn turn;
      turn.index = i + 1;
      turn.speaker = "u" + std::to_string(active[t]) + (turns_in_thread[t]++ % 2 ? "b" : "a");
      turn.text = topic_text(active[t], uniform(rng, spec.tokens_per_turn_min, spec.tokens_per_turn_max), spec, rng);
      dialogue.turns.push_back(std::move(turn));
      threads[t].push_back(i + 1);
    }

    // Least recently active thread; ties go to the lower thread id.
    std::size_t target = 0;
    for (std::size_t t = 1; t < spec.threads; ++t) {
      if (threads[t].back() < threads[target].back()) target = t;
    }

    std::vector<std::size_t> distractor_topics;
    if (spec.distractors == DistractorPolicy::kActiveTopics) {
      for (std::size_t t = 0; t < spec.threads; ++t) {
        if (t != target) distractor_topics.push_back(active[t]);
      }
    }
    for (std::size_t i = 0; distractor_topics.size() < spec.pool_size - 1; ++i) {
      if (!absent.empty()) {
        distractor_topics.push_back(absent[i % absent.size()]);
      } else {
        distractor_topics.push_back(active[(target + 1 + i % (spec.threads - 1)) % spec.threads]);
      }
    }
    distractor_topics.resize(spec.pool_size - 1);

    const std::size_t label = uniform(rng, 0, spec.pool_size - 1);
    for (std::size_t c = 0, next = 0; c < spec.pool_size; ++c) {
      const std::size_t topic = c == label ? active[target] : distractor_topics[next++];
      dialogue.candidates.push_back(
          topic_text(topic, uniform(rng, spec.tokens_per_turn_min, spec.tokens_per_turn_max), spec, rng));
    }
    dialogue.label = label;

    corpus.forests.emplace(dialogue.id, gold_forest(sequence));
    corpus.threads.push_back(std::move(threads));
    corpus.target_thread.push_back(target);
    corpus.topics_of_target.push_back(active[target]);
    corpus.dialogues.push_back(std::move(dialogue));
  }
  return corpus;
}

}  // namespace threadsel
