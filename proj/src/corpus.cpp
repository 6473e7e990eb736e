#include "threadsel/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "threadsel/error.hpp"

namespace threadsel {

namespace {

using ordered_json = nlohmann::ordered_json;

Dialogue dialogue_from_json(const nlohmann::json& object, std::size_t line_number) {
  auto fail = [&](const std::string& what) {
    throw DataError("line " + std::to_string(line_number) + ": " + what);
  };
  if (!object.is_object()) fail("expected a JSON object");
  Dialogue dialogue;
  if (!object.contains("id") || !object["id"].is_string()) fail("missing string field \"id\"");
  dialogue.id = object["id"].get<std::string>();

  if (!object.contains("turns") || !object["turns"].is_array()) fail("missing array field \"turns\"");
  const auto& turns = object["turns"];
  if (turns.empty()) fail("dialogue " + dialogue.id + " has no turns");
  TurnIndex index = 1;
  for (const auto& turn : turns) {
    if (!turn.is_object() || !turn.contains("text") || !turn["text"].is_string()) {
      fail("turn " + std::to_string(index) + " lacks a string \"text\"");
    }
    Turn parsed;
    parsed.index = index++;
    parsed.text = turn["text"].get<std::string>();
    if (turn.contains("speaker")) {
      if (!turn["speaker"].is_string()) fail("speaker must be a string");
      parsed.speaker = turn["speaker"].get<std::string>();
    }
    dialogue.turns.push_back(std::move(parsed));
  }

  if (!object.contains("candidates") || !object["candidates"].is_array()) {
    fail("missing array field \"candidates\"");
  }
  for (const auto& candidate : object["candidates"]) {
    if (!candidate.is_string()) fail("candidates must be strings");
    dialogue.candidates.push_back(candidate.get<std::string>());
  }
  if (dialogue.candidates.empty()) fail("dialogue " + dialogue.id + " has no candidates");

  if (object.contains("label") && !object["label"].is_null()) {
    const auto& label = object["label"];
    if (!label.is_number_integer()) fail("label must be an integer or null");
    const auto value = label.get<long long>();
    if (value < 0 || static_cast<std::size_t>(value) >= dialogue.candidates.size()) {
      throw DataError("dialogue " + dialogue.id + ": label out of range (" + std::to_string(value) + " with " +
                      std::to_string(dialogue.candidates.size()) + " candidates)");
    }
    dialogue.label = static_cast<std::size_t>(value);
  }
  return dialogue;
}

}  // namespace

Tokenizer::Tokenizer() : Tokenizer(std::vector<std::string>{}) {}

Tokenizer::Tokenizer(const std::vector<std::string>& tokens) {
  id_to_token_ = {"[PAD]", "[UNK]", "[S]"};
  id_to_token_.insert(id_to_token_.end(), tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    auto [it, inserted] = token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i));
    if (!inserted) throw DataError("duplicate vocabulary token \"" + id_to_token_[i] + "\"");
  }
}

std::optional<TokenId> Tokenizer::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

TokenSequence Tokenizer::encode(std::string_view text) const {
  TokenSequence out;
  for (const auto& word : split_words(text)) {
    auto it = token_to_id_.find(word);
    out.ids.push_back(it == token_to_id_.end() ? kUnk : it->second);
  }
  return out;
}

std::string Tokenizer::decode(const TokenSequence& tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.ids.size(); ++i) {
    if (i) out += ' ';
    out += token(tokens.ids[i]);
  }
  return out;
}

std::vector<std::string> Tokenizer::regular_tokens() const {
  return {id_to_token_.begin() + kNumSpecials, id_to_token_.end()};
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::vector<Dialogue> parse_corpus(std::string_view jsonl, const std::string& source) {
  std::vector<Dialogue> dialogues;
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
    nlohmann::json object;
    try {
      object = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(source + ": line " + std::to_string(line_number) + ": malformed JSON");
    }
    dialogues.push_back(dialogue_from_json(object, line_number));
  }
  return dialogues;
}

std::vector<Dialogue> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_corpus(buffer.str(), path.string());
}

std::string serialize_dialogue(const Dialogue& dialogue) {
  ordered_json object;
  object["id"] = dialogue.id;
  object["turns"] = ordered_json::array();
  for (const auto& turn : dialogue.turns) {
    ordered_json t;
    t["speaker"] = turn.speaker;
    t["text"] = turn.text;
    object["turns"].push_back(std::move(t));
  }
  object["candidates"] = dialogue.candidates;
  if (dialogue.label) {
    object["label"] = *dialogue.label;
  } else {
    object["label"] = nullptr;
  }
  return object.dump();
}

void save_corpus(const std::vector<Dialogue>& dialogues, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus " + path.string());
  for (const auto& dialogue : dialogues) out << serialize_dialogue(dialogue) << '\n';
}

std::vector<Dialogue> filter_unanswerable(const std::vector<Dialogue>& dialogues) {
  std::vector<Dialogue> kept;
  std::copy_if(dialogues.begin(), dialogues.end(), std::back_inserter(kept),
               [](const Dialogue& d) { return d.label.has_value(); });
  return kept;
}

std::vector<Dialogue> augment(const std::vector<Dialogue>& dialogues, std::size_t min_context) {
  if (min_context < 1) throw ConfigError("min_context must be at least 1");
  std::vector<Dialogue> samples;
  for (const auto& dialogue : dialogues) {
    const std::size_t n = dialogue.turns.size();
    for (std::size_t k = min_context + 1; k <= n; ++k) {
      Dialogue sample;
      sample.id = dialogue.id + "#" + std::to_string(k);
      sample.turns.assign(dialogue.turns.begin(), dialogue.turns.begin() + static_cast<std::ptrdiff_t>(k - 1));
      sample.candidates = {dialogue.turns[k - 1].text};
      sample.label = 0;
      samples.push_back(std::move(sample));
    }
  }
  return samples;
}

Tokenizer build_vocab(const std::vector<Dialogue>& dialogues, std::size_t max_size, std::size_t min_freq) {
  if (max_size <= Tokenizer::kNumSpecials) throw ConfigError("vocabulary size must exceed the special tokens");
  std::map<std::string, std::size_t> counts;
  auto count = [&](const std::string& text) {
    for (auto& word : split_words(text)) ++counts[word];
  };
  for (const auto& dialogue : dialogues) {
    for (const auto& turn : dialogue.turns) count(turn.text);
    for (const auto& candidate : dialogue.candidates) count(candidate);
  }
  for (const char* special : {"[PAD]", "[UNK]", "[S]"}) counts.erase(special);

  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [word, freq] : counts) {
    if (freq >= min_freq) ranked.emplace_back(word, freq);
  }
  // std::map iteration is lexicographic, so a stable sort on frequency keeps ties ordered.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t limit = std::min(ranked.size(), max_size - Tokenizer::kNumSpecials);
  std::vector<std::string> tokens;
  tokens.reserve(limit);
  for (std::size_t i = 0; i < limit; ++i) tokens.push_back(ranked[i].first);
  return Tokenizer(tokens);
}

TokenSequence truncate_candidate(const TokenSequence& tokens) {
  if (tokens.size() <= kCandidateTokenLimit) return tokens;
  return TokenSequence{{tokens.ids.begin(), tokens.ids.begin() + kCandidateTokenLimit}};
}

TokenSequence truncate_thread(const TokenSequence& tokens) {
  if (tokens.size() <= kThreadTokenLimit) return tokens;
  return TokenSequence{{tokens.ids.end() - kThreadTokenLimit, tokens.ids.end()}};
}

}  // namespace threadsel
