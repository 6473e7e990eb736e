#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace threadsel {

// 1-based chronological position of a turn inside a dialogue history.
using TurnIndex = std::size_t;
using TokenId = std::int32_t;

struct Turn {
  TurnIndex index = 0;
  std::string speaker;
  std::string text;

  friend bool operator==(const Turn&, const Turn&) = default;
};

// A history C, a candidate pool R and an optional 0-based answer index L.
struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
  std::vector<std::string> candidates;
  std::optional<std::size_t> label;

  std::size_t num_turns() const { return turns.size(); }
  const Turn& turn(TurnIndex index) const { return turns.at(index - 1); }

  friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

struct TokenSequence {
  std::vector<TokenId> ids;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// Lowercasing whitespace tokenizer with a frequency-ranked vocabulary.
// Ids 0..2 are reserved for [PAD], [UNK] and the [S] boundary token.
class Tokenizer {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBoundary = 2;
  static constexpr std::size_t kNumSpecials = 3;

  Tokenizer();
  // `tokens` lists the non-special vocabulary in id order starting at id 3.
  explicit Tokenizer(const std::vector<std::string>& tokens);

  TokenSequence encode(std::string_view text) const;
  std::string decode(const TokenSequence& tokens) const;

  std::size_t size() const { return id_to_token_.size(); }
  std::optional<TokenId> id(const std::string& token) const;
  const std::string& token(TokenId id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }
  // Vocabulary without the specials, in id order.
  std::vector<std::string> regular_tokens() const;

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

// Splits on ASCII whitespace and lowercases.
std::vector<std::string> split_words(std::string_view text);

std::vector<Dialogue> load_corpus(const std::filesystem::path& path);
std::vector<Dialogue> parse_corpus(std::string_view jsonl, const std::string& source = "<memory>");
std::string serialize_dialogue(const Dialogue& dialogue);
void save_corpus(const std::vector<Dialogue>& dialogues, const std::filesystem::path& path);

std::vector<Dialogue> filter_unanswerable(const std::vector<Dialogue>& dialogues);

// Every turn k in (min_context+1)..n becomes a sample with context 1..k-1 and
// a single-candidate pool holding turn k (label 0).
std::vector<Dialogue> augment(const std::vector<Dialogue>& dialogues, std::size_t min_context = 1);

Tokenizer build_vocab(const std::vector<Dialogue>& dialogues, std::size_t max_size, std::size_t min_freq = 1);

inline TokenSequence tokenize(const Tokenizer& tokenizer, std::string_view text) {
  return tokenizer.encode(text);
}

inline constexpr std::size_t kCandidateTokenLimit = 72;
inline constexpr std::size_t kThreadTokenLimit = 360;

// Keeps the head of a response.
TokenSequence truncate_candidate(const TokenSequence& tokens);
// Keeps the tail of a concatenated thread.
TokenSequence truncate_thread(const TokenSequence& tokens);

}  // namespace threadsel
