#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace bleg::models {

enum SpecialToken : std::size_t { kPad = 0, kBos = 1, kEos = 2, kUnk = 3, kCls = 4, kGraph = 5 };
inline constexpr std::size_t kNumSpecialTokens = 6;

/// Splits text into word pieces: runs of letters, digits and '_' form one
/// piece, every other non-space character is a piece of its own.
std::vector<std::string> split_words(const std::string& text);

/// Word-level vocabulary. Ids 0..5 are the special tokens; the remaining
/// entries are sorted, so a build depends only on the corpus multiset.
class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary build(const std::vector<std::string>& corpus, std::size_t min_count = 1);
  static Vocabulary from_tokens(std::vector<std::string> tokens);  // includes specials

  [[nodiscard]] std::vector<std::size_t> tokenize(const std::string& text) const;
  /// Pieces joined by single spaces; PAD/BOS/EOS/GRAPH/CLS are dropped.
  [[nodiscard]] std::string detokenize(const std::vector<std::size_t>& ids) const;

  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  [[nodiscard]] const std::string& token(std::size_t id) const { return tokens_.at(id); }
  [[nodiscard]] std::size_t id(const std::string& token) const;
  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace bleg::models
