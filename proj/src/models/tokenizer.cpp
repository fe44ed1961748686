#include "bleg/models/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include <json.hpp>

#include "bleg/error.hpp"
#include "bleg/graphdata/io.hpp"

namespace bleg::models {

namespace {

const std::vector<std::string>& special_names() {
  static const std::vector<std::string> names = {"[PAD]", "[BOS]", "[EOS]", "[UNK]", "[CLS]", "[GRAPH]"};
  return names;
}

bool word_char(char ch) {
  const auto c = static_cast<unsigned char>(ch);
  return std::isalnum(c) || ch == '_';
}

}  // namespace

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (word_char(ch)) {
      cur += ch;
      continue;
    }
    if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
    if (!std::isspace(static_cast<unsigned char>(ch))) out.emplace_back(1, ch);
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus)
    for (auto& w : split_words(text)) ++counts[w];
  std::vector<std::string> tokens = special_names();
  for (const auto& [w, c] : counts) {
    if (c >= min_count && std::find(tokens.begin(), tokens.end(), w) == tokens.end()) tokens.push_back(w);
  }
  if (tokens.size() == kNumSpecialTokens) throw ConfigurationError("vocabulary is empty: the corpus has no words");
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() <= kNumSpecialTokens) throw ConfigurationError("vocabulary is empty");
  for (std::size_t k = 0; k < kNumSpecialTokens; ++k) {
    if (tokens[k] != special_names()[k]) throw FormatError("vocabulary does not start with the special tokens");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t k = 0; k < v.tokens_.size(); ++k) {
    if (!v.index_.emplace(v.tokens_[k], k).second) throw FormatError("duplicate vocabulary entry '" + v.tokens_[k] + "'");
  }
  return v;
}

std::vector<std::size_t> Vocabulary::tokenize(const std::string& text) const {
  if (tokens_.empty()) throw ConfigurationError("vocabulary is empty");
  std::vector<std::size_t> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::size_t Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::string Vocabulary::detokenize(const std::vector<std::size_t>& ids) const {
  std::string out;
  for (auto id : ids) {
    if (id == kPad || id == kBos || id == kEos || id == kCls || id == kGraph) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  graphdata::write_text_file(path, nlohmann::json(tokens_).dump(1) + "\n");
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  const auto j = graphdata::read_json_file(path);
  if (!j.is_array()) throw FormatError("vocabulary file must hold a JSON list");
  return from_tokens(j.get<std::vector<std::string>>());
}

}  // namespace bleg::models
