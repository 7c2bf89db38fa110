#include "mmlg/vocab.hpp"

#include <algorithm>
#include <sstream>

namespace mmlg {

namespace {

constexpr const char* kWordEnd = "</w>";

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

// Initial symbol sequence for a word: one symbol per byte, word-end marker
// fused onto the last byte.
std::vector<std::string> initial_symbols(const std::string& word) {
  std::vector<std::string> syms;
  syms.reserve(word.size());
  for (std::size_t i = 0; i < word.size(); ++i) syms.emplace_back(1, word[i]);
  syms.back() += kWordEnd;
  return syms;
}

std::string reserved_name(TokenId id) {
  if (id == kPadId) return "<pad>";
  if (id == kEosId) return "<eos>";
  if (id == kUnkId) return "<unk>";
  if (is_task_token(id)) return "<task" + std::to_string(id - kTaskTokenBase) + ">";
  if (is_label_token(id)) return "<label" + std::to_string(id - kLabelTokenBase) + ">";
  return "<reserved" + std::to_string(id) + ">";
}

}  // namespace

Vocabulary Vocabulary::build(const std::vector<std::string>& lines, std::size_t target_size) {
  // word frequency table (ordered map: deterministic iteration)
  std::map<std::string, std::size_t> word_freq;
  for (const auto& line : lines) {
    for (auto& w : split_words(line)) ++word_freq[w];
  }

  std::map<std::string, std::size_t> inventory;  // symbol -> count (for initial tokens)
  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  words.reserve(word_freq.size());
  for (const auto& [word, freq] : word_freq) {
    auto syms = initial_symbols(word);
    for (const auto& s : syms) inventory[s] += freq;
    words.emplace_back(std::move(syms), freq);
  }

  Vocabulary v;
  for (const auto& [sym, cnt] : inventory) v.tokens_.push_back(sym);
  if (target_size <= kReservedIds + v.tokens_.size()) {
    throw ConfigError("vocabulary target size " + std::to_string(target_size) +
                      " does not exceed reserved block + character inventory (" +
                      std::to_string(kReservedIds + v.tokens_.size()) + ")");
  }

  while (kReservedIds + v.tokens_.size() < target_size) {
    // count adjacent symbol pairs, frequency-weighted
    std::map<std::pair<std::string, std::string>, std::size_t> pair_count;
    for (const auto& [syms, freq] : words) {
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) pair_count[{syms[i], syms[i + 1]}] += freq;
    }
    std::pair<std::string, std::string> best;
    std::size_t best_count = 0;
    for (const auto& [pair, count] : pair_count) {
      if (count > best_count) {  // ties keep the lexicographically smallest pair
        best = pair;
        best_count = count;
      }
    }
    if (best_count < 2) break;  // nothing left worth merging

    const std::string merged = best.first + best.second;
    v.merges_.push_back(best);
    v.tokens_.push_back(merged);
    for (auto& [syms, freq] : words) {
      for (std::size_t i = 0; i + 1 < syms.size();) {
        if (syms[i] == best.first && syms[i + 1] == best.second) {
          syms[i] = merged;
          syms.erase(syms.begin() + std::ptrdiff_t(i) + 1);
        } else {
          ++i;
        }
      }
    }
  }

  v.index_tokens();
  return v;
}

void Vocabulary::index_tokens() {
  by_string_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    by_string_[tokens_[i]] = TokenId(kReservedIds + i);
}

std::vector<std::string> Vocabulary::word_symbols(const std::string& word) const {
  auto syms = initial_symbols(word);
  for (const auto& [a, b] : merges_) {
    for (std::size_t i = 0; i + 1 < syms.size();) {
      if (syms[i] == a && syms[i + 1] == b) {
        syms[i] = a + b;
        syms.erase(syms.begin() + std::ptrdiff_t(i) + 1);
      } else {
        ++i;
      }
    }
  }
  return syms;
}

TokenIds Vocabulary::encode(const std::string& text, EncodeStats* stats) const {
  TokenIds ids;
  for (const auto& word : split_words(text)) {
    for (const auto& sym : word_symbols(word)) {
      auto it = by_string_.find(sym);
      if (it == by_string_.end()) {
        ids.push_back(kUnkId);
        if (stats) ++stats->unknown;
      } else {
        ids.push_back(it->second);
      }
    }
  }
  return ids;
}

std::string Vocabulary::decode(const TokenIds& ids) const {
  std::string out;
  auto end_word = [&out]() {
    if (!out.empty() && out.back() != ' ') out.push_back(' ');
  };
  for (TokenId id : ids) {
    if (id == kPadId || id == kEosId) continue;
    if (id < TokenId(kReservedIds)) {
      out += reserved_name(id);
      end_word();
      continue;
    }
    const std::size_t idx = std::size_t(id) - kReservedIds;
    if (idx >= tokens_.size()) {
      throw VocabError("decode: id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(size()));
    }
    const std::string& tok = tokens_[idx];
    if (tok.size() >= 4 && tok.compare(tok.size() - 4, 4, kWordEnd) == 0) {
      out += tok.substr(0, tok.size() - 4);
      end_word();
    } else {
      out += tok;
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string Vocabulary::token_string(TokenId id) const {
  if (id < TokenId(kReservedIds)) return reserved_name(id);
  const std::size_t idx = std::size_t(id) - kReservedIds;
  if (idx >= tokens_.size()) {
    throw VocabError("token_string: id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[idx];
}

std::string Vocabulary::serialize() const {
  std::ostringstream out;
  out << "mmlg-vocab 1\n";
  out << "tokens " << tokens_.size() << "\n";
  for (const auto& t : tokens_) out << t << "\n";
  out << "merges " << merges_.size() << "\n";
  for (const auto& [a, b] : merges_) out << a << "\t" << b << "\n";
  return out.str();
}

Vocabulary Vocabulary::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(in, line)) throw ParseError("vocabulary file truncated");
    return line;
  };
  if (next_line() != "mmlg-vocab 1") throw ParseError("not a vocabulary file (bad header)");

  Vocabulary v;
  std::size_t n_tokens = 0, n_merges = 0;
  {
    std::istringstream hs(next_line());
    std::string word;
    if (!(hs >> word >> n_tokens) || word != "tokens") throw ParseError("bad tokens header");
  }
  for (std::size_t i = 0; i < n_tokens; ++i) v.tokens_.push_back(next_line());
  {
    std::istringstream hs(next_line());
    std::string word;
    if (!(hs >> word >> n_merges) || word != "merges") throw ParseError("bad merges header");
  }
  for (std::size_t i = 0; i < n_merges; ++i) {
    const std::string& m = next_line();
    auto tab = m.find('\t');
    if (tab == std::string::npos) throw ParseError("bad merge rule at entry " + std::to_string(i));
    v.merges_.emplace_back(m.substr(0, tab), m.substr(tab + 1));
  }
  v.index_tokens();
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const { atomic_write(path, serialize()); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

}  // namespace mmlg
