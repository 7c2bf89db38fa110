#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmlg/tokens.hpp"
#include "mmlg/util.hpp"

namespace mmlg {

// Shared subword vocabulary: byte-pair merges over whitespace-pretokenized
// text, one inventory for every language and task. Ids 0..63 are reserved
// (pad, eos, unk, task tokens, class-label tokens); text encoding only ever
// produces ids >= kReservedIds.
class Vocabulary {
 public:
  struct EncodeStats {
    std::size_t unknown = 0;  // symbols outside the training character set
  };

  // Greedy pair merges until `target_size` total ids (reserved block
  // included) or no pair occurs twice. Ties break lexicographically.
  static Vocabulary build(const std::vector<std::string>& lines, std::size_t target_size);

  TokenIds encode(const std::string& text, EncodeStats* stats = nullptr) const;
  std::string decode(const TokenIds& ids) const;

  std::size_t size() const { return kReservedIds + tokens_.size(); }
  std::size_t merge_count() const { return merges_.size(); }
  std::string token_string(TokenId id) const;

  std::string serialize() const;
  static Vocabulary deserialize(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  Sha256Digest hash() const { return sha256(serialize()); }

 private:
  std::vector<std::string> tokens_;             // id = kReservedIds + index
  std::map<std::string, TokenId> by_string_;
  std::vector<std::pair<std::string, std::string>> merges_;  // in application order

  void index_tokens();
  std::vector<std::string> word_symbols(const std::string& word) const;
};

}  // namespace mmlg
