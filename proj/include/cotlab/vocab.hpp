#pragma once

#include "cotlab/types.hpp"

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace cotlab {

/// The six control tokens occupy ids 0-5 in every Vocab; ordinary tokens
/// follow in declaration order, so ids are stable across runs.
enum Special : TokenId {
  BOS = 0,
  THINK_OPEN = 1,
  THINK_CLOSE = 2,
  ANS_OPEN = 3,
  ANS_CLOSE = 4,
  PAD = 5,
};

constexpr int kNumSpecials = 6;

class Vocab {
 public:
  explicit Vocab(std::vector<std::string> ordinary);

  int size() const { return static_cast<int>(symbols_.size()); }
  int ordinary_count() const { return size() - kNumSpecials; }

  bool is_special(TokenId id) const { return id >= 0 && id < kNumSpecials; }
  bool contains(TokenId id) const { return id >= 0 && id < size(); }

  const std::string& symbol(TokenId id) const;
  TokenId id_of(const std::string& symbol) const;          // throws if unknown
  bool lookup(const std::string& symbol, TokenId& out) const;

  const std::vector<std::string>& ordinary_symbols() const { return ordinary_; }

  TokenSeq encode(const std::vector<std::string>& symbols) const;
  std::vector<std::string> decode(TokenSpan ids) const;

 private:
  std::vector<std::string> symbols_;   // dense, index == id
  std::vector<std::string> ordinary_;  // declaration order
  std::unordered_map<std::string, TokenId> index_;
};

/// Vocab for the built-in tasks: digits 0-9, "+", letters a-l. Size 29.
Vocab builtin_vocab();

}  // namespace cotlab
