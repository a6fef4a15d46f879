#include "cotlab/vocab.hpp"

namespace cotlab {

namespace {
const char* kSpecialSymbols[kNumSpecials] = {
    "<bos>", "<think>", "</think>", "<answer>", "</answer>", "<pad>",
};
}  // namespace

Vocab::Vocab(std::vector<std::string> ordinary) : ordinary_(std::move(ordinary)) {
  symbols_.reserve(kNumSpecials + ordinary_.size());
  for (const char* s : kSpecialSymbols) symbols_.emplace_back(s);
  for (const auto& s : ordinary_) symbols_.push_back(s);
  for (TokenId id = 0; id < static_cast<TokenId>(symbols_.size()); ++id) {
    auto [it, inserted] = index_.emplace(symbols_[id], id);
    if (!inserted) throw std::invalid_argument("duplicate token symbol: " + symbols_[id]);
  }
}

const std::string& Vocab::symbol(TokenId id) const {
  if (!contains(id)) throw std::out_of_range("token id out of range");
  return symbols_[static_cast<size_t>(id)];
}

TokenId Vocab::id_of(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) throw std::out_of_range("unknown token symbol: " + symbol);
  return it->second;
}

bool Vocab::lookup(const std::string& symbol, TokenId& out) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) return false;
  out = it->second;
  return true;
}

TokenSeq Vocab::encode(const std::vector<std::string>& symbols) const {
  TokenSeq out;
  out.reserve(symbols.size());
  for (const auto& s : symbols) out.push_back(id_of(s));
  return out;
}

std::vector<std::string> Vocab::decode(TokenSpan ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(symbol(id));
  return out;
}

Vocab builtin_vocab() {
  std::vector<std::string> ordinary;
  for (char c = '0'; c <= '9'; ++c) ordinary.emplace_back(1, c);
  ordinary.emplace_back("+");
  for (char c = 'a'; c <= 'l'; ++c) ordinary.emplace_back(1, c);
  return Vocab(std::move(ordinary));
}

}  // namespace cotlab
