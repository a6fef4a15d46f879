#include "cotlab/core.hpp"

#include <algorithm>
#include <stdexcept>

namespace cotlab {

void Example::validate(const Vocab& vocab) const {
  if (id.empty()) throw std::invalid_argument("example id must be non-empty");
  if (prompt.empty()) throw std::invalid_argument("example " + id + ": empty prompt");
  if (answer.empty()) throw std::invalid_argument("example " + id + ": empty answer");
  for (TokenId t : prompt) {
    if (!vocab.contains(t)) throw std::invalid_argument("example " + id + ": prompt token out of vocab");
    if (vocab.is_special(t)) throw std::invalid_argument("example " + id + ": special token in prompt");
  }
  for (TokenId t : answer) {
    if (!vocab.contains(t)) throw std::invalid_argument("example " + id + ": answer token out of vocab");
    if (vocab.is_special(t)) throw std::invalid_argument("example " + id + ": special token in answer");
  }
}

TokenSeq render_prompt(const Example& example) {
  TokenSeq out;
  out.reserve(example.prompt.size() + 2);
  out.push_back(BOS);
  out.insert(out.end(), example.prompt.begin(), example.prompt.end());
  out.push_back(THINK_OPEN);
  return out;
}

Rollout parse_completion(TokenSpan tokens) {
  Rollout r;
  auto open = std::find(tokens.begin(), tokens.end(), static_cast<TokenId>(ANS_OPEN));
  if (open == tokens.end()) {
    r.cot.assign(tokens.begin(), tokens.end());
    return r;
  }
  r.cot.assign(tokens.begin(), open);
  auto close = std::find(open + 1, tokens.end(), static_cast<TokenId>(ANS_CLOSE));
  if (close == tokens.end()) return r;  // open without close
  r.answer.assign(open + 1, close);
  r.parse_ok = true;
  return r;
}

TokenSeq cot_prefix_for_scoring(const Rollout& rollout, TokenSpan rendered_prompt) {
  TokenSeq out;
  out.reserve(rendered_prompt.size() + rollout.cot.size() + 1);
  out.insert(out.end(), rendered_prompt.begin(), rendered_prompt.end());
  out.insert(out.end(), rollout.cot.begin(), rollout.cot.end());
  out.push_back(ANS_OPEN);
  return out;
}

}  // namespace cotlab
