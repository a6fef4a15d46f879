#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace cotlab {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;
using TokenSpan = std::span<const TokenId>;

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline TokenSeq concat(TokenSpan a, TokenSpan b) {
  TokenSeq out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline TokenSeq concat(TokenSpan a, TokenId t) {
  TokenSeq out(a.begin(), a.end());
  out.push_back(t);
  return out;
}

}  // namespace cotlab
