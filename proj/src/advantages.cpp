#include "cotlab/advantages.hpp"

#include "cotlab/logmath.hpp"

namespace cotlab {

std::vector<double> rloo_advantages(const std::vector<double>& rewards) {
  const size_t g = rewards.size();
  if (g < 2) throw GroupTooSmallError();
  double total = 0.0;
  for (double r : rewards) total += r;
  std::vector<double> adv(g);
  for (size_t i = 0; i < g; ++i) {
    adv[i] = rewards[i] - (total - rewards[i]) / static_cast<double>(g - 1);
  }
  return adv;
}

std::vector<double> jepo_advantages(const std::vector<AnswerScore>& scores) {
  const size_t g = scores.size();
  if (g < 2) throw GroupTooSmallError();
  std::vector<double> sums(g);
  for (size_t i = 0; i < g; ++i) sums[i] = scores[i].sum_logprob;
  const double full = log_mean_exp(sums);
  std::vector<double> adv(g);
  std::vector<double> rest(g - 1);
  for (size_t i = 0; i < g; ++i) {
    size_t k = 0;
    for (size_t j = 0; j < g; ++j) {
      if (j != i) rest[k++] = sums[j];
    }
    adv[i] = full - log_mean_exp(rest);
  }
  return adv;
}

}  // namespace cotlab
