#pragma once

#include "cotlab/rewards.hpp"

#include <stdexcept>
#include <vector>

namespace cotlab {

struct GroupTooSmallError : std::invalid_argument {
  GroupTooSmallError() : std::invalid_argument("leave-one-out needs a group of at least 2") {}
};

/// adv_i = r_i - mean of the other rewards. No variance normalization.
std::vector<double> rloo_advantages(const std::vector<double>& rewards);

/// adv_i = logmeanexp(all sums) - logmeanexp(sums excluding i).
std::vector<double> jepo_advantages(const std::vector<AnswerScore>& scores);

}  // namespace cotlab
