#include "cotlab/instances.hpp"

#include "cotlab/rng.hpp"

namespace cotlab {

TabularInstance make_tabular_instance(std::uint64_t seed, const TabularInstanceOptions& opts) {
  if (opts.n_letters < 1 || opts.n_letters > 3) {
    throw std::invalid_argument("tabular instance supports 1-3 letters");
  }
  static const std::vector<std::string> kLetters = {"x", "y", "z"};
  std::vector<std::string> ordinary(kLetters.begin(), kLetters.begin() + opts.n_letters);
  auto vocab = std::make_shared<Vocab>(ordinary);

  TabularInstance inst;
  inst.vocab = vocab;
  inst.cot_budget = opts.cot_budget;
  inst.full_budget = opts.full_budget;

  CounterRng rng(StreamKey(seed).with("tabular_instance"));
  inst.example.id = "tab-" + std::to_string(seed);
  inst.example.prompt = {vocab->id_of(kLetters[0])};
  for (int i = 0; i < opts.answer_len; ++i) {
    inst.example.answer.push_back(
        vocab->id_of(kLetters[static_cast<size_t>(rng.next_u64() % opts.n_letters)]));
  }

  std::vector<TokenId> alphabet;
  for (int i = 0; i < opts.n_letters; ++i) alphabet.push_back(vocab->id_of(kLetters[i]));
  alphabet.push_back(ANS_OPEN);
  alphabet.push_back(ANS_CLOSE);

  const TokenSeq rendered = render_prompt(inst.example);
  TokenSeq target(inst.example.answer.begin(), inst.example.answer.end());
  target.push_back(ANS_CLOSE);

  TabularPolicyBuilder builder(vocab, alphabet);
  builder.add_sampling_tree(rendered, opts.cot_budget, ANS_OPEN);
  builder.add_scoring_paths(rendered, opts.cot_budget, ANS_OPEN, target);
  // answer emission trees after every forced-<answer> scoring prefix, so
  // answers can be decoded or enumerated for any sampled CoT
  const int answer_budget =
      opts.answer_decode_budget < 0 ? opts.answer_len + 1 : opts.answer_decode_budget;
  if (answer_budget > 0) {
    builder.for_each_leaf(rendered, opts.cot_budget, ANS_OPEN,
                          [&](const TokenSeq& emitted, bool /*truncated*/) {
                            const Rollout r = parse_completion(emitted);
                            TokenSeq prefix = concat(rendered, r.cot);
                            prefix.push_back(ANS_OPEN);
                            builder.add_sampling_tree(prefix, answer_budget, ANS_CLOSE);
                          });
  }
  if (opts.full_budget > 0) {
    builder.add_sampling_tree(rendered, opts.full_budget, ANS_CLOSE);
    builder.add_scoring_paths(rendered, opts.full_budget, ANS_CLOSE, target);
  }
  inst.policy = builder.build();

  CounterRng logit_rng(StreamKey(seed).with("tabular_logits"));
  inst.policy->init_gaussian(logit_rng, opts.logit_scale);
  return inst;
}

}  // namespace cotlab
