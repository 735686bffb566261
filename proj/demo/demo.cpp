// SPDX-License-Identifier: Apache-2.0
//
// Trains a tiny model on a corpus where each context has three valid
// replies, then prints the K candidates the model proposes per context and
// the one picked by inner-product selection.
//
//   chvt_demo [steps]
#include <algorithm>
#include <cstdlib>
#include <iostream>

#include "chvt/chvt.hpp"

int main(int argc, char** argv) {
  using namespace chvt;
  const int steps = argc > 1 ? std::atoi(argv[1]) : 2000;

  const auto text = synthetic::one_to_many_pairs();
  const auto vocab = corpus::Vocab::build(text, 1000);

  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.K = 3;
  mc.max_len = 12;
  TrainConfig tc;
  tc.batch_size = 12;
  tc.max_steps = steps;
  tc.k_ann = std::max(1, steps * 3 / 10);
  tc.lr = 3e-3;

  Trainer trainer(ChvtModel(mc, 11), tc);
  trainer.fit(corpus::encode_pairs(text, vocab, mc.max_len), [&](const StepMetrics& m) {
    if ((m.step + 1) % 250 == 0) {
      std::cout << "step " << m.step + 1 << "  nll " << m.j_ent << "  kl " << m.d_kl << "\n";
    }
  });

  Generator gen(trainer.model(), GenConfig{});
  std::string last;
  for (const auto& p : text) {
    if (p.context == last) continue;
    last = p.context;
    const auto ctx = vocab.tokenize(p.context);
    const Generation g = gen.generate_k(ctx);
    const Selection sel = select_response(trainer.model(), ctx, g.responses);
    std::cout << "\n" << p.context << "\n";
    for (std::size_t j = 0; j < g.responses.size(); ++j) {
      std::cout << (j == sel.best ? "  * " : "    ") << vocab.detokenize(g.responses[j]) << "\n";
    }
  }
}
