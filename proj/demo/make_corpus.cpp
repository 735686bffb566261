// SPDX-License-Identifier: Apache-2.0
//
// Writes a synthetic template dialogue corpus as JSON lines, one dialogue
// (a list of utterances) per line. Usage: chvt_make_corpus OUT [COUNT] [SEED]
#include <cstdlib>
#include <iostream>

#include "chvt/synthetic.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: chvt_make_corpus OUT [COUNT] [SEED]\n";
    return 2;
  }
  const std::size_t count = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 200;
  const std::uint64_t seed = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 1;
  chvt::synthetic::write_dialogues_jsonl(argv[1], chvt::synthetic::template_dialogues(count, seed));
  std::cerr << "wrote " << count << " dialogues to " << argv[1] << "\n";
  return 0;
}
