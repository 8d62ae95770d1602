// Writes a synthetic multi-writer corpus as JSONL, for trying the CLI
// without the real data.
//
//   synthetic_corpus out.jsonl [writers] [chars_per_writer] [seed]

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <inksig/dataset.hpp>

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s out.jsonl [writers] [chars_per_writer] [seed]\n", argv[0]);
        return 2;
    }
    const int writers = argc > 2 ? std::atoi(argv[2]) : 10;
    const int chars = argc > 3 ? std::atoi(argv[3]) : 200;
    inksig::Rng rng(argc > 4 ? std::strtoull(argv[4], nullptr, 10) : 42);
    const auto corpus = inksig::synth_corpus(writers, chars, rng);
    std::ofstream out(argv[1]);
    inksig::write_jsonl(out, corpus.characters);
    std::printf("%zu characters from %d writers\n", corpus.characters.size(), writers);
}
