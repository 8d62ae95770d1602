// Trains a small writer-identification network on a synthetic corpus and
// reports held-out top-k accuracy with DropStroke test averaging.
//
//   synthetic_writers [epochs] [level]

#include <cstdio>
#include <cstdlib>

#include <inksig/dataset.hpp>
#include <inksig/eval.hpp>
#include <inksig/train.hpp>

using namespace inksig;

int main(int argc, char** argv) {
    const int epochs = argc > 1 ? std::atoi(argv[1]) : 8;
    const int level = argc > 2 ? std::atoi(argv[2]) : 2;

    Rng rng(2024);
    const auto corpus = synth_corpus(5, 60, rng);
    const auto split = make_split(corpus, random_class_split(corpus, 45, 1));
    const auto writers = corpus.writers();
    const auto train_by_writer = split.train.group_by(writers);
    const auto test_by_writer = split.test.group_by(writers);

    std::vector<LabeledCharacter> heldout;
    for (std::size_t w = 0; w < test_by_writer.size(); ++w)
        for (const auto& c : test_by_writer[w]) heldout.push_back({c, static_cast<int>(w)});

    BalancedTrainingStream stream(train_by_writer, 45, DropPolicy{});
    Network<float> net(parse_architecture(kDeskArchitecture, static_cast<int>(sig_dim(level)),
                                          static_cast<int>(writers.size())),
                       7);
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.minibatch = 20;
    cfg.learning_rate = 0.05;
    cfg.render.level = level;
    train(net, stream, cfg, heldout, [](const EpochRecord& r) {
        std::printf("epoch %d  loss %.3f  held-out error %.3f\n", r.epoch, r.train_loss, r.heldout_top1_error);
    });

    EvalConfig ecfg;
    ecfg.render.level = level;
    ecfg.tests_per_char = 10;
    const auto preds = character_predictions(net, test_by_writer, ecfg);
    const std::vector<int> ks{1, 2, 3};
    for (int g : {1, 3, 5}) {
        const auto t = group_eval(preds, g, ks);
        std::printf("groups of %d: top-1 %.3f  top-2 %.3f  top-3 %.3f\n", g, t.at(1), t.at(2), t.at(3));
    }
}
