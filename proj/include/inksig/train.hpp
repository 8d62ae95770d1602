#pragma once

// Minibatch SGD over the drop -> distort -> render pipeline.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "cnn.hpp"
#include "dropstroke.hpp"
#include "rasterize.hpp"
#include "trajectory.hpp"

namespace inksig {

/// Network input for one character: (re)normalize, then render.
template <class T>
std::vector<T> character_input(const InkCharacter& ch, const RenderOptions& render_opt) {
    return to_input<T>(render(normalize(ch), render_opt));
}

enum class LrSchedule {
    plateau,     ///< decay when an epoch fails to lower the training loss
    every_epoch, ///< decay after every epoch
    constant,
};

struct TrainConfig {
    int minibatch = 100;
    double learning_rate = 0.01;
    double lr_decay = 0.7;
    LrSchedule schedule = LrSchedule::plateau;
    int epochs = 10;
    std::uint64_t seed = 0;
    bool distort = true;
    DistortLimits distort_limits{};
    RenderOptions render{};
};

struct EpochRecord {
    int epoch = 0;
    double learning_rate = 0.0;
    double train_loss = 0.0;
    double train_top1_error = 0.0;
    /// NaN when no held-out set was supplied.
    double heldout_top1_error = std::numeric_limits<double>::quiet_NaN();
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
};

struct LabeledCharacter {
    InkCharacter ink;
    int writer = 0;
};

template <class T>
std::size_t argmax(std::span<const T> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Top-1 error of undistorted, undropped prototypes.
template <class T>
double top1_error(const Network<T>& net, std::span<const LabeledCharacter> set, const RenderOptions& render_opt) {
    if (set.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::size_t wrong = 0;
    for (const auto& s : set) {
        const auto probs = net.forward(character_input<T>(s.ink, render_opt));
        if (argmax<T>(probs) != static_cast<std::size_t>(s.writer)) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(set.size());
}

/// Trains `net` for cfg.epochs epochs drawn from `stream`.
template <class T>
TrainLog train(Network<T>& net, BalancedTrainingStream& stream, const TrainConfig& cfg,
               std::span<const LabeledCharacter> heldout = {},
               const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    if (cfg.minibatch < 1) throw ConfigError("minibatch must be >= 1");
    if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (stream.epoch_size() == 0) throw ConfigError("training stream is empty");
    if (static_cast<int>(stream.writers()) != net.num_writers())
        throw ConfigError("stream has " + std::to_string(stream.writers()) + " writers, network outputs " +
                          std::to_string(net.num_writers()));
    if (static_cast<int>(sig_dim(cfg.render.level)) != net.input_channels())
        throw ConfigError("signature level " + std::to_string(cfg.render.level) + " gives " +
                          std::to_string(sig_dim(cfg.render.level)) + " channels, network expects " +
                          std::to_string(net.input_channels()));

    Rng distort_rng(derive_seed(cfg.seed, 11));
    Rng dropout_rng(derive_seed(cfg.seed, 12));
    double lr = cfg.learning_rate;
    double best_loss = std::numeric_limits<double>::infinity();
    TrainLog log;
    ForwardCache<T> cache;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto samples = stream.next_epoch();
        double loss_sum = 0.0;
        std::size_t wrong = 0;
        for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(cfg.minibatch)) {
            const std::size_t stop = std::min(samples.size(), start + static_cast<std::size_t>(cfg.minibatch));
            const T weight = static_cast<T>(1.0 / static_cast<double>(stop - start));
            auto grads = net.zero_gradients();
            for (std::size_t s = start; s < stop; ++s) {
                InkCharacter ink = normalize(samples[s].first);
                if (cfg.distort) ink = affine_distort(ink, distort_rng, cfg.distort_limits);
                const auto input = to_input<T>(render(ink, cfg.render));
                const auto probs = net.forward(input, true, &dropout_rng, &cache);
                const int label = samples[s].second;
                loss_sum += cross_entropy<T>(probs, label);
                if (argmax<T>(probs) != static_cast<std::size_t>(label)) ++wrong;
                net.backward(cache, label, grads, weight);
            }
            net.sgd_step(grads, static_cast<T>(lr));
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.learning_rate = lr;
        rec.train_loss = loss_sum / static_cast<double>(samples.size());
        rec.train_top1_error = static_cast<double>(wrong) / static_cast<double>(samples.size());
        if (!heldout.empty()) rec.heldout_top1_error = top1_error(net, heldout, cfg.render);
        log.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        switch (cfg.schedule) {
        case LrSchedule::plateau:
            if (rec.train_loss >= best_loss) lr *= cfg.lr_decay;
            break;
        case LrSchedule::every_epoch: lr *= cfg.lr_decay; break;
        case LrSchedule::constant: break;
        }
        best_loss = std::min(best_loss, rec.train_loss);
    }
    return log;
}

} // namespace inksig
