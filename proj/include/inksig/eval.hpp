#pragma once

// Identification protocol: multi-variant test averaging, top-k ranks and
// grouped ("mimic material") evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cnn.hpp"
#include "dropstroke.hpp"
#include "error.hpp"
#include "random.hpp"
#include "train.hpp"

namespace inksig {

/// Probability vector over enrolled writers.
struct Prediction {
    std::vector<double> probs;
};

enum class CombineRule {
    mean,    ///< arithmetic mean of probability vectors
    log_sum, ///< sum of log-probabilities, renormalized
};

template <class T>
Prediction predict(const Network<T>& net, const InkCharacter& ch, const RenderOptions& render_opt) {
    const auto out = net.forward(character_input<T>(ch, render_opt));
    return {{out.begin(), out.end()}};
}

/// Combines predictions into one distribution. The mean is accumulated in
/// double, so averaging up to 2^29 copies of the same single-precision
/// prediction returns it unchanged.
inline Prediction combine(std::span<const Prediction> preds, CombineRule rule = CombineRule::mean) {
    if (preds.empty()) throw InvalidInput("combine: no predictions");
    const std::size_t w = preds.front().probs.size();
    Prediction out{std::vector<double>(w, 0.0)};
    if (rule == CombineRule::mean) {
        for (const auto& p : preds)
            for (std::size_t i = 0; i < w; ++i) out.probs[i] += p.probs[i];
        for (auto& v : out.probs) v /= static_cast<double>(preds.size());
        return out;
    }
    for (const auto& p : preds)
        for (std::size_t i = 0; i < w; ++i) out.probs[i] += std::log(std::max(p.probs[i], 1e-300));
    const double mx = *std::max_element(out.probs.begin(), out.probs.end());
    double sum = 0.0;
    for (auto& v : out.probs) sum += (v = std::exp(v - mx));
    for (auto& v : out.probs) v /= sum;
    return out;
}

/// Mean prediction over `tests` DropStroke variants of `ch`. With tests == 1
/// the prototype itself is used.
template <class T>
Prediction averaged_predict(const Network<T>& net, const InkCharacter& ch, int tests, const DropPolicy& policy,
                            Rng& rng, const RenderOptions& render_opt) {
    if (tests < 1) throw InvalidInput("averaged_predict: tests must be >= 1");
    if (tests == 1) return predict(net, ch, render_opt);
    std::vector<Prediction> preds;
    preds.reserve(static_cast<std::size_t>(tests));
    for (int i = 0; i < tests; ++i) preds.push_back(predict(net, sample_variant(ch, policy, rng), render_opt));
    return combine(preds);
}

struct RankTable {
    std::vector<int> ks;
    std::vector<double> accuracy; ///< fraction in [0, 1], one per k
    std::size_t samples = 0;

    double at(int k) const {
        for (std::size_t i = 0; i < ks.size(); ++i)
            if (ks[i] == k) return accuracy[i];
        throw InvalidInput("rank table has no k = " + std::to_string(k));
    }
};

/// Zero-based rank of the true writer. Ties go to the lower writer index.
inline std::size_t rank_of(const Prediction& p, int truth) {
    const double pt = p.probs.at(static_cast<std::size_t>(truth));
    std::size_t r = 0;
    for (std::size_t i = 0; i < p.probs.size(); ++i)
        if (p.probs[i] > pt || (p.probs[i] == pt && static_cast<int>(i) < truth)) ++r;
    return r;
}

inline RankTable topk_accuracy(std::span<const Prediction> preds, std::span<const int> truth, std::span<const int> ks) {
    if (preds.empty()) throw InvalidInput("topk_accuracy: no predictions");
    if (preds.size() != truth.size()) throw InvalidInput("topk_accuracy: prediction/label count mismatch");
    RankTable t{{ks.begin(), ks.end()}, std::vector<double>(ks.size(), 0.0), preds.size()};
    for (std::size_t s = 0; s < preds.size(); ++s) {
        const std::size_t r = rank_of(preds[s], truth[s]);
        for (std::size_t j = 0; j < ks.size(); ++j)
            if (r < static_cast<std::size_t>(ks[j])) t.accuracy[j] += 1.0;
    }
    for (auto& a : t.accuracy) a /= static_cast<double>(preds.size());
    return t;
}

struct EvalConfig {
    int tests_per_char = 1;
    std::vector<int> topk{1, 5, 10, 15, 20};
    std::vector<int> group_sizes{1, 2, 3, 4, 5, 6, 10, 15, 20};
    std::uint64_t seed = 0;
    DropPolicy policy{};
    CombineRule combine = CombineRule::mean;
    RenderOptions render{};
};

/// averaged_predict for every test character; result[w][i] belongs to the
/// i-th character of writer w. Each character draws from its own seed
/// derive_seed(seed, w, i), so results do not depend on evaluation order.
template <class T>
std::vector<std::vector<Prediction>> character_predictions(const Network<T>& net,
                                                           const std::vector<std::vector<InkCharacter>>& by_writer,
                                                           const EvalConfig& cfg) {
    std::vector<std::vector<Prediction>> out(by_writer.size());
    for (std::size_t w = 0; w < by_writer.size(); ++w) {
        for (std::size_t i = 0; i < by_writer[w].size(); ++i) {
            Rng rng(derive_seed(cfg.seed, w, i));
            out[w].push_back(averaged_predict(net, by_writer[w][i], cfg.tests_per_char, cfg.policy, rng, cfg.render));
        }
    }
    return out;
}

/// Splits each writer's predictions sequentially into groups of exactly
/// `group_size` (the remainder is dropped), combines each group and scores.
inline RankTable group_eval(const std::vector<std::vector<Prediction>>& preds_by_writer, int group_size,
                            std::span<const int> ks, CombineRule rule = CombineRule::mean) {
    if (group_size < 1) throw ConfigError("group size must be >= 1");
    std::vector<Prediction> grouped;
    std::vector<int> truth;
    for (std::size_t w = 0; w < preds_by_writer.size(); ++w) {
        const auto& p = preds_by_writer[w];
        const auto g = static_cast<std::size_t>(group_size);
        for (std::size_t start = 0; start + g <= p.size(); start += g) {
            grouped.push_back(g == 1 ? p[start] : combine(std::span(p).subspan(start, g), rule));
            truth.push_back(static_cast<int>(w));
        }
    }
    if (grouped.empty()) throw ConfigError("no writer has " + std::to_string(group_size) + " test characters");
    return topk_accuracy(grouped, truth, ks);
}

template <class T>
RankTable group_eval(const Network<T>& net, const std::vector<std::vector<InkCharacter>>& by_writer, int group_size,
                     const EvalConfig& cfg) {
    return group_eval(character_predictions(net, by_writer, cfg), group_size, cfg.topk, cfg.combine);
}

} // namespace inksig
