#pragma once

// DropStroke: new characters formed from non-empty subsets of a prototype's
// strokes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "error.hpp"
#include "random.hpp"
#include "trajectory.hpp"

namespace inksig {

/// Largest stroke count enumerate_variants will expand.
inline constexpr int kEnumerateLimit = 20;

/// Number of non-empty stroke subsets of an n-stroke character: 2^n - 1.
constexpr std::uint64_t variant_count(int n_strokes) {
    if (n_strokes < 1 || n_strokes > 63) throw InvalidInput("variant_count: stroke count must be in [1, 63]");
    return (std::uint64_t{1} << n_strokes) - 1;
}

/// Binomial coefficient C(n, m) in exact integer arithmetic.
constexpr std::uint64_t drop_count(int n, int m) {
    if (n < 0 || m < 0 || m > n) throw InvalidInput("drop_count: requires 0 <= m <= n");
    m = std::min(m, n - m);
    std::uint64_t c = 1;
    for (int i = 1; i <= m; ++i) {
        // c * (n - m + i) is divisible by i at every step.
        const std::uint64_t g = std::gcd(c, static_cast<std::uint64_t>(i));
        const std::uint64_t num = static_cast<std::uint64_t>(n - m + i) / (static_cast<std::uint64_t>(i) / g);
        std::uint64_t next = 0;
        if (__builtin_mul_overflow(c / g, num, &next)) throw InvalidInput("drop_count: result overflows 64 bits");
        c = next;
    }
    return c;
}

/// Character made of the strokes selected by `mask` (bit i = stroke i).
inline InkCharacter select_strokes(const InkCharacter& ch, std::uint64_t mask) {
    InkCharacter out;
    out.writer_id = ch.writer_id;
    out.char_label = ch.char_label;
    out.normalized = ch.normalized;
    for (std::size_t i = 0; i < ch.strokes.size(); ++i)
        if (mask >> i & 1U) out.strokes.push_back(ch.strokes[i]);
    return out;
}

/// All 2^n - 1 non-empty stroke subsets in ascending bitmask order.
inline std::vector<InkCharacter> enumerate_variants(const InkCharacter& ch) {
    validate(ch);
    const int n = static_cast<int>(ch.strokes.size());
    if (n > kEnumerateLimit)
        throw InvalidInput("enumerate_variants: " + std::to_string(n) + " strokes exceeds the limit of " +
                           std::to_string(kEnumerateLimit) + "; sample variants instead");
    std::vector<InkCharacter> out;
    out.reserve(variant_count(n));
    for (std::uint64_t mask = 1; mask <= variant_count(n); ++mask) out.push_back(select_strokes(ch, mask));
    return out;
}

enum class DropMode {
    enumerate,              ///< uniform over every non-empty subset
    sample_uniform_variant, ///< uniform over subsets with at most floor(f*n) strokes dropped
    sample_uniform_m,       ///< m ~ U{0..floor(f*n)}, then a uniform m-subset is dropped
};

struct DropPolicy {
    DropMode mode = DropMode::sample_uniform_m;
    double max_drop_fraction = 0.5;
    std::uint64_t seed = 0;

    /// Policy that never drops (yields the prototype).
    static DropPolicy none() { return {DropMode::sample_uniform_m, 0.0, 0}; }
};

inline int max_droppable(int n, const DropPolicy& p) {
    if (!(p.max_drop_fraction >= 0.0 && p.max_drop_fraction < 1.0))
        throw InvalidInput("max_drop_fraction must be in [0, 1)");
    if (p.mode == DropMode::enumerate) return n - 1;
    return std::min(n - 1, static_cast<int>(std::floor(p.max_drop_fraction * n)));
}

/// Uniform m-subset of {0..n-1}, returned as a bitmask of the dropped strokes.
inline std::uint64_t random_subset(int n, int m, Rng& rng) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first m slots are a uniform m-subset.
    for (int i = 0; i < m; ++i) std::swap(idx[i], idx[i + static_cast<int>(uniform_index(rng, n - i))]);
    std::uint64_t mask = 0;
    for (int i = 0; i < m; ++i) mask |= std::uint64_t{1} << idx[i];
    return mask;
}

/// Draws one variant of `ch`. Always keeps at least one stroke.
inline InkCharacter sample_variant(const InkCharacter& ch, const DropPolicy& policy, Rng& rng) {
    validate(ch);
    const int n = static_cast<int>(ch.strokes.size());
    if (n > 63) throw InvalidInput("sample_variant: more than 63 strokes");
    const int max_m = max_droppable(n, policy);
    if (max_m == 0) return ch;

    int m = 0;
    if (policy.mode == DropMode::sample_uniform_m) {
        m = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(max_m) + 1));
    } else {
        // Choose m with probability C(n, m) / sum_{j <= max_m} C(n, j); a
        // uniform m-subset then makes every admissible subset equally likely.
        std::uint64_t total = 0;
        for (int j = 0; j <= max_m; ++j) total += drop_count(n, j);
        std::uint64_t r = std::uniform_int_distribution<std::uint64_t>(0, total - 1)(rng);
        while (r >= drop_count(n, m)) r -= drop_count(n, m++);
    }
    if (m == 0) return ch;
    const std::uint64_t full = variant_count(n);
    return select_strokes(ch, full & ~random_subset(n, m, rng));
}

/// Per-epoch training stream with equal exposure for every writer: each of
/// the `quota` slots per writer picks a uniformly random prototype of that
/// writer and then one DropStroke variant of it. Epoch order is shuffled.
class BalancedTrainingStream {
public:
    BalancedTrainingStream(std::vector<std::vector<InkCharacter>> prototypes_by_writer, int per_writer_quota,
                           DropPolicy policy)
        : by_writer_(std::move(prototypes_by_writer)), quota_(per_writer_quota), policy_(policy), rng_(policy.seed) {
        if (by_writer_.empty()) throw ConfigError("training stream has no writers");
        if (quota_ < 1) throw ConfigError("per-writer quota must be >= 1");
        for (std::size_t w = 0; w < by_writer_.size(); ++w)
            if (by_writer_[w].empty()) throw ConfigError("writer #" + std::to_string(w) + " has no prototypes");
    }

    std::size_t writers() const noexcept { return by_writer_.size(); }
    int quota() const noexcept { return quota_; }
    std::size_t epoch_size() const noexcept { return by_writer_.size() * static_cast<std::size_t>(quota_); }

    /// Samples for one epoch, paired with the writer index they came from.
    std::vector<std::pair<InkCharacter, int>> next_epoch() {
        std::vector<std::pair<InkCharacter, int>> out;
        out.reserve(epoch_size());
        for (std::size_t w = 0; w < by_writer_.size(); ++w) {
            const auto& protos = by_writer_[w];
            for (int q = 0; q < quota_; ++q) {
                const auto& proto = protos[uniform_index(rng_, protos.size())];
                out.emplace_back(sample_variant(proto, policy_, rng_), static_cast<int>(w));
            }
        }
        std::shuffle(out.begin(), out.end(), rng_);
        return out;
    }

private:
    std::vector<std::vector<InkCharacter>> by_writer_;
    int quota_;
    DropPolicy policy_;
    Rng rng_;
};

} // namespace inksig
