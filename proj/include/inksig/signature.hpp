#pragma once

// Truncated path signatures of planar piecewise-linear paths.
//
// Layout: levels 0..n are stored back to back. Level k holds 2^k entries
// indexed by words over {x, y} of length k in lexicographic order, with the
// first letter most significant and x=0, y=1. Level k starts at offset
// 2^k - 1, so a level-n signature has 2^(n+1) - 1 entries.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "error.hpp"
#include "trajectory.hpp"

namespace inksig {

/// Highest truncation level supported.
inline constexpr int kMaxSignatureLevel = 6;

/// Number of entries of a level-n planar signature: 2^(n+1) - 1.
constexpr std::size_t sig_dim(int n) {
    if (n < 0 || n > 30) throw InvalidInput("sig_dim: level out of range");
    return (std::size_t{1} << (n + 1)) - 1;
}

constexpr std::size_t level_offset(int k) { return (std::size_t{1} << k) - 1; }
constexpr std::size_t level_size(int k) { return std::size_t{1} << k; }

struct Displacement {
    double dx = 0.0;
    double dy = 0.0;
};

class Signature {
public:
    Signature() : Signature(0) {}

    /// Identity element (1 | 0 | 0 ...) at level n.
    explicit Signature(int level) : level_(level), values_(checked_dim(level), 0.0) { values_[0] = 1.0; }

    int level() const noexcept { return level_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<const double> level_block(int k) const { return {values_.data() + level_offset(k), level_size(k)}; }
    std::span<double> level_block(int k) { return {values_.data() + level_offset(k), level_size(k)}; }

    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    /// Entry for a word given as 1-based letters (1 = x, 2 = y).
    double word(std::initializer_list<int> letters) const {
        std::size_t idx = 0;
        for (int l : letters) idx = (idx << 1) | static_cast<std::size_t>(l - 1);
        return values_[level_offset(static_cast<int>(letters.size())) + idx];
    }

    friend bool operator==(const Signature&, const Signature&) = default;

private:
    static std::size_t checked_dim(int level) {
        if (level < 0 || level > kMaxSignatureLevel) throw InvalidInput("signature level must be in [0, 6]");
        return sig_dim(level);
    }

    int level_;
    std::vector<double> values_;
};

/// Signature of a single straight segment: level k is d^{(x)k} / k!.
inline Signature segment_signature(Displacement d, int n) {
    Signature sig(n);
    auto v = sig.values();
    for (int k = 1; k <= n; ++k) {
        const std::size_t prev = level_offset(k - 1);
        const std::size_t cur = level_offset(k);
        const double inv_k = 1.0 / static_cast<double>(k);
        for (std::size_t i = 0; i < level_size(k - 1); ++i) {
            const double base = v[prev + i] * inv_k;
            v[cur + 2 * i] = base * d.dx;
            v[cur + 2 * i + 1] = base * d.dy;
        }
    }
    return sig;
}

/// Truncated tensor product: level k of the result is sum_{i+j=k} a_i (x) b_j.
/// This is the signature of path a followed by path b.
inline Signature chen_concat(const Signature& a, const Signature& b) {
    if (a.level() != b.level()) throw InvalidInput("chen_concat: level mismatch");
    const int n = a.level();
    Signature out(n);
    auto o = out.values();
    const auto av = a.values();
    const auto bv = b.values();
    for (int k = 1; k <= n; ++k) {
        double* ok = o.data() + level_offset(k);
        for (int i = 0; i <= k; ++i) {
            const int j = k - i;
            const double* ai = av.data() + level_offset(i);
            const double* bj = bv.data() + level_offset(j);
            const std::size_t nb = level_size(j);
            for (std::size_t u = 0; u < level_size(i); ++u) {
                const double au = ai[u];
                if (au == 0.0) continue;
                double* dst = ok + u * nb;
                for (std::size_t w = 0; w < nb; ++w) dst[w] += au * bj[w];
            }
        }
    }
    return out;
}

/// In-place sig <- chen_concat(sig, segment_signature(d)). Levels are
/// updated from the top down so lower levels are still the old values.
inline void extend_by_segment(Signature& sig, Displacement d) {
    const int n = sig.level();
    const auto seg = segment_signature(d, n);
    auto v = sig.values();
    const auto sv = seg.values();
    for (int k = n; k >= 1; --k) {
        double* vk = v.data() + level_offset(k);
        for (int j = 1; j <= k; ++j) {
            const int i = k - j;
            const double* si = v.data() + level_offset(i);
            const double* dj = sv.data() + level_offset(j);
            const std::size_t nb = level_size(j);
            for (std::size_t u = 0; u < level_size(i); ++u) {
                const double su = si[u];
                if (su == 0.0) continue;
                double* dst = vk + u * nb;
                for (std::size_t w = 0; w < nb; ++w) dst[w] += su * dj[w];
            }
        }
    }
}

inline Signature path_signature(std::span<const Point> points, int n) {
    Signature sig(n);
    for (std::size_t i = 1; i < points.size(); ++i)
        extend_by_segment(sig, {points[i].x - points[i - 1].x, points[i].y - points[i - 1].y});
    return sig;
}

inline Signature path_signature(const Stroke& s, int n) { return path_signature(std::span<const Point>(s.points), n); }

/// Window radius meaning "from the stroke start up to the point".
inline constexpr int kPrefixWindow = std::numeric_limits<int>::max();

/// Per-point signatures. Point i gets the signature of the sub-polyline over
/// indices [max(0, i - delta), min(last, i + delta)]; with kPrefixWindow the
/// window is [0, i]. Windows never cross stroke boundaries.
inline std::vector<Signature> windowed_signatures(const Stroke& s, int n, int delta = 2) {
    if (delta < 1) throw InvalidInput("windowed_signatures: delta must be >= 1");
    const auto& pts = s.points;
    std::vector<Signature> out;
    out.reserve(pts.size());
    if (delta == kPrefixWindow) {
        Signature running(n);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i > 0) extend_by_segment(running, {pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y});
            out.push_back(running);
        }
        return out;
    }
    const auto r = static_cast<std::size_t>(delta);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const std::size_t lo = i >= r ? i - r : 0;
        const std::size_t hi = std::min(pts.size() - 1, i + r);
        out.push_back(path_signature(std::span<const Point>(pts).subspan(lo, hi - lo + 1), n));
    }
    return out;
}

} // namespace inksig
