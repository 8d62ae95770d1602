#pragma once

// Shared fixtures and independent reference computations for the tests.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

#include <inksig/random.hpp>
#include <inksig/signature.hpp>
#include <inksig/trajectory.hpp>

namespace inksig {

inline InkCharacter make_char(std::initializer_list<std::initializer_list<std::pair<double, double>>> strokes,
                              std::string writer = "w", std::string label = "c") {
    InkCharacter ch;
    ch.writer_id = std::move(writer);
    ch.char_label = std::move(label);
    for (const auto& s : strokes) {
        Stroke st;
        for (auto [x, y] : s) st.points.push_back({x, y, static_cast<std::int64_t>(st.points.size())});
        ch.strokes.push_back(std::move(st));
    }
    return ch;
}

inline Stroke random_stroke(Rng& rng, int points, double lo, double hi) {
    Stroke s;
    for (int i = 0; i < points; ++i) s.points.push_back({uniform(rng, lo, hi), uniform(rng, lo, hi), i});
    return s;
}

inline InkCharacter random_character(Rng& rng, int strokes, double extent) {
    InkCharacter ch;
    ch.writer_id = "w";
    ch.char_label = "c";
    for (int s = 0; s < strokes; ++s)
        ch.strokes.push_back(random_stroke(rng, 1 + static_cast<int>(uniform_index(rng, 8)), 0.0, extent));
    return ch;
}

/// Number-of-strokes fixture: a character with `n` distinct strokes.
inline InkCharacter n_stroke_char(int n) {
    InkCharacter ch;
    ch.writer_id = "w";
    ch.char_label = "c";
    for (int s = 0; s < n; ++s)
        ch.strokes.push_back(
            Stroke{{{10.0 * s, 0.0, 0}, {10.0 * s + 5.0, 5.0 + s, 1}, {10.0 * s + 2.0, 9.0, 2}}});
    return ch;
}

namespace oracle {

/// Discrete iterated sums over strictly increasing index tuples, in
/// extended precision:
/// result[level offset + word] = sum_{i1 < ... < ik} d_{i1}^{a1} ... d_{ik}^{ak}.
/// Evaluated with running sums over the tuple's last index, which is the
/// same sum as the nested loops but linear in the number of increments.
inline std::vector<long double> strict_iterated_sums(const std::vector<std::pair<long double, long double>>& inc,
                                                    int level) {
    std::vector<long double> acc(sig_dim(level), 0.0L);
    acc[0] = 1.0L;
    for (const auto& [dx, dy] : inc) {
        // Update from the top level down so each step is used at most once
        // per tuple (strict ordering).
        for (int k = level; k >= 1; --k) {
            for (std::size_t w = 0; w < level_size(k); ++w) {
                const std::size_t prefix = w >> 1;
                const long double d = (w & 1U) ? dy : dx;
                acc[level_offset(k) + w] += acc[level_offset(k - 1) + prefix] * d;
            }
        }
    }
    return acc;
}

/// The same sums by explicit enumeration of ordered index tuples (k <= 3).
inline std::vector<long double> strict_iterated_sums_bruteforce(const std::vector<std::pair<long double, long double>>& inc,
                                                           int level) {
    std::vector<long double> out(sig_dim(level), 0.0L);
    out[0] = 1.0L;
    const std::size_t n = inc.size();
    auto c = [&](std::size_t i, std::size_t letter) { return letter ? inc[i].second : inc[i].first; };
    for (std::size_t w = 0; level >= 1 && w < 2; ++w)
        for (std::size_t i = 0; i < n; ++i) out[level_offset(1) + w] += c(i, w);
    for (std::size_t w = 0; level >= 2 && w < 4; ++w)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) out[level_offset(2) + w] += c(i, w >> 1) * c(j, w & 1);
    for (std::size_t w = 0; level >= 3 && w < 8; ++w)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                for (std::size_t k = j + 1; k < n; ++k)
                    out[level_offset(3) + w] += c(i, w >> 2) * c(j, (w >> 1) & 1) * c(k, w & 1);
    return out;
}

/// Each segment cut into `r` equal pieces.
inline std::vector<std::pair<long double, long double>> refine(const std::vector<Point>& pts, std::size_t r) {
    std::vector<std::pair<long double, long double>> inc;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const long double dx = (static_cast<long double>(pts[i].x) - pts[i - 1].x) / static_cast<long double>(r);
        const long double dy = (static_cast<long double>(pts[i].y) - pts[i - 1].y) / static_cast<long double>(r);
        for (std::size_t j = 0; j < r; ++j) inc.emplace_back(dx, dy);
    }
    return inc;
}

/// Iterated integrals of a polyline from discrete sums on uniform
/// refinements. With r pieces per segment the level-k sum is a polynomial
/// of degree k-1 in 1/r, so Lagrange extrapolation to 1/r = 0 through
/// `level` refinements (r0, 2 r0, ...) recovers the integrals. r0 is chosen
/// so every piece is at most `step_fraction` of the path length.
inline std::vector<double> refined_signature(const std::vector<Point>& pts, int level, double step_fraction = 1e-3) {
    double total = 0.0, longest = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double len = std::hypot(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y);
        total += len;
        longest = std::max(longest, len);
    }
    std::vector<double> out(sig_dim(level), 0.0);
    out[0] = 1.0;
    if (total == 0.0 || level == 0) return out;
    const auto r0 = static_cast<std::size_t>(std::ceil(longest / (step_fraction * total)));
    const int nodes = std::max(level, 1);
    std::vector<long double> h(nodes);
    std::vector<std::vector<long double>> sums;
    for (int i = 0; i < nodes; ++i) {
        const std::size_t r = r0 * static_cast<std::size_t>(i + 1);
        h[i] = 1.0L / static_cast<long double>(r);
        sums.push_back(strict_iterated_sums(refine(pts, r), level));
    }
    std::vector<long double> acc(out.size(), 0.0L);
    for (int i = 0; i < nodes; ++i) {
        long double weight = 1.0L;
        for (int j = 0; j < nodes; ++j)
            if (j != i) weight *= (0.0L - h[j]) / (h[i] - h[j]);
        for (std::size_t e = 1; e < out.size(); ++e) acc[e] += weight * sums[i][e];
    }
    for (std::size_t e = 1; e < out.size(); ++e) out[e] = static_cast<double>(acc[e]);
    return out;
}

} // namespace oracle
} // namespace inksig
