#pragma once

// Ink representation and geometric preprocessing: grid normalization,
// dense resampling, and random affine distortion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"
#include "random.hpp"

namespace inksig {

/// Side of the square input grid the network consumes.
inline constexpr double kGridSize = 96.0;
/// Side of the centered box a normalized character is scaled into.
inline constexpr double kBoxSize = 48.0;
inline constexpr double kGridCenter = kGridSize / 2.0;

struct Point {
    double x = 0.0;
    double y = 0.0;
    std::int64_t t = 0; ///< ordinal sample index within the stroke

    friend bool operator==(const Point&, const Point&) = default;
};

struct Stroke {
    std::vector<Point> points;

    friend bool operator==(const Stroke&, const Stroke&) = default;
};

struct InkCharacter {
    std::vector<Stroke> strokes;
    std::string writer_id;
    std::string char_label;
    /// Set once coordinates are in 96x96 grid pixels.
    bool normalized = false;

    std::size_t point_count() const noexcept {
        std::size_t n = 0;
        for (const auto& s : strokes) n += s.points.size();
        return n;
    }

    friend bool operator==(const InkCharacter&, const InkCharacter&) = default;
};

struct BoundingBox {
    double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;

    double width() const noexcept { return max_x - min_x; }
    double height() const noexcept { return max_y - min_y; }
};

inline void validate(const InkCharacter& ch) {
    if (ch.strokes.empty()) throw InvalidInput("character has no strokes");
    for (const auto& s : ch.strokes)
        if (s.points.empty()) throw InvalidInput("character contains an empty stroke");
}

inline BoundingBox bounding_box(const InkCharacter& ch) {
    validate(ch);
    BoundingBox box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& s : ch.strokes) {
        for (const auto& p : s.points) {
            box.min_x = std::min(box.min_x, p.x);
            box.min_y = std::min(box.min_y, p.y);
            box.max_x = std::max(box.max_x, p.x);
            box.max_y = std::max(box.max_y, p.y);
        }
    }
    return box;
}

/// Rewrites timestamps as 0, 1, 2, ... within each stroke.
inline void reindex_timestamps(InkCharacter& ch) {
    for (auto& s : ch.strokes)
        for (std::size_t i = 0; i < s.points.size(); ++i) s.points[i].t = static_cast<std::int64_t>(i);
}

/// True if every point lies in [0, 96) on both axes.
inline bool in_grid(const InkCharacter& ch) {
    for (const auto& s : ch.strokes)
        for (const auto& p : s.points)
            if (!(p.x >= 0.0 && p.x < kGridSize && p.y >= 0.0 && p.y < kGridSize)) return false;
    return true;
}

/// True if the tight bounding box lies inside the centered 48x48 region.
inline bool fits_center_box(const InkCharacter& ch, double tol = 1e-9) {
    const auto box = bounding_box(ch);
    const double lo = kGridCenter - kBoxSize / 2.0 - tol;
    const double hi = kGridCenter + kBoxSize / 2.0 + tol;
    return box.min_x >= lo && box.min_y >= lo && box.max_x <= hi && box.max_y <= hi;
}

/// Aspect-preserving scale and translation that puts the larger side of the
/// bounding box at 48 px, centered at (48, 48). A box that is degenerate in
/// one axis is scaled by the other; a single dot is only translated.
inline InkCharacter normalize(const InkCharacter& ch) {
    const auto box = bounding_box(ch);
    const double extent = std::max(box.width(), box.height());
    const double scale = extent > 0.0 ? kBoxSize / extent : 1.0;
    const double cx = 0.5 * (box.min_x + box.max_x);
    const double cy = 0.5 * (box.min_y + box.max_y);

    InkCharacter out = ch;
    for (auto& s : out.strokes) {
        for (auto& p : s.points) {
            p.x = (p.x - cx) * scale + kGridCenter;
            p.y = (p.y - cy) * scale + kGridCenter;
        }
    }
    out.normalized = true;
    return out;
}

/// Inserts linearly interpolated points so consecutive points are at most
/// `max_step` apart. Original vertices are kept; timestamps are re-indexed.
inline Stroke resample(const Stroke& s, double max_step = 0.5) {
    if (!(max_step > 0.0)) throw InvalidInput("resample: max_step must be positive");
    Stroke out;
    if (s.points.empty()) return out;
    out.points.reserve(s.points.size());
    out.points.push_back(s.points.front());
    for (std::size_t i = 1; i < s.points.size(); ++i) {
        const Point& a = s.points[i - 1];
        const Point& b = s.points[i];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        // Shave a relative epsilon so exact multiples of max_step do not
        // gain a spurious extra subdivision.
        const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil(len / max_step * (1.0 - 1e-12))));
        for (std::size_t j = 1; j < pieces; ++j) {
            const double f = static_cast<double>(j) / static_cast<double>(pieces);
            out.points.push_back(Point{a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), 0});
        }
        out.points.push_back(b);
    }
    for (std::size_t i = 0; i < out.points.size(); ++i) out.points[i].t = static_cast<std::int64_t>(i);
    return out;
}

inline InkCharacter resample(const InkCharacter& ch, double max_step = 0.5) {
    InkCharacter out = ch;
    for (auto& s : out.strokes) s = resample(s, max_step);
    return out;
}

/// Sampling bounds for the training-time affine distortion.
struct DistortLimits {
    double max_shift = 4.0;         ///< pixels, each axis
    double max_rotation_deg = 10.0; ///< about the grid center
    double min_scale = 0.9;
    double max_scale = 1.1;

    static DistortLimits identity() { return {0.0, 0.0, 1.0, 1.0}; }
};

struct AffineParams {
    double shift_x = 0.0;
    double shift_y = 0.0;
    double rotation_rad = 0.0;
    double scale = 1.0;

    bool is_identity() const noexcept {
        return shift_x == 0.0 && shift_y == 0.0 && rotation_rad == 0.0 && scale == 1.0;
    }
};

/// Rotation and isotropic scaling about the grid center, then translation.
inline InkCharacter apply_affine(const InkCharacter& ch, const AffineParams& a) {
    if (a.is_identity()) return ch;
    const double c = std::cos(a.rotation_rad) * a.scale;
    const double s = std::sin(a.rotation_rad) * a.scale;
    InkCharacter out = ch;
    for (auto& st : out.strokes) {
        for (auto& p : st.points) {
            const double dx = p.x - kGridCenter;
            const double dy = p.y - kGridCenter;
            p.x = c * dx - s * dy + kGridCenter + a.shift_x;
            p.y = s * dx + c * dy + kGridCenter + a.shift_y;
        }
    }
    return out;
}

inline AffineParams sample_affine(Rng& rng, const DistortLimits& limits) {
    AffineParams a;
    a.shift_x = uniform(rng, -limits.max_shift, limits.max_shift);
    a.shift_y = uniform(rng, -limits.max_shift, limits.max_shift);
    const double rot = limits.max_rotation_deg * std::numbers::pi / 180.0;
    a.rotation_rad = uniform(rng, -rot, rot);
    a.scale = uniform(rng, limits.min_scale, limits.max_scale);
    return a;
}

/// Random translation/rotation/scale of a normalized character. The result
/// stays inside the 96x96 grid; if a draw would push ink off the grid the
/// character is re-normalized instead.
inline InkCharacter affine_distort(const InkCharacter& ch, Rng& rng, const DistortLimits& limits = {}) {
    if (!ch.normalized) throw InvalidInput("affine_distort: character is not normalized");
    auto out = apply_affine(ch, sample_affine(rng, limits));
    if (!in_grid(out)) out = normalize(out);
    return out;
}

} // namespace inksig
