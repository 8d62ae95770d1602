#pragma once

// Paints per-point signature values onto 96x96 feature maps, plus the
// histogram equalization and PGM export used for visual inspection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "signature.hpp"
#include "trajectory.hpp"

namespace inksig {

inline constexpr int kGridPixels = 96;
inline constexpr double kRenderStep = 0.5;

enum class CollisionPolicy {
    last_write,   ///< later points (stroke order, then point order) overwrite
    max_magnitude ///< keep the vector with the largest level>=1 norm
};

/// M x 96 x 96 channel-major feature maps. Channel 0 is the pen-trace mask.
struct FeatureTensor {
    int channels = 0;
    int height = kGridPixels;
    int width = kGridPixels;
    int level = 0;
    int window = 2;
    std::vector<double> values;

    FeatureTensor() = default;
    FeatureTensor(int level_, int window_)
        : channels(static_cast<int>(sig_dim(level_))), level(level_), window(window_),
          values(static_cast<std::size_t>(channels) * kGridPixels * kGridPixels, 0.0) {}

    std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }

    double at(int c, int y, int x) const { return values[c * plane() + static_cast<std::size_t>(y) * width + x]; }
    double& at(int c, int y, int x) { return values[c * plane() + static_cast<std::size_t>(y) * width + x]; }

    std::span<const double> channel(int c) const { return {values.data() + c * plane(), plane()}; }
    std::span<double> channel(int c) { return {values.data() + c * plane(), plane()}; }

    friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

struct RenderOptions {
    int level = 3;
    int window = 2;
    CollisionPolicy collision = CollisionPolicy::last_write;
};

inline FeatureTensor render(const InkCharacter& ch, const RenderOptions& opt) {
    if (!ch.normalized) throw InvalidInput("render: character is not normalized");
    validate(ch);
    if (!in_grid(ch)) throw InvalidInput("render: character leaves the 96x96 grid");

    FeatureTensor t(opt.level, opt.window);
    const std::size_t dim = sig_dim(opt.level);
    std::vector<double> best_norm;
    if (opt.collision == CollisionPolicy::max_magnitude) best_norm.assign(t.plane(), -1.0);

    for (const auto& stroke : ch.strokes) {
        const Stroke dense = resample(stroke, kRenderStep);
        const auto sigs = windowed_signatures(dense, opt.level, opt.window);
        for (std::size_t i = 0; i < dense.points.size(); ++i) {
            const int px = std::clamp(static_cast<int>(std::floor(dense.points[i].x)), 0, kGridPixels - 1);
            const int py = std::clamp(static_cast<int>(std::floor(dense.points[i].y)), 0, kGridPixels - 1);
            const std::size_t pix = static_cast<std::size_t>(py) * kGridPixels + px;
            const auto v = sigs[i].values();
            if (opt.collision == CollisionPolicy::max_magnitude) {
                double norm = 0.0;
                for (std::size_t c = 1; c < dim; ++c) norm += v[c] * v[c];
                if (norm <= best_norm[pix]) continue;
                best_norm[pix] = norm;
            }
            for (std::size_t c = 0; c < dim; ++c) t.values[c * t.plane() + pix] = v[c];
        }
    }
    return t;
}

inline FeatureTensor render(const InkCharacter& ch, int level, int window = 2) {
    return render(ch, RenderOptions{level, window, CollisionPolicy::last_write});
}

/// Histogram equalization restricted to pixels where `mask` is nonzero.
/// Each masked pixel maps to the fraction of masked pixels with value <= its
/// own, so outputs lie in (0, 1]; unmasked pixels stay 0.
inline std::vector<double> equalize(std::span<const double> channel, std::span<const double> mask) {
    if (channel.size() != mask.size()) throw InvalidInput("equalize: mask size mismatch");
    std::vector<double> trace;
    for (std::size_t i = 0; i < channel.size(); ++i)
        if (mask[i] != 0.0) trace.push_back(channel[i]);
    if (trace.empty()) return {channel.begin(), channel.end()};
    std::sort(trace.begin(), trace.end());

    const double n = static_cast<double>(trace.size());
    std::vector<double> out(channel.size(), 0.0);
    for (std::size_t i = 0; i < channel.size(); ++i) {
        if (mask[i] == 0.0) continue;
        const auto rank = std::upper_bound(trace.begin(), trace.end(), channel[i]) - trace.begin();
        out[i] = static_cast<double>(rank) / n;
    }
    return out;
}

/// Equalization with the channel's own nonzero pixels as the trace.
inline std::vector<double> equalize(std::span<const double> channel) {
    std::vector<double> mask(channel.size());
    std::transform(channel.begin(), channel.end(), mask.begin(), [](double v) { return v != 0.0 ? 1.0 : 0.0; });
    return equalize(channel, mask);
}

/// Linear min-max scaling of the masked pixels to [0, 1]. A constant trace maps to 1.
inline std::vector<double> stretch(std::span<const double> channel, std::span<const double> mask) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < channel.size(); ++i) {
        if (mask[i] == 0.0) continue;
        lo = std::min(lo, channel[i]);
        hi = std::max(hi, channel[i]);
    }
    std::vector<double> out(channel.size(), 0.0);
    if (!(hi >= lo)) return out;
    for (std::size_t i = 0; i < channel.size(); ++i) {
        if (mask[i] == 0.0) continue;
        out[i] = hi > lo ? (channel[i] - lo) / (hi - lo) : 1.0;
    }
    return out;
}

/// Binary P5 PGM, 8-bit, no comment lines. Values are clamped to [0, 1].
inline void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, int width, int height) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "P5\n" << width << ' ' << height << "\n255\n";
    std::vector<char> bytes(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i)
        bytes[i] = static_cast<char>(static_cast<std::uint8_t>(std::lround(std::clamp(pixels[i], 0.0, 1.0) * 255.0)));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

/// One PGM per channel, named `<stem>_chNN.pgm`. Channel 0 supplies the trace
/// mask; with `equalized` false, channels are min-max stretched instead.
inline std::vector<std::filesystem::path> export_images(const FeatureTensor& t, const std::filesystem::path& dir,
                                                        const std::string& stem, bool equalized = true) {
    std::vector<std::filesystem::path> written;
    const auto mask = t.channel(0);
    for (int c = 0; c < t.channels; ++c) {
        const auto img = equalized ? equalize(t.channel(c), mask) : stretch(t.channel(c), mask);
        char name[32];
        std::snprintf(name, sizeof name, "_ch%02d.pgm", c);
        auto path = dir / (stem + name);
        write_pgm(path, img, t.width, t.height);
        written.push_back(std::move(path));
    }
    return written;
}

/// Optional per-channel input scaling: divide each channel by its largest
/// absolute value over a reference set. Off by default in training.
struct ChannelScale {
    std::vector<double> inv_max;

    static ChannelScale fit(std::span<const FeatureTensor> tensors) {
        ChannelScale s;
        if (tensors.empty()) return s;
        std::vector<double> mx(tensors.front().channels, 0.0);
        for (const auto& t : tensors)
            for (int c = 0; c < t.channels; ++c)
                for (double v : t.channel(c)) mx[c] = std::max(mx[c], std::abs(v));
        s.inv_max.resize(mx.size());
        for (std::size_t c = 0; c < mx.size(); ++c) s.inv_max[c] = mx[c] > 0.0 ? 1.0 / mx[c] : 1.0;
        return s;
    }

    void apply(FeatureTensor& t) const {
        if (inv_max.empty()) return;
        for (int c = 0; c < t.channels; ++c)
            for (double& v : t.channel(c)) v *= inv_max[c];
    }
};

} // namespace inksig
