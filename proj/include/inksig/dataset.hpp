#pragma once

// Corpus ingestion (POT binary, JSON lines), stroke statistics,
// text-independent splits and the synthetic writer generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dropstroke.hpp"
#include "error.hpp"
#include "random.hpp"
#include "trajectory.hpp"

namespace inksig {

struct Corpus {
    std::vector<InkCharacter> characters;
    std::string provenance; ///< "pot", "jsonl" or "synthetic"

    /// Writer ids in first-appearance order.
    std::vector<std::string> writers() const {
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (const auto& c : characters)
            if (seen.insert(c.writer_id).second) out.push_back(c.writer_id);
        return out;
    }

    std::vector<std::string> char_labels() const {
        std::set<std::string> s;
        for (const auto& c : characters) s.insert(c.char_label);
        return {s.begin(), s.end()};
    }

    /// Characters grouped by writer, in `writers()` order, dataset order kept.
    std::vector<std::vector<InkCharacter>> by_writer() const { return group_by(writers()); }

    /// Characters grouped by the given writer table. Unknown writers are skipped.
    std::vector<std::vector<InkCharacter>> group_by(const std::vector<std::string>& writer_table) const {
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < writer_table.size(); ++i) index[writer_table[i]] = i;
        std::vector<std::vector<InkCharacter>> out(writer_table.size());
        for (const auto& c : characters)
            if (auto it = index.find(c.writer_id); it != index.end()) out[it->second].push_back(c);
        return out;
    }
};

// ---------------------------------------------------------------------------
// POT binary
//
// Per sample, little-endian:
//   u16 sample_size   total bytes of the record, this field included
//   u8  tag[4]        character code
//   u16 stroke_count
//   s16 x, s16 y ...  points; (-1, 0) ends a stroke, (-1, -1) ends the sample

struct PotOptions {
    /// Reverse the byte order of the tag before hex-encoding it.
    bool swap_tag_bytes = false;
};

namespace detail {

inline std::string tag_to_label(const std::uint8_t* tag, bool swap) {
    static constexpr char hex[] = "0123456789abcdef";
    std::string s;
    for (int i = 0; i < 4; ++i) {
        const std::uint8_t b = tag[swap ? i ^ 1 : i];
        s += hex[b >> 4];
        s += hex[b & 0xF];
    }
    return s;
}

inline bool label_to_tag(const std::string& label, std::uint8_t* tag, bool swap) {
    if (label.size() != 8) return false;
    for (int i = 0; i < 4; ++i) {
        unsigned v = 0;
        for (int j = 0; j < 2; ++j) {
            const char ch = label[2 * i + j];
            v <<= 4;
            if (ch >= '0' && ch <= '9') v |= static_cast<unsigned>(ch - '0');
            else if (ch >= 'a' && ch <= 'f') v |= static_cast<unsigned>(ch - 'a' + 10);
            else if (ch >= 'A' && ch <= 'F') v |= static_cast<unsigned>(ch - 'A' + 10);
            else return false;
        }
        tag[swap ? i ^ 1 : i] = static_cast<std::uint8_t>(v);
    }
    return true;
}

inline std::uint16_t rd_u16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}
inline std::int16_t rd_s16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::int16_t>(rd_u16(b, at));
}
inline void wr_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

} // namespace detail

/// Decodes every sample in a POT stream. All samples get `writer_id`, since
/// a POT file holds one writer.
inline Corpus parse_pot(std::span<const std::uint8_t> bytes, const std::string& writer_id, PotOptions opt = {}) {
    Corpus corpus{{}, "pot"};
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const std::size_t start = pos;
        if (bytes.size() - pos < 8) throw ParseError("truncated sample header", pos);
        const std::size_t declared = detail::rd_u16(bytes, pos);
        if (declared < 12) throw ParseError("sample size field too small", pos);
        if (bytes.size() - start < declared) throw ParseError("sample size exceeds remaining stream", start);
        const std::size_t end = start + declared;

        InkCharacter ch;
        ch.writer_id = writer_id;
        ch.char_label = detail::tag_to_label(bytes.data() + pos + 2, opt.swap_tag_bytes);
        const int stroke_count = detail::rd_u16(bytes, pos + 6);
        pos += 8;

        Stroke cur;
        bool finished = false;
        while (!finished) {
            if (end - pos < 4) throw ParseError("sample ended without a (-1,-1) terminator", pos);
            const std::int16_t x = detail::rd_s16(bytes, pos);
            const std::int16_t y = detail::rd_s16(bytes, pos + 2);
            if (x == -1 && y == 0) {
                if (cur.points.empty()) throw ParseError("empty stroke", pos);
                ch.strokes.push_back(std::move(cur));
                cur = {};
            } else if (x == -1 && y == -1) {
                if (!cur.points.empty()) throw ParseError("sample terminator inside an unterminated stroke", pos);
                finished = true;
            } else {
                cur.points.push_back({static_cast<double>(x), static_cast<double>(y),
                                      static_cast<std::int64_t>(cur.points.size())});
            }
            pos += 4;
        }
        if (pos != end)
            throw ParseError("declared sample size " + std::to_string(declared) + " disagrees with content (" +
                                 std::to_string(pos - start) + " bytes)",
                             start);
        if (static_cast<int>(ch.strokes.size()) != stroke_count)
            throw ParseError("stroke count field says " + std::to_string(stroke_count) + " but " +
                                 std::to_string(ch.strokes.size()) + " strokes were terminated",
                             start + 6);
        if (ch.strokes.empty()) throw ParseError("sample has no strokes", start);
        corpus.characters.push_back(std::move(ch));
    }
    return corpus;
}

/// Encodes characters as POT records. Labels must be 8 hex digits and
/// coordinates integers that fit in int16 (and are not -1).
inline std::vector<std::uint8_t> serialize_pot(std::span<const InkCharacter> chars, PotOptions opt = {}) {
    std::vector<std::uint8_t> out;
    for (const auto& ch : chars) {
        validate(ch);
        std::uint8_t tag[4];
        if (!detail::label_to_tag(ch.char_label, tag, opt.swap_tag_bytes))
            throw InvalidInput("POT labels must be 8 hex digits, got '" + ch.char_label + "'");
        std::size_t size = 8 + 4;
        for (const auto& s : ch.strokes) size += 4 * (s.points.size() + 1);
        if (size > 0xFFFF) throw InvalidInput("character too large for a POT record");
        if (ch.strokes.size() > 0xFFFF) throw InvalidInput("too many strokes for a POT record");
        detail::wr_u16(out, static_cast<std::uint16_t>(size));
        out.insert(out.end(), tag, tag + 4);
        detail::wr_u16(out, static_cast<std::uint16_t>(ch.strokes.size()));
        for (const auto& s : ch.strokes) {
            for (const auto& p : s.points) {
                if (p.x != std::round(p.x) || p.y != std::round(p.y) || p.x < -32768 || p.x > 32767 ||
                    p.y < -32768 || p.y > 32767 || p.x == -1)
                    throw InvalidInput("POT coordinates must be int16 values with x != -1");
                detail::wr_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(p.x)));
                detail::wr_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(p.y)));
            }
            detail::wr_u16(out, 0xFFFF);
            detail::wr_u16(out, 0);
        }
        detail::wr_u16(out, 0xFFFF);
        detail::wr_u16(out, 0xFFFF);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON lines: {"writer": "...", "char": "...", "strokes": [[[x, y], ...], ...]}

namespace detail {
inline nlohmann::json coord_json(double v) {
    if (v == std::round(v) && std::abs(v) < 9.0e15) return static_cast<std::int64_t>(v);
    return v;
}
} // namespace detail

inline Corpus parse_jsonl(std::istream& in) {
    Corpus corpus{{}, "jsonl"};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            InkCharacter ch;
            ch.writer_id = j.at("writer").get<std::string>();
            ch.char_label = j.at("char").get<std::string>();
            for (const auto& js : j.at("strokes")) {
                Stroke s;
                for (const auto& jp : js) {
                    if (!jp.is_array() || jp.size() != 2) throw InvalidInput("point must be [x, y]");
                    s.points.push_back(
                        {jp[0].get<double>(), jp[1].get<double>(), static_cast<std::int64_t>(s.points.size())});
                }
                ch.strokes.push_back(std::move(s));
            }
            validate(ch);
            corpus.characters.push_back(std::move(ch));
        } catch (const std::exception& e) {
            throw ParseError("JSONL line " + std::to_string(line_no) + ": " + e.what(),
                             static_cast<std::size_t>(line_no));
        }
    }
    return corpus;
}

inline void write_jsonl(std::ostream& out, std::span<const InkCharacter> chars) {
    for (const auto& ch : chars) {
        nlohmann::json strokes = nlohmann::json::array();
        for (const auto& s : ch.strokes) {
            nlohmann::json pts = nlohmann::json::array();
            for (const auto& p : s.points) pts.push_back({detail::coord_json(p.x), detail::coord_json(p.y)});
            strokes.push_back(std::move(pts));
        }
        nlohmann::json j;
        j["writer"] = ch.writer_id;
        j["char"] = ch.char_label;
        j["strokes"] = std::move(strokes);
        out << j.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Stroke-count statistics

struct StrokeStats {
    /// stroke count -> number of characters with that many strokes
    std::map<int, std::uint64_t> histogram;
    std::uint64_t total = 0;
};

/// Without DropStroke: plain histogram of stroke counts. With it, an
/// n-stroke prototype contributes C(n, j) characters at every surviving
/// count j = 1..n, 2^n - 1 in total.
inline StrokeStats stroke_stats(std::span<const InkCharacter> chars, bool with_dropstroke) {
    StrokeStats st;
    for (const auto& ch : chars) {
        const int n = static_cast<int>(ch.strokes.size());
        if (!with_dropstroke) {
            ++st.histogram[n];
            ++st.total;
            continue;
        }
        for (int j = 1; j <= n; ++j) st.histogram[j] += drop_count(n, n - j);
        st.total += variant_count(n);
    }
    return st;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
    std::set<std::string> train_classes;
    std::set<std::string> test_classes;
    std::uint64_t seed = 0;
};

/// Picks `train_count` character classes at random for training; the rest test.
inline SplitSpec random_class_split(const Corpus& corpus, std::size_t train_count, std::uint64_t seed) {
    auto labels = corpus.char_labels();
    if (train_count > labels.size())
        throw ConfigError("split asks for " + std::to_string(train_count) + " training classes but the corpus has " +
                          std::to_string(labels.size()));
    Rng rng(seed);
    std::shuffle(labels.begin(), labels.end(), rng);
    SplitSpec s;
    s.seed = seed;
    s.train_classes.insert(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(train_count));
    s.test_classes.insert(labels.begin() + static_cast<std::ptrdiff_t>(train_count), labels.end());
    return s;
}

struct SplitResult {
    Corpus train;
    Corpus test;
    std::vector<std::string> warnings;
};

inline SplitResult make_split(const Corpus& corpus, const SplitSpec& spec) {
    for (const auto& c : spec.train_classes)
        if (spec.test_classes.contains(c)) throw ConfigError("class '" + c + "' is on both sides of the split");
    SplitResult r{{{}, corpus.provenance}, {{}, corpus.provenance}, {}};
    for (const auto& ch : corpus.characters) {
        if (spec.train_classes.contains(ch.char_label)) r.train.characters.push_back(ch);
        else if (spec.test_classes.contains(ch.char_label)) r.test.characters.push_back(ch);
    }
    const auto train_writers = r.train.writers();
    const std::set<std::string> known(train_writers.begin(), train_writers.end());
    for (const auto& w : r.test.writers())
        if (!known.contains(w)) r.warnings.push_back("writer '" + w + "' has no training characters and cannot be identified");
    return r;
}

// ---------------------------------------------------------------------------
// Synthetic writers

/// Handwriting habits of one synthetic writer.
struct WriterStyle {
    double slant = 0.0;        ///< horizontal shear per unit height
    double curvature = 0.0;    ///< stroke bow as a fraction of stroke length
    double length_scale = 1.0; ///< stroke length relative to the template
    double jitter = 0.005;     ///< point noise, fraction of the character size
    double speed = 1.0;        ///< sampling-density exponent along each stroke
    double direction = 0.0;    ///< preferred pen direction in radians
    double aspect = 1.0;       ///< width / height stretch
};

struct StyleBounds {
    double lo, hi;
};

/// Bounds every generated style parameter stays within.
struct WriterStyleBounds {
    StyleBounds slant{-0.45, 0.45};
    StyleBounds curvature{-0.3, 0.3};
    StyleBounds length_scale{0.7, 1.3};
    StyleBounds jitter{0.002, 0.012};
    StyleBounds speed{0.6, 1.8};
    StyleBounds direction{0.0, 2.0 * std::numbers::pi};
    StyleBounds aspect{0.8, 1.25};
};

inline bool within_bounds(const WriterStyle& s, const WriterStyleBounds& b = {}) {
    auto in = [](double v, StyleBounds r) { return v >= r.lo && v <= r.hi; };
    return in(s.slant, b.slant) && in(s.curvature, b.curvature) && in(s.length_scale, b.length_scale) &&
           in(s.jitter, b.jitter) && in(s.speed, b.speed) && in(s.direction, b.direction) && in(s.aspect, b.aspect);
}

/// Styles for `count` writers, stratified per parameter: each parameter's
/// range is cut into `count` bins, every writer gets a different bin
/// (independently permuted per parameter) and a point near its middle.
inline std::vector<WriterStyle> draw_writer_styles(int count, Rng& rng, const WriterStyleBounds& b = {}) {
    if (count < 1) throw InvalidInput("draw_writer_styles: count must be >= 1");
    std::vector<WriterStyle> styles(static_cast<std::size_t>(count));
    auto assign = [&](double WriterStyle::*field, StyleBounds r) {
        std::vector<int> perm(static_cast<std::size_t>(count));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int i = 0; i < count; ++i) {
            const double u = (perm[i] + 0.5 + uniform(rng, -0.25, 0.25)) / count;
            styles[i].*field = r.lo + u * (r.hi - r.lo);
        }
    };
    assign(&WriterStyle::slant, b.slant);
    assign(&WriterStyle::curvature, b.curvature);
    assign(&WriterStyle::length_scale, b.length_scale);
    assign(&WriterStyle::jitter, b.jitter);
    assign(&WriterStyle::speed, b.speed);
    assign(&WriterStyle::direction, b.direction);
    assign(&WriterStyle::aspect, b.aspect);
    return styles;
}

/// A character class: strokes as control polylines in the unit square.
struct CharTemplate {
    std::string label;
    std::vector<std::vector<std::pair<double, double>>> strokes;
};

inline std::vector<CharTemplate> make_templates(int count, Rng& rng, int min_strokes = 3, int max_strokes = 10) {
    std::vector<CharTemplate> out;
    for (int c = 0; c < count; ++c) {
        CharTemplate t;
        char label[32];
        std::snprintf(label, sizeof label, "c%04d", c);
        t.label = label;
        const int n = min_strokes + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(max_strokes - min_strokes + 1)));
        for (int s = 0; s < n; ++s) {
            std::vector<std::pair<double, double>> poly;
            double x = uniform(rng, 0.15, 0.85), y = uniform(rng, 0.15, 0.85);
            poly.emplace_back(x, y);
            const int segs = 1 + static_cast<int>(uniform_index(rng, 2));
            double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi);
            for (int k = 0; k < segs; ++k) {
                const double len = uniform(rng, 0.15, 0.4);
                x = std::clamp(x + len * std::cos(ang), 0.0, 1.0);
                y = std::clamp(y + len * std::sin(ang), 0.0, 1.0);
                poly.emplace_back(x, y);
                ang += uniform(rng, -2.0, 2.0);
            }
            t.strokes.push_back(std::move(poly));
        }
        out.push_back(std::move(t));
    }
    return out;
}

/// Writes one template in a writer's style. Coordinates come out as integer
/// tablet units (0..1000 range before slant), as a digitizer would report.
inline InkCharacter write_character(const CharTemplate& tpl, const WriterStyle& style, const std::string& writer_id,
                                    Rng& rng) {
    constexpr double kUnits = 1000.0;
    std::normal_distribution<double> noise(0.0, 1.0);
    const double pref_x = std::cos(style.direction), pref_y = std::sin(style.direction);

    InkCharacter ch;
    ch.writer_id = writer_id;
    ch.char_label = tpl.label;
    for (const auto& ctrl : tpl.strokes) {
        auto poly = ctrl;
        // Stroke length habit: scale about the stroke midpoint.
        double mx = 0, my = 0;
        for (auto [x, y] : poly) mx += x, my += y;
        mx /= static_cast<double>(poly.size());
        my /= static_cast<double>(poly.size());
        for (auto& [x, y] : poly) {
            x = mx + (x - mx) * style.length_scale;
            y = my + (y - my) * style.length_scale;
        }
        // Direction habit: draw the stroke so its net displacement points
        // along the preferred direction, most of the time.
        const double ex = poly.back().first - poly.front().first;
        const double ey = poly.back().second - poly.front().second;
        const bool against = ex * pref_x + ey * pref_y < 0.0;
        if (against != (uniform(rng, 0.0, 1.0) < 0.1)) std::reverse(poly.begin(), poly.end());

        Stroke st;
        for (std::size_t seg = 1; seg < poly.size(); ++seg) {
            const auto [ax, ay] = poly[seg - 1];
            const auto [bx, by] = poly[seg];
            const double len = std::hypot(bx - ax, by - ay);
            const double nx = len > 0 ? -(by - ay) / len : 0.0, ny = len > 0 ? (bx - ax) / len : 0.0;
            const int samples = std::max(3, static_cast<int>(len * 40.0));
            for (int i = (seg == 1 ? 0 : 1); i <= samples; ++i) {
                const double u = std::pow(static_cast<double>(i) / samples, style.speed);
                const double bow = style.curvature * len * std::sin(std::numbers::pi * u);
                double x = ax + u * (bx - ax) + bow * nx;
                double y = ay + u * (by - ay) + bow * ny;
                x += style.slant * (0.5 - y);
                x = 0.5 + (x - 0.5) * style.aspect;
                x += style.jitter * noise(rng);
                y += style.jitter * noise(rng);
                st.points.push_back({std::round(x * kUnits), std::round(y * kUnits), 0});
            }
        }
        // Drop consecutive duplicates left by rounding.
        st.points.erase(std::unique(st.points.begin(), st.points.end(),
                                    [](const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }),
                        st.points.end());
        ch.strokes.push_back(std::move(st));
    }
    reindex_timestamps(ch);
    return ch;
}

inline Corpus synth_corpus(const std::vector<WriterStyle>& styles, int chars_per_writer, Rng& rng) {
    if (chars_per_writer < 1) throw InvalidInput("synth_corpus: chars_per_writer must be >= 1");
    const auto templates = make_templates(chars_per_writer, rng);
    Corpus corpus{{}, "synthetic"};
    for (std::size_t w = 0; w < styles.size(); ++w) {
        char id[32];
        std::snprintf(id, sizeof id, "w%03zu", w);
        for (const auto& tpl : templates) corpus.characters.push_back(write_character(tpl, styles[w], id, rng));
    }
    return corpus;
}

/// `num_writers` stratified writers, each writing the same
/// `chars_per_writer` character classes once.
inline Corpus synth_corpus(int num_writers, int chars_per_writer, Rng& rng) {
    const auto styles = draw_writer_styles(num_writers, rng);
    return synth_corpus(styles, chars_per_writer, rng);
}

} // namespace inksig
