#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

#include <inksig/dataset.hpp>
#include <inksig/rasterize.hpp>

#include "test_support.hpp"

using namespace inksig;

namespace {

void put16(std::vector<std::uint8_t>& b, int v) {
    b.push_back(static_cast<std::uint8_t>(v & 0xFF));
    b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

/// One sample: tag b0 a1 00 00, one stroke (10,20) -> (-30,400).
std::vector<std::uint8_t> hand_built_sample() {
    std::vector<std::uint8_t> b;
    put16(b, 8 + 2 * 4 + 4 + 4); // header + 2 points + stroke end + sample end
    b.insert(b.end(), {0xb0, 0xa1, 0x00, 0x00});
    put16(b, 1);
    put16(b, 10), put16(b, 20);
    put16(b, -30), put16(b, 400);
    put16(b, -1), put16(b, 0);
    put16(b, -1), put16(b, -1);
    return b;
}

} // namespace

TEST(Pot, ParsesHandBuiltSample) {
    const auto bytes = hand_built_sample();
    ASSERT_EQ(bytes.size(), 24u);
    const auto c = parse_pot(bytes, "writer7");
    ASSERT_EQ(c.characters.size(), 1u);
    const auto& ch = c.characters[0];
    EXPECT_EQ(ch.writer_id, "writer7");
    EXPECT_EQ(ch.char_label, "b0a10000");
    ASSERT_EQ(ch.strokes.size(), 1u);
    ASSERT_EQ(ch.strokes[0].points.size(), 2u);
    EXPECT_EQ(ch.strokes[0].points[0].x, 10);
    EXPECT_EQ(ch.strokes[0].points[0].y, 20);
    EXPECT_EQ(ch.strokes[0].points[1].x, -30);
    EXPECT_EQ(ch.strokes[0].points[1].y, 400);
    EXPECT_EQ(c.provenance, "pot");
    EXPECT_EQ(serialize_pot(c.characters), bytes);
}

TEST(Pot, SwappedTagOrder) {
    const auto c = parse_pot(hand_built_sample(), "w", {true});
    EXPECT_EQ(c.characters[0].char_label, "a1b00000");
    EXPECT_EQ(serialize_pot(c.characters, {true}), hand_built_sample());
}

TEST(Pot, RoundTripsMultiSampleStream) {
    Rng rng(2);
    std::vector<InkCharacter> chars;
    for (int i = 0; i < 20; ++i) {
        InkCharacter ch;
        ch.writer_id = "w";
        ch.char_label = "0000" + std::string(1, "0123456789abcdef"[i % 16]) + "abc";
        const int n = 1 + static_cast<int>(uniform_index(rng, 6));
        for (int s = 0; s < n; ++s) {
            Stroke st;
            const int m = 1 + static_cast<int>(uniform_index(rng, 20));
            for (int p = 0; p < m; ++p)
                st.points.push_back({std::round(uniform(rng, 0, 30000)), std::round(uniform(rng, -30000, 30000)), p});
            ch.strokes.push_back(st);
        }
        chars.push_back(ch);
    }
    const auto bytes = serialize_pot(chars);
    const auto back = parse_pot(bytes, "w");
    EXPECT_EQ(back.characters, chars);
}

TEST(Pot, SizeMismatchNamesOffset) {
    auto two = hand_built_sample();
    auto second = hand_built_sample();
    second[0] = 28; // claims 4 more bytes than the content
    second.insert(second.end(), {0, 0, 0, 0});
    two.insert(two.end(), second.begin(), second.end());
    try {
        parse_pot(two, "w");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 24u);
        EXPECT_NE(std::string(e.what()).find("offset 24"), std::string::npos);
    }
}

TEST(Pot, StrokeCountMismatch) {
    auto b = hand_built_sample();
    b[6] = 2;
    EXPECT_THROW(parse_pot(b, "w"), ParseError);
}

TEST(Pot, TruncatedStream) {
    auto b = hand_built_sample();
    b.resize(b.size() - 2);
    EXPECT_THROW(parse_pot(b, "w"), ParseError);
    EXPECT_THROW(parse_pot(std::vector<std::uint8_t>{1, 0, 0}, "w"), ParseError);
}

TEST(Pot, MissingTerminator) {
    auto b = hand_built_sample();
    // Replace the (-1,-1) terminator with an ordinary point.
    b[20] = 5, b[21] = 0, b[22] = 5, b[23] = 0;
    EXPECT_THROW(parse_pot(b, "w"), ParseError);
}

TEST(Jsonl, RoundTripsIntegerAndDecimalCoordinates) {
    Corpus c;
    c.characters.push_back(make_char({{{1, 2}, {3, 4}}, {{5.25, -6.125}, {0.1, 1e-7}, {123456.789, 2.0 / 3.0}}}, "wa", "ca"));
    c.characters.push_back(make_char({{{7, 7}}}, "wb", "中"));
    std::stringstream ss;
    write_jsonl(ss, c.characters);
    const std::string text = ss.str();
    EXPECT_NE(text.find("[[[1,2],[3,4]]"), std::string::npos);
    const auto back = parse_jsonl(ss);
    EXPECT_EQ(back.characters, c.characters);
    EXPECT_EQ(back.provenance, "jsonl");
}

TEST(Jsonl, ErrorsCarryLineNumber) {
    std::stringstream ss;
    ss << R"({"writer":"w","char":"c","strokes":[[[0,0]]]})" << "\n\n" << R"({"writer":"w","strokes":[]})" << "\n";
    try {
        parse_jsonl(ss);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 3u);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    std::stringstream empty_stroke(R"({"writer":"w","char":"c","strokes":[[]]})");
    EXPECT_THROW(parse_jsonl(empty_stroke), ParseError);
    std::stringstream bad_point(R"({"writer":"w","char":"c","strokes":[[[1,2,3]]]})");
    EXPECT_THROW(parse_jsonl(bad_point), ParseError);
}

TEST(StrokeStats, FiveStrokeFixture) {
    const std::vector<InkCharacter> one{n_stroke_char(5)};
    const auto with = stroke_stats(one, true);
    EXPECT_EQ(with.total, 31u);
    const std::map<int, std::uint64_t> expect{{1, 5}, {2, 10}, {3, 10}, {4, 5}, {5, 1}};
    EXPECT_EQ(with.histogram, expect);
    const auto without = stroke_stats(one, false);
    EXPECT_EQ(without.total, 1u);
    EXPECT_EQ(without.histogram, (std::map<int, std::uint64_t>{{5, 1}}));
}

TEST(StrokeStats, SyntheticTotalsMatchEnumeration) {
    Rng rng(3);
    std::vector<InkCharacter> chars;
    for (int i = 0; i < 100; ++i) chars.push_back(n_stroke_char(1 + static_cast<int>(uniform_index(rng, 10))));
    std::uint64_t enumerated = 0;
    std::map<int, std::uint64_t> by_count, raw;
    for (const auto& ch : chars) {
        ++raw[static_cast<int>(ch.strokes.size())];
        for (const auto& v : enumerate_variants(ch)) {
            ++enumerated;
            ++by_count[static_cast<int>(v.strokes.size())];
        }
    }
    const auto with = stroke_stats(chars, true);
    EXPECT_EQ(with.total, enumerated);
    EXPECT_EQ(with.histogram, by_count);
    const auto without = stroke_stats(chars, false);
    EXPECT_EQ(without.histogram, raw);
    EXPECT_EQ(without.total, 100u);
}

TEST(Split, ClassDisjointAndCoversCorpus) {
    Rng rng(4);
    const auto corpus = synth_corpus(4, 30, rng);
    const auto spec = random_class_split(corpus, 20, 11);
    EXPECT_EQ(spec.train_classes.size(), 20u);
    EXPECT_EQ(spec.test_classes.size(), 10u);
    const auto r = make_split(corpus, spec);
    EXPECT_EQ(r.train.characters.size() + r.test.characters.size(), corpus.characters.size());
    for (const auto& ch : r.train.characters) EXPECT_FALSE(spec.test_classes.contains(ch.char_label));
    for (const auto& ch : r.test.characters) EXPECT_FALSE(spec.train_classes.contains(ch.char_label));
    EXPECT_EQ(r.train.writers(), corpus.writers());
    EXPECT_EQ(r.test.writers(), corpus.writers());
    EXPECT_TRUE(r.warnings.empty());
    EXPECT_EQ(random_class_split(corpus, 20, 11).train_classes, spec.train_classes);
}

TEST(Split, WarnsAboutUnidentifiableWriter) {
    Corpus c;
    c.characters.push_back(make_char({{{0, 0}}}, "a", "x"));
    c.characters.push_back(make_char({{{0, 0}}}, "a", "y"));
    c.characters.push_back(make_char({{{0, 0}}}, "b", "y"));
    const auto r = make_split(c, SplitSpec{{"x"}, {"y"}, 0});
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("'b'"), std::string::npos);
}

TEST(Split, RejectsOverlapAndOversizedRequests) {
    Corpus c;
    c.characters.push_back(make_char({{{0, 0}}}, "a", "x"));
    EXPECT_THROW(make_split(c, SplitSpec{{"x"}, {"x"}, 0}), ConfigError);
    EXPECT_THROW(random_class_split(c, 2, 0), ConfigError);
}

TEST(Corpus, GroupByFollowsWriterTable) {
    Corpus c;
    c.characters.push_back(make_char({{{0, 0}}}, "b", "x"));
    c.characters.push_back(make_char({{{0, 0}}}, "a", "x"));
    c.characters.push_back(make_char({{{1, 0}}}, "b", "y"));
    EXPECT_EQ(c.writers(), (std::vector<std::string>{"b", "a"}));
    const auto g = c.group_by({"a", "b"});
    ASSERT_EQ(g.size(), 2u);
    EXPECT_EQ(g[0].size(), 1u);
    EXPECT_EQ(g[1].size(), 2u);
    const auto only_a = c.group_by({"a"});
    ASSERT_EQ(only_a.size(), 1u);
    EXPECT_EQ(only_a[0].size(), 1u);
}

TEST(Synth, SameSeedSameCorpus) {
    Rng a(9), b(9);
    const auto ca = synth_corpus(3, 12, a);
    const auto cb = synth_corpus(3, 12, b);
    EXPECT_EQ(ca.characters, cb.characters);
    EXPECT_EQ(ca.characters.size(), 36u);
    for (const auto& ch : ca.characters) {
        EXPECT_GE(ch.strokes.size(), 3u);
        EXPECT_LE(ch.strokes.size(), 10u);
        EXPECT_NO_THROW(validate(ch));
    }
}

TEST(Synth, StylesWithinBoundsOverManyDraws) {
    Rng rng(10);
    const WriterStyleBounds bounds;
    int drawn = 0;
    while (drawn < 10000) {
        for (const auto& s : draw_writer_styles(100, rng)) ASSERT_TRUE(within_bounds(s, bounds));
        drawn += 100;
    }
}

TEST(Synth, SignatureLevelOneMeansSeparateExtremeWriters) {
    // Two writers at opposite corners of the style space.
    const WriterStyleBounds b;
    WriterStyle lo{b.slant.lo, b.curvature.lo, b.length_scale.lo, b.jitter.lo, b.speed.lo, 0.0, b.aspect.lo};
    WriterStyle hi{b.slant.hi, b.curvature.hi, b.length_scale.hi, b.jitter.lo, b.speed.hi, std::numbers::pi, b.aspect.hi};
    Rng rng(12);
    const auto corpus = synth_corpus({lo, hi}, 100, rng);
    const auto split = make_split(corpus, random_class_split(corpus, 50, 1));

    // Feature: mean of the two level-1 channels over the trace.
    auto feature = [](const InkCharacter& raw) {
        const auto t = render(normalize(raw), 1);
        double sx = 0, sy = 0, n = 0;
        for (std::size_t p = 0; p < t.plane(); ++p)
            if (t.values[p] != 0.0) sx += t.values[t.plane() + p], sy += t.values[2 * t.plane() + p], ++n;
        return std::pair{sx / n, sy / n};
    };
    const auto writers = corpus.writers();
    std::array<std::pair<double, double>, 2> centroid{};
    std::array<int, 2> count{};
    for (const auto& ch : split.train.characters) {
        const int w = ch.writer_id == writers[0] ? 0 : 1;
        const auto [x, y] = feature(ch);
        centroid[w].first += x, centroid[w].second += y, ++count[w];
    }
    for (int w = 0; w < 2; ++w) centroid[w].first /= count[w], centroid[w].second /= count[w];
    int correct = 0;
    for (const auto& ch : split.test.characters) {
        const auto [x, y] = feature(ch);
        auto d = [&](int w) { return std::hypot(x - centroid[w].first, y - centroid[w].second); };
        const int guess = d(0) <= d(1) ? 0 : 1;
        correct += guess == (ch.writer_id == writers[0] ? 0 : 1);
    }
    EXPECT_GT(static_cast<double>(correct) / static_cast<double>(split.test.characters.size()), 0.9);
}
