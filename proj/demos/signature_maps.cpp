// Draws a three-stroke character, prints the signature of each stroke and
// writes the Sign.2 feature maps of the whole character as PGM images.
//
//   signature_maps [out_dir]

#include <cstdio>
#include <filesystem>

#include <inksig/dropstroke.hpp>
#include <inksig/rasterize.hpp>
#include <inksig/signature.hpp>

using namespace inksig;

int main(int argc, char** argv) {
    const std::filesystem::path out = argc > 1 ? argv[1] : "signature_maps";
    std::filesystem::create_directories(out);

    InkCharacter ch;
    ch.writer_id = "demo";
    ch.char_label = "ka";
    ch.strokes = {Stroke{{{10, 30, 0}, {60, 25, 1}, {55, 80, 2}}},
                  Stroke{{{30, 5, 0}, {35, 95, 1}}},
                  Stroke{{{70, 20, 0}, {90, 50, 1}, {75, 70, 2}}}};

    for (std::size_t s = 0; s < ch.strokes.size(); ++s) {
        const auto sig = path_signature(ch.strokes[s], 2);
        std::printf("stroke %zu: S^x=%.2f S^y=%.2f S^xx=%.1f S^xy=%.1f S^yx=%.1f S^yy=%.1f\n", s, sig.word({1}),
                    sig.word({2}), sig.word({1, 1}), sig.word({1, 2}), sig.word({2, 1}), sig.word({2, 2}));
    }

    const auto norm = normalize(ch);
    const auto maps = render(norm, 2);
    const auto files = export_images(maps, out, "ka");
    std::printf("%d channels at %dx%d, %zu images in %s\n", maps.channels, maps.width, maps.height, files.size(),
                out.string().c_str());

    // Every non-empty stroke subset, as used for DropStroke test averaging.
    const auto variants = enumerate_variants(ch);
    std::printf("%zu DropStroke variants\n", variants.size());
    for (std::size_t v = 0; v < variants.size(); ++v) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "variant%zu", v);
        export_images(render(normalize(variants[v]), 0), out, stem);
    }
}
