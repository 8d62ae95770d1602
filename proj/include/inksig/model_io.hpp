#pragma once

// Versioned binary model file.
//
//   "INKSIG01"                      8 bytes
//   u32 input_channels, u32 writers, u32 layer_count
//   per layer:  u8 kind, u8 activation, u32 kernel, u32 stride, u32 out,
//               u32 in_c, in_h, in_w, u32 out_c, out_h, out_w, f32 dropout
//   per weighted layer, in layer order: f32 weights[], f32 bias[]
//
// All integers and floats little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cnn.hpp"
#include "error.hpp"

namespace inksig {

inline constexpr char kModelMagic[8] = {'I', 'N', 'K', 'S', 'I', 'G', '0', '1'};

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}

    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, b_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t offset() const noexcept { return pos_; }
    bool at_end() const noexcept { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw ParseError("model file truncated", pos_);
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

} // namespace detail

template <class T>
std::vector<std::uint8_t> serialize_model(const Network<T>& net) {
    detail::ByteWriter w;
    w.raw(kModelMagic, sizeof kModelMagic);
    const auto& spec = net.spec();
    const auto& shapes = net.shapes();
    w.u32(static_cast<std::uint32_t>(spec.input_channels));
    w.u32(static_cast<std::uint32_t>(spec.num_writers));
    w.u32(static_cast<std::uint32_t>(spec.layers.size()));
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        w.u8(static_cast<std::uint8_t>(l.kind));
        w.u8(static_cast<std::uint8_t>(l.activation));
        w.u32(static_cast<std::uint32_t>(l.kernel));
        w.u32(static_cast<std::uint32_t>(l.stride));
        w.u32(static_cast<std::uint32_t>(l.out));
        for (const Shape& s : {shapes[i], shapes[i + 1]}) {
            w.u32(static_cast<std::uint32_t>(s.c));
            w.u32(static_cast<std::uint32_t>(s.h));
            w.u32(static_cast<std::uint32_t>(s.w));
        }
        w.f32(static_cast<float>(l.dropout));
    }
    for (const auto& p : net.params()) {
        for (T v : p.weights) w.f32(static_cast<float>(v));
        for (T v : p.bias) w.f32(static_cast<float>(v));
    }
    return w.bytes();
}

template <class T>
Network<T> deserialize_model(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    char magic[8];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kModelMagic, sizeof magic) != 0) throw ParseError("not an INKSIG01 model file", 0);

    NetworkSpec spec;
    spec.input_channels = static_cast<int>(r.u32());
    spec.num_writers = static_cast<int>(r.u32());
    const std::uint32_t n_layers = r.u32();
    if (n_layers == 0 || n_layers > 1024) throw ParseError("implausible layer count", r.offset() - 4);
    std::vector<Shape> stored;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const std::size_t at = r.offset();
        LayerSpec l;
        const auto kind = r.u8();
        if (kind < 1 || kind > 4) throw ParseError("unknown layer kind tag", at);
        l.kind = static_cast<LayerKind>(kind);
        const auto act = r.u8();
        if (act > 1) throw ParseError("unknown activation tag", at + 1);
        l.activation = static_cast<Activation>(act);
        l.kernel = static_cast<int>(r.u32());
        l.stride = static_cast<int>(r.u32());
        l.out = static_cast<int>(r.u32());
        Shape in{}, out{};
        for (Shape* s : {&in, &out}) {
            s->c = static_cast<int>(r.u32());
            s->h = static_cast<int>(r.u32());
            s->w = static_cast<int>(r.u32());
        }
        l.dropout = static_cast<double>(r.f32());
        if (i == 0) {
            spec.input_size = in.h;
            stored.push_back(in);
        }
        stored.push_back(out);
        spec.layers.push_back(l);
    }
    std::vector<Shape> shapes;
    try {
        shapes = infer_shapes(spec);
    } catch (const InvalidInput& e) {
        throw ParseError(std::string("inconsistent layer table: ") + e.what(), r.offset());
    }
    if (shapes != stored) throw ParseError("stored layer dimensions disagree with the layer table", r.offset());

    // Size the parameter blocks by instantiating the topology, then fill them.
    std::vector<LayerParams<T>> params(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        if (!l.has_weights()) continue;
        const std::size_t fan_in = l.kind == LayerKind::conv
                                       ? static_cast<std::size_t>(shapes[i].c) * l.kernel * l.kernel
                                       : shapes[i].size();
        params[i].weights.resize(fan_in * static_cast<std::size_t>(l.out));
        params[i].bias.resize(static_cast<std::size_t>(l.out));
        for (auto& v : params[i].weights) v = static_cast<T>(r.f32());
        for (auto& v : params[i].bias) v = static_cast<T>(r.f32());
    }
    if (!r.at_end()) throw ParseError("trailing bytes after weight blocks", r.offset());
    return Network<T>(std::move(spec), std::move(params));
}

template <class T>
void save_model(const Network<T>& net, const std::filesystem::path& path) {
    detail::write_file(path, serialize_model(net));
}

template <class T = float>
Network<T> load_model(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    return deserialize_model<T>(bytes);
}

} // namespace inksig
