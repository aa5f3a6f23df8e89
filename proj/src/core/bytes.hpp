#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "core/common.hpp"

namespace msce {

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

inline void put_u16le(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_i16le(std::string& out, std::int16_t v) { put_u16le(out, static_cast<std::uint16_t>(v)); }

inline void put_f32le(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32le(out, bits);
}

// Bounds-checked little-endian cursor over a byte buffer. Underflow raises a
// data error; protocol-level consumers check sizes up front.
struct ByteReader {
    const unsigned char* p = nullptr;
    std::size_t size = 0;
    std::size_t pos = 0;

    ByteReader(const void* data, std::size_t n)
        : p(static_cast<const unsigned char*>(data)), size(n) {}

    std::size_t remaining() const { return size - pos; }
    bool has(std::size_t n) const { return remaining() >= n; }

    void need(std::size_t n) const {
        if (!has(n)) fail_data("unexpected end of data");
    }

    std::uint8_t u8() {
        need(1);
        return p[pos++];
    }
    std::uint16_t u16le() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32le() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64le() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::int16_t i16le() { return static_cast<std::int16_t>(u16le()); }
    float f32le() {
        std::uint32_t bits = u32le();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    const unsigned char* bytes(std::size_t n) {
        need(n);
        const unsigned char* out = p + pos;
        pos += n;
        return out;
    }
    void skip(std::size_t n) {
        need(n);
        pos += n;
    }
};

}  // namespace msce
