#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "ficabu/errors.hpp"
#include "ficabu/tensor.hpp"

namespace ficabu::io {

// All on-disk integers are little-endian, floats are IEEE-754 binary32
// written byte-wise, independent of host endianness.

inline void write_u8(std::ostream& os, std::uint8_t v) {
    os.put(static_cast<char>(v));
}

inline void write_u16(std::ostream& os, std::uint16_t v) {
    os.put(static_cast<char>(v & 0xff));
    os.put(static_cast<char>((v >> 8) & 0xff));
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

inline std::uint8_t read_u8(std::istream& is) {
    int c = is.get();
    if (c == EOF) throw FormatError("truncated file");
    return static_cast<std::uint8_t>(c);
}

inline std::uint16_t read_u16(std::istream& is) {
    std::uint16_t v = read_u8(is);
    v |= static_cast<std::uint16_t>(read_u8(is)) << 8;
    return v;
}

inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(read_u8(is)) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(read_u8(is)) << (8 * i);
    return v;
}

inline float read_f32(std::istream& is) {
    std::uint32_t bits = read_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void expect_magic(std::istream& is, const char* magic) {
    char buf[4];
    is.read(buf, 4);
    if (is.gcount() != 4) throw FormatError("truncated file: missing magic");
    if (std::memcmp(buf, magic, 4) != 0) {
        throw FormatError(std::string("bad magic, expected ") + magic);
    }
}

inline constexpr std::uint16_t kTensorVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::uint8_t kDtypeI8 = 1;

/// Tensor record: "FCBU", u16 version, u8 dtype, u8 rank, rank*u32 dims,
/// payload, then (i8 only) f32 scale.
inline void write_tensor(std::ostream& os, const Tensor& t) {
    os.write("FCBU", 4);
    write_u16(os, kTensorVersion);
    write_u8(os, kDtypeF32);
    write_u8(os, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) write_u32(os, d);
    for (float v : t.data) write_f32(os, v);
}

inline void write_tensor(std::ostream& os, const QuantizedTensor& q) {
    os.write("FCBU", 4);
    write_u16(os, kTensorVersion);
    write_u8(os, kDtypeI8);
    write_u8(os, static_cast<std::uint8_t>(q.shape.size()));
    for (auto d : q.shape) write_u32(os, d);
    for (std::int8_t v : q.data) os.put(static_cast<char>(v));
    write_f32(os, q.scale);
}

struct TensorRecord {
    std::uint8_t dtype = kDtypeF32;
    Tensor f32;
    QuantizedTensor i8;
};

inline TensorRecord read_tensor(std::istream& is) {
    expect_magic(is, "FCBU");
    std::uint16_t version = read_u16(is);
    if (version != kTensorVersion) {
        throw FormatError("unsupported tensor record version " + std::to_string(version));
    }
    TensorRecord rec;
    rec.dtype = read_u8(is);
    if (rec.dtype != kDtypeF32 && rec.dtype != kDtypeI8) {
        throw FormatError("unknown tensor dtype " + std::to_string(rec.dtype));
    }
    std::uint8_t rank = read_u8(is);
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = read_u32(is);
    constexpr std::size_t kMaxElements = std::size_t{1} << 30;
    std::size_t n = 1;
    for (auto d : dims) {
        if (d != 0 && n > kMaxElements / d) {
            throw FormatError("tensor record declares an implausible element count");
        }
        n *= d;
    }
    if (rec.dtype == kDtypeF32) {
        rec.f32.shape = dims;
        rec.f32.data.resize(n);
        for (auto& v : rec.f32.data) v = read_f32(is);
    } else {
        rec.i8.shape = dims;
        rec.i8.data.resize(n);
        for (auto& v : rec.i8.data) {
            int c = is.get();
            if (c == EOF) throw FormatError("truncated tensor payload");
            v = static_cast<std::int8_t>(static_cast<unsigned char>(c));
        }
        rec.i8.scale = read_f32(is);
        if (!(rec.i8.scale > 0.0f)) throw FormatError("non-positive quantization scale");
    }
    return rec;
}

inline Tensor read_tensor_f32(std::istream& is) {
    TensorRecord rec = read_tensor(is);
    if (rec.dtype != kDtypeF32) throw FormatError("expected f32 tensor record");
    return std::move(rec.f32);
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open for reading: " + path);
    return is;
}

}  // namespace ficabu::io
