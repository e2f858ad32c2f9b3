#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "ficabu/io.hpp"
#include "ficabu/tensor.hpp"

using namespace ficabu;

TEST(TensorRecord, F32RoundtripIsByteExact) {
    Tensor t({2, 3}, {0.5f, -1.25f, 3e-7f, 1e20f, 0.0f, -0.0f});
    std::ostringstream os1, os2;
    io::write_tensor(os1, t);
    std::istringstream is(os1.str());
    Tensor back = io::read_tensor_f32(is);
    EXPECT_EQ(back.shape, t.shape);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        EXPECT_EQ(std::memcmp(&back.data[i], &t.data[i], 4), 0);
    }
    io::write_tensor(os2, back);
    EXPECT_EQ(os1.str(), os2.str());
}

TEST(TensorRecord, I8RoundtripKeepsScale) {
    QuantizedTensor q;
    q.shape = {4};
    q.data = {-127, -1, 0, 127};
    q.scale = 0.013f;
    std::ostringstream os;
    io::write_tensor(os, q);
    std::istringstream is(os.str());
    io::TensorRecord rec = io::read_tensor(is);
    ASSERT_EQ(rec.dtype, io::kDtypeI8);
    EXPECT_EQ(rec.i8.data, q.data);
    EXPECT_EQ(rec.i8.scale, q.scale);
}

TEST(TensorRecord, BadMagicThrows) {
    std::istringstream is("NOPE rest does not matter");
    EXPECT_THROW(io::read_tensor(is), FormatError);
}

TEST(TensorRecord, TruncatedPayloadThrows) {
    Tensor t({8}, std::vector<float>(8, 1.0f));
    std::ostringstream os;
    io::write_tensor(os, t);
    std::string bytes = os.str();
    std::istringstream is(bytes.substr(0, bytes.size() - 5));
    EXPECT_THROW(io::read_tensor(is), FormatError);
}

TEST(TensorRecord, UnsupportedVersionThrows) {
    Tensor t({1}, {1.0f});
    std::ostringstream os;
    io::write_tensor(os, t);
    std::string bytes = os.str();
    bytes[4] = 9;  // version lives right after the magic
    std::istringstream is(bytes);
    EXPECT_THROW(io::read_tensor(is), FormatError);
}

TEST(TensorRecord, ImplausibleElementCountRejected) {
    std::ostringstream os;
    os.write("FCBU", 4);
    io::write_u16(os, io::kTensorVersion);
    io::write_u8(os, io::kDtypeF32);
    io::write_u8(os, 3);  // rank
    io::write_u32(os, 0xffffffffu);
    io::write_u32(os, 0xffffffffu);
    io::write_u32(os, 0xffffffffu);
    std::istringstream is(os.str());
    EXPECT_THROW(io::read_tensor(is), FormatError);
}

TEST(LittleEndian, ScalarHelpers) {
    std::ostringstream os;
    io::write_u32(os, 0x01020304u);
    std::string b = os.str();
    EXPECT_EQ(static_cast<unsigned char>(b[0]), 0x04);
    EXPECT_EQ(static_cast<unsigned char>(b[3]), 0x01);
    std::istringstream is(b);
    EXPECT_EQ(io::read_u32(is), 0x01020304u);
}
