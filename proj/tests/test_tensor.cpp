#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "emoflow/errors.hpp"
#include "emoflow/rng.hpp"
#include "emoflow/tensor.hpp"
#include "emoflow/tensor_io.hpp"

using namespace emoflow;

TEST_CASE("tensor shape/data consistency enforced") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
    Tensor t = Tensor::zeros({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
}

TEST_CASE("from_rows and accessors") {
    Tensor m = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
    CHECK(m.at(1, 2) == 6.0);
    CHECK(m.shape_str() == "[2x3]");
}

TEST_CASE("TNSR golden byte layout") {
    // rank-1 [2] tensor holding {1.0, -2.0}
    Tensor t({2}, {1.0, -2.0});
    auto bytes = encode_tnsr(t);
    REQUIRE(bytes.size() == 4 + 4 + 8 + 16);
    CHECK(bytes[0] == 'T');
    CHECK(bytes[1] == 'N');
    CHECK(bytes[2] == 'S');
    CHECK(bytes[3] == 'R');
    // rank as little-endian u32
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    // dim 2 as little-endian u64
    CHECK(bytes[8] == 2);
    // 1.0 = 0x3FF0000000000000 little-endian
    CHECK(bytes[16] == 0x00);
    CHECK(bytes[22] == 0xF0);
    CHECK(bytes[23] == 0x3F);
    // -2.0 = 0xC000000000000000
    CHECK(bytes[31] == 0xC0);
}

TEST_CASE("TNSR round trip is bit exact for random tensors") {
    RngStream rng(99);
    for (int it = 0; it < 20; ++it) {
        std::vector<std::size_t> shape;
        const int rank = 1 + static_cast<int>(rng.below(3));
        for (int r = 0; r < rank; ++r) shape.push_back(1 + rng.below(5));
        Tensor t = Tensor::zeros(shape);
        for (auto& v : t.data) v = rng.normal();
        Tensor back = decode_tnsr(encode_tnsr(t));
        REQUIRE(back.shape == t.shape);
        for (std::size_t i = 0; i < t.data.size(); ++i) CHECK(back.data[i] == t.data[i]);
    }
}

TEST_CASE("TNSR file IO and truncation error") {
    const auto dir = std::filesystem::temp_directory_path() / "emoflow_tnsr_test";
    std::filesystem::create_directories(dir);
    Tensor t = Tensor::from_rows({{1.5, 2.5}, {3.5, 4.5}});
    write_tnsr(dir / "t.tnsr", t);
    Tensor back = read_tnsr(dir / "t.tnsr");
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);

    std::ofstream f(dir / "bad.tnsr", std::ios::binary | std::ios::trunc);
    f << "TNSR\x01";
    f.close();
    CHECK_THROWS_AS(read_tnsr(dir / "bad.tnsr"), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("named rng streams are independent and deterministic") {
    RngStream a = named_stream(7, "corpus");
    RngStream a2 = named_stream(7, "corpus");
    RngStream b = named_stream(7, "init");
    CHECK(a.next_u64() == a2.next_u64());
    RngStream c = named_stream(7, "corpus");
    CHECK(c.next_u64() != b.next_u64());
}

TEST_CASE("rng normal moments are sane") {
    RngStream rng(123);
    double sum = 0.0, sum_sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.01);
    CHECK(std::fabs(var - 1.0) < 0.02);
}
